#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "softflow/tape.hpp"
#include "softflow/tensor.hpp"

namespace softflow {

enum class Activation { tanh, relu };

// Fully-connected network parameters. Weights are stored [fan_in, fan_out],
// biases [1, fan_out]. The hidden activation applies to every layer except
// the last, which stays linear (logits).
struct MlpParams {
  std::vector<int> layer_sizes;
  Activation activation = Activation::tanh;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int64_t parameter_count() const;
};

// Seeded initializer: weights uniform in +-sqrt(6 / (fan_in + fan_out)),
// drawn layer by layer in row-major order from one RngStream(seed); biases
// zero. Identical (layer_sizes, seed) gives bitwise-identical parameters.
MlpParams build_mlp(const std::vector<int>& layer_sizes, Activation activation, uint64_t seed);

// Named parameter leaves of one MLP on a tape ("w0", "b0", "w1", ...).
struct MlpLeaves {
  std::vector<ValueId> weights;
  std::vector<ValueId> biases;
};

MlpLeaves bind_mlp_leaves(Tape& tape, const MlpParams& params, const std::string& prefix = "");

// Graph forward through already-bound leaves; input is a [batch, in] node.
ValueId mlp_graph(Tape& tape, const MlpParams& params, const MlpLeaves& leaves, ValueId input);

// Spec-surface forward: records the computation on a fresh tape and returns
// (output, tape). The tape replays to the same output and carries the named
// parameter leaves.
std::pair<Tensor, Tape> mlp_forward(const MlpParams& params, const Tensor& input);

// No-tape forward for hot paths (sampling, frozen prior scoring).
Tensor mlp_logits(const MlpParams& params, const Tensor& input);

// Adam optimizer state for one parameter group. t counts completed updates.
struct AdamState {
  struct Moments {
    Tensor m;
    Tensor v;
  };
  std::map<std::string, Moments> moments;
  uint64_t t = 0;
};

// Mutable view of the parameters one optimizer group owns.
using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

// Standard bias-corrected Adam update; t increments by exactly one. Every
// named parameter must have a gradient of matching shape; a NaN/Inf gradient
// rejects the whole update (no partial mutation).
void adam_step(NamedParams& params, const GradientMap& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace softflow
