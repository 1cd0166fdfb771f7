#include "softflow/nn.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>

#include "softflow/rng.hpp"

namespace softflow {

namespace {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string weight_name(const std::string& prefix, size_t layer) {
  return prefix + "w" + std::to_string(layer);
}
std::string bias_name(const std::string& prefix, size_t layer) {
  return prefix + "b" + std::to_string(layer);
}

}  // namespace

int64_t MlpParams::parameter_count() const {
  int64_t n = 0;
  for (const Tensor& w : weights) n += w.size();
  for (const Tensor& b : biases) n += b.size();
  return n;
}

MlpParams build_mlp(const std::vector<int>& layer_sizes, Activation activation, uint64_t seed) {
  if (layer_sizes.size() < 2)
    throw std::invalid_argument("build_mlp: need at least two layer sizes");
  for (int s : layer_sizes) {
    if (s <= 0) throw std::invalid_argument("build_mlp: layer sizes must be positive");
  }
  MlpParams params;
  params.layer_sizes = layer_sizes;
  params.activation = activation;
  RngStream rng(seed);
  for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> w(static_cast<size_t>(fan_in) * fan_out);
    for (double& v : w) v = (2.0 * rng.uniform01() - 1.0) * bound;
    params.weights.emplace_back(std::vector<int>{fan_in, fan_out}, std::move(w));
    params.biases.push_back(Tensor::zeros({1, fan_out}));
  }
  return params;
}

MlpLeaves bind_mlp_leaves(Tape& tape, const MlpParams& params, const std::string& prefix) {
  MlpLeaves leaves;
  for (size_t l = 0; l < params.weights.size(); ++l) {
    leaves.weights.push_back(tape.leaf(params.weights[l], weight_name(prefix, l)));
    leaves.biases.push_back(tape.leaf(params.biases[l], bias_name(prefix, l)));
  }
  return leaves;
}

ValueId mlp_graph(Tape& tape, const MlpParams& params, const MlpLeaves& leaves, ValueId input) {
  ValueId h = input;
  for (size_t l = 0; l < params.weights.size(); ++l) {
    h = tape.add(tape.matmul(h, leaves.weights[l]), leaves.biases[l]);
    if (l + 1 < params.weights.size())
      h = params.activation == Activation::tanh ? tape.tanh(h) : tape.relu(h);
  }
  return h;
}

std::pair<Tensor, Tape> mlp_forward(const MlpParams& params, const Tensor& input) {
  if (!input.is_matrix() || input.cols() != params.input_dim())
    throw std::invalid_argument("mlp_forward: input shape " + input.shape_str() +
                                " does not match input dim " +
                                std::to_string(params.input_dim()));
  Tape tape;
  MlpLeaves leaves = bind_mlp_leaves(tape, params);
  ValueId x = tape.leaf(input);
  ValueId out = mlp_graph(tape, params, leaves, x);
  return {tape.value(out), std::move(tape)};
}

Tensor mlp_logits(const MlpParams& params, const Tensor& input) {
  if (!input.is_matrix() || input.cols() != params.input_dim())
    throw std::invalid_argument("mlp_logits: input shape " + input.shape_str() +
                                " does not match input dim " +
                                std::to_string(params.input_dim()));
  Tensor h = input;
  for (size_t l = 0; l < params.weights.size(); ++l) {
    const Tensor& w = params.weights[l];
    Tensor out = Tensor::zeros({h.rows(), w.cols()});
    {
      Eigen::Map<MatrixRM> o(out.values().data(), out.rows(), out.cols());
      Eigen::Map<const MatrixRM> mh(h.values().data(), h.rows(), h.cols());
      Eigen::Map<const MatrixRM> mw(w.values().data(), w.rows(), w.cols());
      o.noalias() = mh * mw;
      o.rowwise() += Eigen::Map<const MatrixRM>(params.biases[l].values().data(), 1, w.cols()).row(0);
    }
    if (l + 1 < params.weights.size()) {
      if (params.activation == Activation::tanh) {
        for (double& v : out.values()) v = std::tanh(v);
      } else {
        for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
      }
    }
    h = std::move(out);
  }
  return h;
}

void adam_step(NamedParams& params, const GradientMap& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
  if (lr <= 0.0) throw std::invalid_argument("adam_step: lr must be positive");
  // Validate everything before mutating anything.
  for (auto& [name, tensor] : params) {
    auto it = grads.find(name);
    if (it == grads.end())
      throw std::invalid_argument("adam_step: missing gradient for '" + name + "'");
    if (!it->second.same_shape(*tensor))
      throw std::invalid_argument("adam_step: gradient shape mismatch for '" + name + "'");
    for (double g : it->second.values()) {
      if (!std::isfinite(g))
        throw std::runtime_error("adam_step: non-finite gradient in '" + name + "'");
    }
  }
  const uint64_t t = state.t + 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (auto& [name, tensor] : params) {
    const Tensor& g = grads.at(name);
    auto [it, inserted] = state.moments.try_emplace(
        name, AdamState::Moments{Tensor::zeros(tensor->shape()), Tensor::zeros(tensor->shape())});
    AdamState::Moments& mom = it->second;
    if (!inserted && !mom.m.same_shape(*tensor))
      throw std::invalid_argument("adam_step: stale moment shape for '" + name + "'");
    auto& m = mom.m.values();
    auto& v = mom.v.values();
    auto& p = tensor->values();
    const auto& gv = g.values();
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * gv[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * gv[i] * gv[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
  state.t = t;
}

}  // namespace softflow
