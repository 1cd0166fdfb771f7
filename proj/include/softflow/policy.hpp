#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "softflow/env.hpp"
#include "softflow/nn.hpp"
#include "softflow/rng.hpp"
#include "softflow/tape.hpp"

namespace softflow {

// Logit offset for invalid actions. Large enough that exp underflows to
// exactly zero after the row max is subtracted, small enough to stay finite.
inline constexpr double kInvalidActionLogit = -1e9;

// Forward policy P_F with a learned scalar logZ.
struct Policy {
  MlpParams mlp;
  Tensor log_z = Tensor::scalar(0.0);
  EnvKind env_kind = EnvKind::grid;
  int window = 8;  // size of the token window the sequence encoder sees
};

// Frozen reference policy. For the grid this is the analytic
// uniform-over-valid-actions policy; for sequences a frozen MLP.
struct PriorPolicy {
  bool analytic_uniform = true;
  MlpParams mlp;
  int window = 8;
};

// Two one-hot axis encodings, length 2H.
std::vector<double> encode_grid_state(const GridSpec& spec, const GridState& state);

// One-hot window of the last `window` tokens left-padded with a PAD symbol,
// plus normalized length; length window * (|vocab| + 1) + 1. Prefixes that
// agree on the window and length alias to the same encoding.
std::vector<double> encode_seq_state(const SeqSpec& spec, const SeqState& state, int window);

int encode_dim(const Env& env, int window);
std::vector<double> encode_state(const Env& env, const EnvState& state, int window);

// Log-probabilities over the full action space at a non-terminal state;
// invalid actions masked before normalization. exp of the valid entries sums
// to one.
std::vector<double> action_log_probs(const Policy& policy, const Env& env, const EnvState& state);

// Samples B trajectories in lockstep. Draw discipline: one uniform01 per
// still-active trajectory per round, in trajectory index order; actions
// picked by inverse CDF over action index.
std::vector<Trajectory> sample_batch(const Policy& policy, const Env& env, int batch,
                                     RngStream& rng);
Trajectory sample_trajectory(const Policy& policy, const Env& env, RngStream& rng);

// Sum of taken-action log-probabilities under the current parameters.
// Computed through the same graph the training losses differentiate.
double trajectory_log_pf(const Policy& policy, const Env& env, const Trajectory& traj);

// log P_B(tau | x); see Env::log_pb.
double trajectory_log_pb(const Env& env, const Trajectory& traj);

// Frozen-prior trajectory log-likelihoods (no gradients).
double prior_trajectory_log_pf(const PriorPolicy& prior, const Env& env, const Trajectory& traj);
std::vector<double> prior_batch_log_pf(const PriorPolicy& prior, const Env& env,
                                       std::span<const Trajectory> trajs);

// Policy parameters bound as named tape leaves ("w0".."bN" plus "logZ").
struct PolicyLeaves {
  MlpLeaves mlp;
  ValueId log_z = -1;
};

PolicyLeaves bind_policy_leaves(Tape& tape, const Policy& policy);

// Batched differentiable log P_F over a trajectory batch. Every decision
// state of every trajectory becomes one row of a single forward pass;
// per-trajectory sums come from a constant 0/1 segment matrix.
struct BatchLogPf {
  ValueId column = -1;   // [T,1] log P_F per trajectory
  ValueId chosen = -1;   // [N,1] per-decision chosen log-probabilities
  ValueId segments = -1; // [T,N] constant segment matrix leaf
};

BatchLogPf batch_log_pf_graph(Tape& tape, const Policy& policy, const PolicyLeaves& leaves,
                              const Env& env, std::span<const Trajectory> trajs);

// No-tape version of the same quantity (frozen scoring, evaluation).
std::vector<double> batch_log_pf(const Policy& policy, const Env& env,
                                 std::span<const Trajectory> trajs);

// Posterior warm-start (Algorithm step: initialize from the prior). For a
// network prior the parameters are copied bitwise; for the analytic uniform
// prior the final layer is zeroed so masked logits are exactly uniform.
Policy warm_start_policy(const PriorPolicy& prior, const Env& env,
                         const std::vector<int>& hidden_sizes, uint64_t seed);

}  // namespace softflow
