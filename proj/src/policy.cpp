#include "softflow/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace softflow {

namespace {

// Shared row assembly for batched log P_F: one row per decision state.
struct BatchRows {
  Tensor features;          // [N, d]
  Tensor mask;              // [N, A]
  std::vector<int> actions; // chosen action per row
  int n_traj = 0;
  std::vector<int> traj_of; // row -> trajectory index
};

BatchRows assemble_rows(const Env& env, int window, std::span<const Trajectory> trajs) {
  const int dim = encode_dim(env, window);
  const int n_actions = env.action_count();
  size_t rows = 0;
  for (const Trajectory& t : trajs) {
    if (t.states.size() != t.actions.size() + 1)
      throw std::invalid_argument("batch_log_pf: malformed trajectory");
    rows += t.actions.size();
  }
  BatchRows out;
  out.n_traj = static_cast<int>(trajs.size());
  out.features = Tensor::zeros({static_cast<int>(rows), dim});
  out.mask = Tensor::zeros({static_cast<int>(rows), n_actions});
  out.actions.reserve(rows);
  out.traj_of.reserve(rows);
  size_t r = 0;
  for (size_t k = 0; k < trajs.size(); ++k) {
    const Trajectory& t = trajs[k];
    for (size_t i = 0; i < t.actions.size(); ++i) {
      const std::vector<double> f = encode_state(env, t.states[i], window);
      std::copy(f.begin(), f.end(), out.features.values().begin() + static_cast<long>(r) * dim);
      const std::vector<bool> mask = env.action_mask(t.states[i]);
      if (!mask[static_cast<size_t>(t.actions[i])])
        throw std::invalid_argument("batch_log_pf: action invalid at its state");
      for (int a = 0; a < n_actions; ++a) {
        if (!mask[static_cast<size_t>(a)])
          out.mask.at(static_cast<int>(r), a) = kInvalidActionLogit;
      }
      out.actions.push_back(t.actions[i]);
      out.traj_of.push_back(static_cast<int>(k));
      ++r;
    }
  }
  return out;
}

// Masked row log-softmax matching Tape::log_softmax_rows arithmetic exactly
// (max shift, then exp-sum in index order).
void masked_log_probs_row(const double* logits, const std::vector<bool>& mask, int n,
                          double* out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    const double v = logits[j] + (mask[static_cast<size_t>(j)] ? 0.0 : kInvalidActionLogit);
    out[j] = v;
    mx = std::max(mx, v);
  }
  double sum = 0.0;
  for (int j = 0; j < n; ++j) sum += std::exp(out[j] - mx);
  const double lse = mx + std::log(sum);
  for (int j = 0; j < n; ++j) out[j] -= lse;
}

int sample_from_log_probs(const std::vector<double>& lp, const std::vector<bool>& mask,
                          double u) {
  double cum = 0.0;
  int last_valid = -1;
  for (size_t j = 0; j < lp.size(); ++j) {
    if (!mask[j]) continue;
    last_valid = static_cast<int>(j);
    cum += std::exp(lp[j]);
    if (u < cum) return static_cast<int>(j);
  }
  if (last_valid < 0) throw std::logic_error("sample: no valid action");
  return last_valid;  // u landed in the rounding tail
}

}  // namespace

std::vector<double> encode_grid_state(const GridSpec& spec, const GridState& state) {
  if (!spec.in_bounds(state)) throw std::invalid_argument("encode_grid_state: out of bounds");
  std::vector<double> f(static_cast<size_t>(2 * spec.side), 0.0);
  f[static_cast<size_t>(state.x)] = 1.0;
  f[static_cast<size_t>(spec.side + state.y)] = 1.0;
  return f;
}

std::vector<double> encode_seq_state(const SeqSpec& spec, const SeqState& state, int window) {
  if (state.terminated) throw std::invalid_argument("encode_seq_state: terminal state");
  if (window < 1) throw std::invalid_argument("encode_seq_state: window must be >= 1");
  const int slot = static_cast<int>(spec.vocab.size()) + 1;  // vocab entries + PAD
  const int pad = slot - 1;
  std::vector<double> f(static_cast<size_t>(window * slot) + 1, 0.0);
  const int len = static_cast<int>(state.prefix.size());
  for (int i = 0; i < window; ++i) {
    const int pos = len - window + i;
    int idx = pad;
    if (pos >= 0) idx = spec.char_action(state.prefix[static_cast<size_t>(pos)]);
    f[static_cast<size_t>(i * slot + idx)] = 1.0;
  }
  f.back() = static_cast<double>(len) / spec.max_len;
  return f;
}

int encode_dim(const Env& env, int window) {
  if (env.kind() == EnvKind::grid) return 2 * env.grid().side;
  return window * (static_cast<int>(env.seq().vocab.size()) + 1) + 1;
}

std::vector<double> encode_state(const Env& env, const EnvState& state, int window) {
  if (env.kind() == EnvKind::grid) return encode_grid_state(env.grid(), std::get<GridState>(state));
  return encode_seq_state(env.seq(), std::get<SeqState>(state), window);
}

std::vector<double> action_log_probs(const Policy& policy, const Env& env, const EnvState& state) {
  if (env.is_terminal(state)) throw std::invalid_argument("action_log_probs: terminal state");
  const std::vector<double> f = encode_state(env, state, policy.window);
  const Tensor logits = mlp_logits(policy.mlp, Tensor({1, static_cast<int>(f.size())}, f));
  const std::vector<bool> mask = env.action_mask(state);
  std::vector<double> lp(static_cast<size_t>(env.action_count()));
  masked_log_probs_row(logits.values().data(), mask, env.action_count(), lp.data());
  return lp;
}

std::vector<Trajectory> sample_batch(const Policy& policy, const Env& env, int batch,
                                     RngStream& rng) {
  if (batch < 1) throw std::invalid_argument("sample_batch: batch must be >= 1");
  const int dim = encode_dim(env, policy.window);
  const int n_actions = env.action_count();

  struct Rollout {
    std::vector<EnvState> states;
    std::vector<int> actions;
    bool done = false;
  };
  std::vector<Rollout> rollouts(static_cast<size_t>(batch));
  for (auto& r : rollouts) r.states.push_back(env.initial_state());

  std::vector<int> active(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i) active[static_cast<size_t>(i)] = i;

  std::vector<double> lp(static_cast<size_t>(n_actions));
  while (!active.empty()) {
    Tensor features = Tensor::zeros({static_cast<int>(active.size()), dim});
    for (size_t r = 0; r < active.size(); ++r) {
      const Rollout& roll = rollouts[static_cast<size_t>(active[r])];
      const std::vector<double> f = encode_state(env, roll.states.back(), policy.window);
      std::copy(f.begin(), f.end(), features.values().begin() + static_cast<long>(r) * dim);
    }
    const Tensor logits = mlp_logits(policy.mlp, features);
    std::vector<int> still_active;
    for (size_t r = 0; r < active.size(); ++r) {
      Rollout& roll = rollouts[static_cast<size_t>(active[r])];
      const std::vector<bool> mask = env.action_mask(roll.states.back());
      masked_log_probs_row(logits.values().data() + static_cast<long>(r) * n_actions, mask,
                           n_actions, lp.data());
      const int action = sample_from_log_probs(lp, mask, rng.uniform01());
      roll.actions.push_back(action);
      roll.states.push_back(env.apply(roll.states.back(), action));
      if (env.is_terminal(roll.states.back())) roll.done = true;
      else still_active.push_back(active[r]);
    }
    active = std::move(still_active);
  }

  std::vector<Trajectory> out;
  out.reserve(static_cast<size_t>(batch));
  for (Rollout& roll : rollouts) {
    Trajectory t;
    t.kind = env.kind();
    t.states = std::move(roll.states);
    t.actions = std::move(roll.actions);
    t.terminal = env.terminal_of(t.states.back());
    t.reward_raw = env.reward_raw(t.terminal);
    t.feasible = env.feasible(t.terminal);
    out.push_back(std::move(t));
  }
  return out;
}

Trajectory sample_trajectory(const Policy& policy, const Env& env, RngStream& rng) {
  return sample_batch(policy, env, 1, rng)[0];
}

PolicyLeaves bind_policy_leaves(Tape& tape, const Policy& policy) {
  PolicyLeaves leaves;
  leaves.mlp = bind_mlp_leaves(tape, policy.mlp);
  leaves.log_z = tape.leaf(policy.log_z, "logZ");
  return leaves;
}

BatchLogPf batch_log_pf_graph(Tape& tape, const Policy& policy, const PolicyLeaves& leaves,
                              const Env& env, std::span<const Trajectory> trajs) {
  if (trajs.empty()) throw std::invalid_argument("batch_log_pf_graph: empty batch");
  BatchRows rows = assemble_rows(env, policy.window, trajs);
  const int n_rows = rows.features.rows();

  Tensor segments = Tensor::zeros({rows.n_traj, n_rows});
  for (int r = 0; r < n_rows; ++r) segments.at(rows.traj_of[static_cast<size_t>(r)], r) = 1.0;

  const ValueId x = tape.leaf(std::move(rows.features));
  const ValueId mask = tape.leaf(std::move(rows.mask));
  const ValueId logits = mlp_graph(tape, policy.mlp, leaves.mlp, x);
  const ValueId masked = tape.add(logits, mask);
  const ValueId log_probs = tape.log_softmax_rows(masked);
  const ValueId chosen = tape.gather_cols(log_probs, std::move(rows.actions));
  const ValueId seg = tape.leaf(std::move(segments));
  BatchLogPf out;
  out.column = tape.matmul(seg, chosen);
  out.chosen = chosen;
  out.segments = seg;
  return out;
}

std::vector<double> batch_log_pf(const Policy& policy, const Env& env,
                                 std::span<const Trajectory> trajs) {
  if (trajs.empty()) return {};
  BatchRows rows = assemble_rows(env, policy.window, trajs);
  const Tensor logits = mlp_logits(policy.mlp, rows.features);
  const int n_actions = env.action_count();
  std::vector<double> lp(static_cast<size_t>(n_actions));
  std::vector<double> sums(trajs.size(), 0.0);
  for (int r = 0; r < rows.features.rows(); ++r) {
    // Re-apply the mask stored as logit offsets.
    std::vector<bool> mask(static_cast<size_t>(n_actions));
    for (int a = 0; a < n_actions; ++a) mask[static_cast<size_t>(a)] = rows.mask.at(r, a) == 0.0;
    masked_log_probs_row(logits.values().data() + static_cast<long>(r) * n_actions, mask,
                         n_actions, lp.data());
    sums[static_cast<size_t>(rows.traj_of[static_cast<size_t>(r)])] +=
        lp[static_cast<size_t>(rows.actions[static_cast<size_t>(r)])];
  }
  return sums;
}

double trajectory_log_pf(const Policy& policy, const Env& env, const Trajectory& traj) {
  Tape tape;
  PolicyLeaves leaves = bind_policy_leaves(tape, policy);
  const Trajectory* ptr = &traj;
  BatchLogPf b = batch_log_pf_graph(tape, policy, leaves, env, std::span<const Trajectory>(ptr, 1));
  return tape.value(b.column).item();
}

double trajectory_log_pb(const Env& env, const Trajectory& traj) { return env.log_pb(traj); }

double prior_trajectory_log_pf(const PriorPolicy& prior, const Env& env, const Trajectory& traj) {
  const Trajectory* ptr = &traj;
  return prior_batch_log_pf(prior, env, std::span<const Trajectory>(ptr, 1))[0];
}

std::vector<double> prior_batch_log_pf(const PriorPolicy& prior, const Env& env,
                                       std::span<const Trajectory> trajs) {
  if (prior.analytic_uniform) {
    std::vector<double> sums(trajs.size(), 0.0);
    for (size_t k = 0; k < trajs.size(); ++k) {
      const Trajectory& t = trajs[k];
      for (size_t i = 0; i + 1 < t.states.size(); ++i) {
        const std::vector<bool> mask = env.action_mask(t.states[i]);
        const int count = static_cast<int>(std::count(mask.begin(), mask.end(), true));
        sums[k] -= std::log(static_cast<double>(count));
      }
    }
    return sums;
  }
  Policy as_policy;
  as_policy.mlp = prior.mlp;
  as_policy.env_kind = env.kind();
  as_policy.window = prior.window;
  return batch_log_pf(as_policy, env, trajs);
}

Policy warm_start_policy(const PriorPolicy& prior, const Env& env,
                         const std::vector<int>& hidden_sizes, uint64_t seed) {
  Policy policy;
  policy.env_kind = env.kind();
  policy.window = prior.window;
  policy.log_z = Tensor::scalar(0.0);
  if (!prior.analytic_uniform) {
    policy.mlp = prior.mlp;
    return policy;
  }
  std::vector<int> sizes;
  sizes.push_back(encode_dim(env, prior.window));
  sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
  sizes.push_back(env.action_count());
  policy.mlp = build_mlp(sizes, Activation::tanh, seed);
  // Zero the output layer: masked logits then match the uniform prior exactly.
  Tensor& w = policy.mlp.weights.back();
  Tensor& b = policy.mlp.biases.back();
  std::fill(w.values().begin(), w.values().end(), 0.0);
  std::fill(b.values().begin(), b.values().end(), 0.0);
  return policy;
}

}  // namespace softflow
