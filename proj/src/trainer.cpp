#include "softflow/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "softflow/losses.hpp"

namespace softflow {

namespace {

constexpr uint64_t kEvalSalt = 0x6576616cULL;   // "eval"
constexpr uint64_t kPriorSalt = 0x7072696fULL;  // "prio"

std::vector<int> policy_layer_sizes(const Env& env, int window, const std::vector<int>& hidden) {
  std::vector<int> sizes;
  sizes.push_back(encode_dim(env, window));
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(env.action_count());
  return sizes;
}

// Reference term of the balance residual: log P_B for the grid's plain-TB
// objective, log P_F^prior for the sequence RTB objective.
std::vector<double> reference_terms(const TrainerState& state,
                                    std::span<const Trajectory> trajs) {
  if (state.env.kind() == EnvKind::grid) {
    std::vector<double> refs(trajs.size());
    for (size_t i = 0; i < trajs.size(); ++i) refs[i] = state.env.log_pb(trajs[i]);
    return refs;
  }
  return prior_batch_log_pf(state.prior, state.env, trajs);
}

std::vector<double> tempered_log_rewards(const TrainerState& state,
                                         std::span<const Trajectory> trajs, bool shaped) {
  std::vector<double> out(trajs.size());
  for (size_t i = 0; i < trajs.size(); ++i) {
    const double r = shaped
                         ? shaped_reward(trajs[i].reward_raw, trajs[i].feasible,
                                         state.cfg.reward_floor)
                         : trajs[i].reward_raw;
    out[i] = log_tempered_reward(r, state.cfg.beta);
  }
  return out;
}

NamedParams net_params(Policy& policy) {
  NamedParams params;
  for (size_t l = 0; l < policy.mlp.weights.size(); ++l) {
    params.emplace_back("w" + std::to_string(l), &policy.mlp.weights[l]);
    params.emplace_back("b" + std::to_string(l), &policy.mlp.biases[l]);
  }
  return params;
}

void apply_updates(TrainerState& state, const GradientMap& grads) {
  NamedParams net = net_params(state.posterior);
  adam_step(net, grads, state.adam_net, state.cfg.lr_net, state.cfg.adam_beta1,
            state.cfg.adam_beta2, state.cfg.adam_eps);
  NamedParams logz;
  logz.emplace_back("logZ", &state.posterior.log_z);
  adam_step(logz, grads, state.adam_logz, state.cfg.lr_logz, state.cfg.adam_beta1,
            state.cfg.adam_beta2, state.cfg.adam_eps);
}

// One Adam update of the mean balance loss over `trajs`. Returns the loss.
double balance_update(TrainerState& state, std::span<const Trajectory> trajs, bool shaped) {
  if (!shaped) {
    for (const Trajectory& t : trajs) {
      if (!t.feasible)
        throw std::logic_error("balance_update: infeasible trajectory in a positive-only update");
    }
  }
  Tape tape;
  PolicyLeaves leaves = bind_policy_leaves(tape, state.posterior);
  BatchLogPf pf = batch_log_pf_graph(tape, state.posterior, leaves, state.env, trajs);
  const std::vector<double> refs = reference_terms(state, trajs);
  const std::vector<double> log_r = tempered_log_rewards(state, trajs, shaped);
  std::vector<double> constants(trajs.size());
  for (size_t i = 0; i < trajs.size(); ++i) constants[i] = log_r[i] + refs[i];
  const ValueId loss = balance_loss_graph(tape, pf.column, leaves.log_z, constants);
  const double loss_value = tape.value(loss).item();
  apply_updates(state, tape.backward(loss, Tensor::scalar(1.0)));
  return loss_value;
}

// One Adam update of the replay objective: mean balance loss over the
// positive draw plus alpha-weighted contrastive terms against buffer and
// mutant negatives. Pass empty spans to drop an aux source.
struct ReplayLosses {
  double balance = 0.0;
  std::optional<double> aux;
};

ReplayLosses replay_update(TrainerState& state, std::span<const Trajectory> pos,
                           std::span<const Trajectory> negs,
                           std::span<const Trajectory> mutants) {
  for (const Trajectory& t : pos) {
    if (!t.feasible) throw std::logic_error("replay_update: infeasible trajectory drawn as positive");
  }
  Tape tape;
  PolicyLeaves leaves = bind_policy_leaves(tape, state.posterior);
  BatchLogPf pos_pf = batch_log_pf_graph(tape, state.posterior, leaves, state.env, pos);
  const std::vector<double> refs = reference_terms(state, pos);
  const std::vector<double> log_r = tempered_log_rewards(state, pos, state.cfg.rs_baseline);
  std::vector<double> constants(pos.size());
  for (size_t i = 0; i < pos.size(); ++i) constants[i] = log_r[i] + refs[i];
  ValueId loss = balance_loss_graph(tape, pos_pf.column, leaves.log_z, constants);

  ReplayLosses out;
  out.balance = tape.value(loss).item();
  double aux_total = 0.0;
  bool any_aux = false;
  for (std::span<const Trajectory> neg_set : {negs, mutants}) {
    if (neg_set.empty()) continue;
    BatchLogPf neg_pf = batch_log_pf_graph(tape, state.posterior, leaves, state.env, neg_set);
    const ValueId neg_row = tape.matmul(neg_pf.chosen, neg_pf.segments, true, true);
    const ValueId aux = aux_loss_graph(tape, pos_pf.column, neg_row);
    aux_total += tape.value(aux).item();
    any_aux = true;
    loss = tape.add(loss, tape.mul_const(aux, state.cfg.alpha));
  }
  if (any_aux) out.aux = aux_total;
  apply_updates(state, tape.backward(loss, Tensor::scalar(1.0)));
  return out;
}

double normalized_levenshtein(const std::string& a, const std::string& b) {
  if (a.empty() && b.empty()) return 0.0;
  const size_t n = a.size(), m = b.size();
  std::vector<size_t> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), size_t{0});
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= m; ++j) {
      const size_t subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, subst});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

MetricsRecord metrics_from_samples(const std::vector<Trajectory>& samples, const Env& env,
                                   int top_k, double beta, bool with_grid_l1 = true) {
  MetricsRecord rec;
  const size_t n = samples.size();
  std::vector<double> feasible_rewards;
  double reward_sum = 0.0;
  size_t n_pos = 0;
  std::set<std::string> unique;
  for (const Trajectory& t : samples) {
    reward_sum += t.reward_raw;
    if (t.feasible) {
      ++n_pos;
      feasible_rewards.push_back(t.reward_raw);
    }
    unique.insert(terminal_key(t.terminal));
  }
  rec.positive_ratio = static_cast<double>(n_pos) / static_cast<double>(n);
  rec.mean_reward = reward_sum / static_cast<double>(n);
  rec.n_unique = static_cast<int64_t>(unique.size());
  if (!feasible_rewards.empty()) {
    std::sort(feasible_rewards.begin(), feasible_rewards.end(), std::greater<>());
    const size_t k = std::min(feasible_rewards.size(), static_cast<size_t>(top_k));
    rec.pos_top_k = std::accumulate(feasible_rewards.begin(),
                                    feasible_rewards.begin() + static_cast<long>(k), 0.0) /
                    static_cast<double>(k);
  }

  if (n < 2) {
    rec.diversity = 0.0;
  } else if (env.kind() == EnvKind::sequence) {
    // Mean pairwise normalized edit distance over the first 100 samples.
    const size_t m = std::min<size_t>(n, 100);
    double sum = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = i + 1; j < m; ++j) {
        sum += normalized_levenshtein(std::get<std::string>(samples[i].terminal),
                                      std::get<std::string>(samples[j].terminal));
        ++pairs;
      }
    }
    rec.diversity = pairs ? sum / static_cast<double>(pairs) : 0.0;
  } else {
    // 1 - collision rate, computed exactly from the cell histogram.
    std::unordered_map<std::string, size_t> counts;
    for (const Trajectory& t : samples) ++counts[terminal_key(t.terminal)];
    double collisions = 0.0;
    for (const auto& [key, c] : counts)
      collisions += static_cast<double>(c) * (static_cast<double>(c) - 1.0);
    rec.diversity = 1.0 - collisions / (static_cast<double>(n) * (static_cast<double>(n) - 1.0));
  }

  if (env.kind() == EnvKind::grid && with_grid_l1) {
    const GridSpec& spec = env.grid();
    const bool constrained = spec.infeasible_region != GridRegionPredicate::none;
    const std::vector<double> target = enumerate_grid_target(spec, beta, constrained);
    std::vector<double> empirical(target.size(), 0.0);
    for (const Trajectory& t : samples) {
      const GridState& cell = std::get<GridState>(t.terminal);
      empirical[static_cast<size_t>(cell.y) * spec.side + cell.x] += 1.0 / static_cast<double>(n);
    }
    double l1 = 0.0;
    for (size_t i = 0; i < target.size(); ++i) l1 += std::abs(empirical[i] - target[i]);
    rec.grid_l1 = l1;
  }
  return rec;
}

}  // namespace

Env TrainConfig::make_env() const {
  if (env == EnvKind::grid) {
    GridSpec spec;
    spec.side = grid.side;
    spec.r0 = grid.r0;
    spec.r1 = grid.r1;
    spec.r2 = grid.r2;
    spec.infeasible_region = grid.infeasible_region;
    return Env(spec);
  }
  SeqSpec spec;
  spec.vocab = seq.vocab;
  spec.max_len = seq.max_len;
  spec.motif = seq.motif;
  if (seq.oracle_json) {
    spec.oracle = dfa_from_json_text(*seq.oracle_json);
  } else {
    // Default oracle: balanced parentheses to depth 4 over the remaining
    // letters. Vocabularies without "()" need an explicit oracle.
    std::string letters;
    for (const std::string& tok : seq.vocab) {
      if (tok != kEosToken && tok != "(" && tok != ")") letters += tok;
    }
    spec.oracle = make_depth_dfa(4, letters);
  }
  return Env(spec);
}

void TrainConfig::validate() const {
  if (alpha < 0.0) throw std::invalid_argument("config: alpha must be >= 0");
  if (beta <= 0.0) throw std::invalid_argument("config: beta must be > 0");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (steps < 1) throw std::invalid_argument("config: steps must be >= 1");
  if (positive_capacity < 1 || negative_capacity < 1)
    throw std::invalid_argument("config: buffer capacities must be >= 1");
  if (lr_net <= 0.0 || lr_logz <= 0.0) throw std::invalid_argument("config: learning rates must be > 0");
  if (reward_floor <= 0.0) throw std::invalid_argument("config: reward_floor must be > 0");
  if (replay_ratio < 0) throw std::invalid_argument("config: replay_ratio must be >= 0");
  if (eval_every < 0) throw std::invalid_argument("config: eval_every must be >= 0");
  if (eval_samples < 1) throw std::invalid_argument("config: eval_samples must be >= 1");
  if (top_k < 1) throw std::invalid_argument("config: top_k must be >= 1");
  if (checkpoint_every < 0) throw std::invalid_argument("config: checkpoint_every must be >= 0");
  if (mutation_negatives && env != EnvKind::sequence)
    throw std::invalid_argument("config: mutation_negatives requires the sequence environment");
  if (env == EnvKind::sequence) {
    if (seq.window < 1) throw std::invalid_argument("config: window must be >= 1");
    if (seq.corpus_size < 1) throw std::invalid_argument("config: corpus_size must be >= 1");
    if (seq.corpus_motif_rate < 0.0 || seq.corpus_motif_rate > 1.0)
      throw std::invalid_argument("config: corpus_motif_rate must be in [0,1]");
    if (seq.corpus_stop_prob < 0.0 || seq.corpus_stop_prob > 1.0)
      throw std::invalid_argument("config: corpus_stop_prob must be in [0,1]");
    if (seq.pretrain_epochs < 1 || seq.pretrain_batch < 1 || seq.pretrain_lr <= 0.0)
      throw std::invalid_argument("config: invalid pretraining parameters");
  }
  make_env();  // validates environment parameters
}

TrainConfig make_default_config(EnvKind env) {
  TrainConfig cfg;
  cfg.env = env;
  if (env == EnvKind::grid) {
    cfg.alpha = 0.01;
    cfg.beta = 1.0;
    cfg.steps = 5000;
  } else {
    cfg.alpha = 1e-3;
    cfg.beta = 25.0;
    cfg.steps = 2000;
  }
  return cfg;
}

std::vector<std::string> generate_corpus(const SeqSpec& spec, int n, double motif_rate,
                                         double stop_prob, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("generate_corpus: n must be >= 1");
  spec.validate();
  const Dfa& dfa = spec.oracle;
  const int max_len =
      dfa.max_len_bound >= 0 ? std::min(spec.max_len, dfa.max_len_bound) : spec.max_len;

  // Shortest distance from each DFA state to acceptance (fixpoint over the
  // reversed transitions; state counts are tiny).
  const int inf = std::numeric_limits<int>::max();
  std::vector<int> dist(static_cast<size_t>(dfa.num_states), inf);
  for (int s = 0; s < dfa.num_states; ++s) {
    if (dfa.accepting[static_cast<size_t>(s)]) dist[static_cast<size_t>(s)] = 0;
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (int s = 0; s < dfa.num_states; ++s) {
      for (size_t c = 0; c < dfa.alphabet.size(); ++c) {
        const int to = dfa.next[static_cast<size_t>(s)][c];
        if (dist[static_cast<size_t>(to)] == inf) continue;
        const int candidate = dist[static_cast<size_t>(to)] + 1;
        if (candidate < dist[static_cast<size_t>(s)]) {
          dist[static_cast<size_t>(s)] = candidate;
          changed = true;
        }
      }
    }
  }
  if (dist[static_cast<size_t>(dfa.start)] > max_len)
    throw std::invalid_argument("generate_corpus: oracle language empty within max_len");

  // Precompute the motif's DFA path feasibility from each state.
  std::vector<int> motif_end(static_cast<size_t>(dfa.num_states), -1);
  for (int s = 0; s < dfa.num_states; ++s) {
    int cur = s;
    bool ok = true;
    for (char c : spec.motif) {
      cur = dfa.next[static_cast<size_t>(cur)][static_cast<size_t>(dfa.symbol_index(c))];
      if (dist[static_cast<size_t>(cur)] == inf) {
        ok = false;
        break;
      }
    }
    if (ok) motif_end[static_cast<size_t>(s)] = cur;
  }

  std::vector<std::string> corpus;
  corpus.reserve(static_cast<size_t>(n));
  while (static_cast<int>(corpus.size()) < n) {
    std::string s;
    int state = dfa.start;
    for (;;) {
      const int remaining = max_len - static_cast<int>(s.size());
      const bool can_stop = dfa.accepting[static_cast<size_t>(state)] &&
                            static_cast<int>(s.size()) >= dfa.min_len;
      if (can_stop && rng.uniform01() < stop_prob) break;
      if (remaining == 0) {
        if (!can_stop) throw std::logic_error("generate_corpus: invariant violated");
        break;
      }
      const int mend = motif_end[static_cast<size_t>(state)];
      if (mend >= 0 && static_cast<int>(spec.motif.size()) <= remaining &&
          dist[static_cast<size_t>(mend)] <= remaining - static_cast<int>(spec.motif.size()) &&
          rng.uniform01() < motif_rate) {
        s += spec.motif;
        state = mend;
        continue;
      }
      std::string safe;
      for (char c : dfa.alphabet) {
        const int to = dfa.next[static_cast<size_t>(state)][static_cast<size_t>(dfa.symbol_index(c))];
        if (dist[static_cast<size_t>(to)] != inf && dist[static_cast<size_t>(to)] <= remaining - 1)
          safe += c;
      }
      if (safe.empty()) {
        if (!can_stop) throw std::logic_error("generate_corpus: no safe continuation");
        break;
      }
      const char c = safe[static_cast<size_t>(rng.uniform_int(safe.size()))];
      s += c;
      state = dfa.next[static_cast<size_t>(state)][static_cast<size_t>(dfa.symbol_index(c))];
    }
    if (!seq_feasible(spec, s)) throw std::logic_error("generate_corpus: emitted infeasible string");
    corpus.push_back(std::move(s));
  }
  return corpus;
}

PriorPolicy pretrain_prior(const std::vector<std::string>& corpus, int epochs,
                           const TrainConfig& cfg) {
  if (cfg.env == EnvKind::grid) {
    PriorPolicy prior;
    prior.analytic_uniform = true;
    prior.window = cfg.seq.window;
    return prior;
  }
  if (corpus.empty()) throw std::invalid_argument("pretrain_prior: empty corpus");
  if (epochs < 1) throw std::invalid_argument("pretrain_prior: epochs must be >= 1");
  const Env env = cfg.make_env();
  const SeqSpec& spec = env.seq();
  for (const std::string& s : corpus) {
    if (!seq_feasible(spec, s))
      throw std::invalid_argument("pretrain_prior: corpus string fails the oracle: " + s);
  }

  // Teacher-forcing pairs: every decision state with its taken action.
  struct Sample {
    std::vector<double> features;
    std::vector<bool> mask;
    int target = 0;
  };
  std::vector<Sample> dataset;
  for (const std::string& s : corpus) {
    const Trajectory traj = env.trajectory_from_string(s);
    for (size_t i = 0; i < traj.actions.size(); ++i) {
      Sample sample;
      sample.features = encode_state(env, traj.states[i], cfg.seq.window);
      sample.mask = env.action_mask(traj.states[i]);
      sample.target = traj.actions[i];
      dataset.push_back(std::move(sample));
    }
  }

  Policy net;
  net.env_kind = EnvKind::sequence;
  net.window = cfg.seq.window;
  net.mlp = build_mlp(policy_layer_sizes(env, cfg.seq.window, cfg.seq.hidden), Activation::tanh,
                      mix_seed(cfg.seed, kPriorSalt));

  RngStream rng(mix_seed(cfg.seed, kPriorSalt + 1));
  AdamState adam;
  const int dim = encode_dim(env, cfg.seq.window);
  const int n_actions = env.action_count();
  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 0; epoch < epochs; ++epoch) {
    // Fisher-Yates with the documented stream.
    for (size_t i = order.size() - 1; i > 0; --i) {
      const size_t j = static_cast<size_t>(rng.uniform_int(i + 1));
      std::swap(order[i], order[j]);
    }
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.seq.pretrain_batch)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.seq.pretrain_batch));
      const int rows = static_cast<int>(end - start);
      Tensor features = Tensor::zeros({rows, dim});
      Tensor mask = Tensor::zeros({rows, n_actions});
      std::vector<int> targets(static_cast<size_t>(rows));
      for (size_t r = 0; r < static_cast<size_t>(rows); ++r) {
        const Sample& sample = dataset[order[start + r]];
        std::copy(sample.features.begin(), sample.features.end(),
                  features.values().begin() + static_cast<long>(r) * dim);
        for (int a = 0; a < n_actions; ++a) {
          if (!sample.mask[static_cast<size_t>(a)])
            mask.at(static_cast<int>(r), a) = kInvalidActionLogit;
        }
        targets[r] = sample.target;
      }
      Tape tape;
      MlpLeaves leaves = bind_mlp_leaves(tape, net.mlp);
      const ValueId x = tape.leaf(std::move(features));
      const ValueId m = tape.leaf(std::move(mask));
      const ValueId log_probs = tape.log_softmax_rows(tape.add(mlp_graph(tape, net.mlp, leaves, x), m));
      const ValueId picked = tape.gather_cols(log_probs, targets);
      const ValueId loss = tape.mul_const(tape.reduce_sum(picked), -1.0 / rows);
      const GradientMap grads = tape.backward(loss, Tensor::scalar(1.0));
      NamedParams params = net_params(net);
      adam_step(params, grads, adam, cfg.seq.pretrain_lr, cfg.adam_beta1, cfg.adam_beta2,
                cfg.adam_eps);
    }
  }

  PriorPolicy prior;
  prior.analytic_uniform = false;
  prior.mlp = std::move(net.mlp);
  prior.window = cfg.seq.window;
  return prior;
}

TrainerState init_trainer(const TrainConfig& cfg, PriorPolicy prior) {
  cfg.validate();
  Env env = cfg.make_env();
  const std::vector<int>& hidden =
      cfg.env == EnvKind::grid ? cfg.grid.hidden : cfg.seq.hidden;
  if (cfg.env == EnvKind::sequence) prior.window = cfg.seq.window;
  Policy posterior = warm_start_policy(prior, env, hidden, mix_seed(cfg.seed, 0));
  posterior.env_kind = cfg.env;
  return TrainerState{cfg,
                      std::move(env),
                      std::move(posterior),
                      std::move(prior),
                      PositiveBuffer(cfg.positive_capacity),
                      NegativeBuffer(cfg.negative_capacity),
                      AdamState{},
                      AdamState{},
                      RngStream(cfg.seed),
                      0,
                      std::nullopt,
                      std::nullopt};
}

namespace {

// Phase (C). `allow_mutation` is cleared during adaptation, where no oracle
// call on a new object is permitted.
void replay_phase(TrainerState& state, bool allow_mutation) {
  const TrainConfig& cfg = state.cfg;
  if (state.d_pos.empty()) return;
  const std::vector<BufferEntry> pos_entries =
      state.d_pos.sample(cfg.batch_size, cfg.beta, cfg.prioritization, state.rng);
  std::vector<Trajectory> pos;
  pos.reserve(pos_entries.size());
  for (const BufferEntry& e : pos_entries) pos.push_back(e.trajectory);

  if (cfg.rs_baseline) {
    // Reward shaping baseline: balance objective over positive and negative
    // replays with the shaped reward, no contrastive term.
    std::vector<Trajectory> mixed = pos;
    if (!state.d_neg.empty()) {
      for (Trajectory& t : state.d_neg.sample(cfg.batch_size, state.rng))
        mixed.push_back(std::move(t));
    }
    state.last_loss_balance = balance_update(state, mixed, /*shaped=*/true);
    state.last_loss_aux = std::nullopt;
    return;
  }

  std::vector<Trajectory> negs;
  if (cfg.alpha > 0.0 && !state.d_neg.empty())
    negs = state.d_neg.sample(cfg.batch_size, state.rng);

  std::vector<Trajectory> mutants;
  if (allow_mutation && cfg.mutation_negatives && cfg.alpha > 0.0 &&
      state.env.kind() == EnvKind::sequence) {
    for (const Trajectory& p : pos) {
      const std::string mutated =
          mutate_sequence(state.env.seq(), std::get<std::string>(p.terminal), state.rng);
      Trajectory traj = state.env.trajectory_from_string(mutated);
      if (traj.feasible) continue;  // only true negatives provide contrast
      state.d_neg.push(traj);
      mutants.push_back(std::move(traj));
    }
  }

  const ReplayLosses losses = replay_update(state, pos, negs, mutants);
  state.last_loss_balance = losses.balance;
  state.last_loss_aux = losses.aux;
}

}  // namespace

MetricsRecord train_step(TrainerState& state) {
  const TrainConfig& cfg = state.cfg;

  // (A) On-policy sampling and classification.
  std::vector<Trajectory> batch = sample_batch(state.posterior, state.env, cfg.batch_size, state.rng);
  std::vector<Trajectory> positives;
  size_t classified = 0;
  for (Trajectory& t : batch) {
    if (t.feasible) {
      state.d_pos.push(t, t.reward_raw);
      positives.push_back(t);
      ++classified;
    } else {
      state.d_neg.push(t);
      ++classified;
    }
  }
  if (classified != batch.size()) throw std::logic_error("train_step: unclassified trajectory");

  // (B) On-policy update.
  if (cfg.rs_baseline) {
    state.last_loss_balance = balance_update(state, batch, /*shaped=*/true);
    state.last_loss_aux = std::nullopt;
  } else if (!positives.empty()) {
    state.last_loss_balance = balance_update(state, positives, /*shaped=*/false);
  }

  // (C) Replay update(s).
  for (int r = 0; r < cfg.replay_ratio; ++r) replay_phase(state, /*allow_mutation=*/true);

  ++state.step;

  // Batch-level record; the exact-target comparison is evaluation-only.
  MetricsRecord rec = metrics_from_samples(batch, state.env, cfg.top_k, cfg.beta,
                                           /*with_grid_l1=*/false);
  rec.step = state.step;
  rec.loss_rtb = state.last_loss_balance;
  rec.loss_aux = state.last_loss_aux;
  return rec;
}

MetricsRecord evaluate(const Policy& policy, const Env& env, int n_samples, int top_k,
                       double beta, RngStream& rng) {
  if (n_samples < 1) throw std::invalid_argument("evaluate: n_samples must be >= 1");
  std::vector<Trajectory> samples;
  samples.reserve(static_cast<size_t>(n_samples));
  int remaining = n_samples;
  while (remaining > 0) {
    const int chunk = std::min(remaining, 512);
    std::vector<Trajectory> part = sample_batch(policy, env, chunk, rng);
    for (Trajectory& t : part) samples.push_back(std::move(t));
    remaining -= chunk;
  }
  return metrics_from_samples(samples, env, top_k, beta);
}

RngStream make_eval_rng(uint64_t seed, uint64_t step) {
  return RngStream(mix_seed(seed ^ kEvalSalt, step));
}

std::vector<MetricsRecord> run_training(TrainerState& state, const CheckpointHook& checkpoint_hook) {
  const TrainConfig& cfg = state.cfg;
  std::vector<MetricsRecord> records;
  for (uint64_t t = state.step + 1; t <= static_cast<uint64_t>(cfg.steps); ++t) {
    train_step(state);
    const bool eval_now =
        (cfg.eval_every > 0 && t % static_cast<uint64_t>(cfg.eval_every) == 0) ||
        t == static_cast<uint64_t>(cfg.steps);
    if (eval_now) {
      RngStream eval_rng = make_eval_rng(cfg.seed, t);
      MetricsRecord rec =
          evaluate(state.posterior, state.env, cfg.eval_samples, cfg.top_k, cfg.beta, eval_rng);
      rec.step = t;
      rec.loss_rtb = state.last_loss_balance;
      rec.loss_aux = state.last_loss_aux;
      records.push_back(rec);
    }
    if (checkpoint_hook && cfg.checkpoint_every > 0 &&
        t % static_cast<uint64_t>(cfg.checkpoint_every) == 0 &&
        t != static_cast<uint64_t>(cfg.steps))
      checkpoint_hook(state);
  }
  if (checkpoint_hook) checkpoint_hook(state);
  return records;
}

MetricsRecord run_adaptation(TrainerState& state, const Env& new_env, int steps) {
  if (steps < 0) throw std::invalid_argument("run_adaptation: steps must be >= 0");
  if (new_env.kind() != state.env.kind())
    throw std::invalid_argument("run_adaptation: environment kind mismatch");
  state.env = new_env;
  reclassify(state.d_pos, state.d_neg, state.env);
  if (state.d_pos.empty())
    throw std::runtime_error(
        "run_adaptation: positive buffer empty after reclassification; no replay target exists "
        "under the new oracle");
  for (int i = 0; i < steps; ++i) {
    replay_phase(state, /*allow_mutation=*/false);
    ++state.step;
  }
  RngStream eval_rng = make_eval_rng(state.cfg.seed, state.step + 0xada9);
  MetricsRecord rec = evaluate(state.posterior, state.env, state.cfg.eval_samples,
                               state.cfg.top_k, state.cfg.beta, eval_rng);
  rec.step = state.step;
  rec.loss_rtb = state.last_loss_balance;
  rec.loss_aux = state.last_loss_aux;
  return rec;
}

}  // namespace softflow
