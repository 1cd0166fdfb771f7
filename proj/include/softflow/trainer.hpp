#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "softflow/env.hpp"
#include "softflow/nn.hpp"
#include "softflow/policy.hpp"
#include "softflow/replay.hpp"
#include "softflow/rng.hpp"

namespace softflow {

struct GridConfig {
  int side = 32;
  double r0 = 0.001;
  double r1 = 0.5;
  double r2 = 2.0;
  GridRegionPredicate infeasible_region = GridRegionPredicate::upper_left_quadrant;
  std::vector<int> hidden = {64, 64};
};

struct SeqConfig {
  std::vector<std::string> vocab = {"a", "b", "(", ")", "<eos>"};
  int max_len = 24;
  std::string motif = "aba";
  std::optional<std::string> oracle_json;  // absent: balanced parens, depth <= 4
  int window = 8;
  std::vector<int> hidden = {128, 128};
  std::string prior_checkpoint;  // used by the CLI train path
  int corpus_size = 2000;
  double corpus_motif_rate = 0.35;
  double corpus_stop_prob = 0.10;
  int pretrain_epochs = 40;
  int pretrain_batch = 64;
  double pretrain_lr = 1e-3;
};

// Full hyperparameter surface of one run. alpha/beta/steps defaults are
// environment-dependent; use make_default_config to resolve them.
struct TrainConfig {
  EnvKind env = EnvKind::grid;
  uint64_t seed = 1;
  double alpha = 0.01;
  double beta = 1.0;
  int batch_size = 64;
  int steps = 5000;
  int positive_capacity = 6400;
  int negative_capacity = 6400;
  double lr_net = 1e-3;
  double lr_logz = 1e-1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool mutation_negatives = false;
  bool rs_baseline = false;
  double reward_floor = 1e-8;
  Prioritization prioritization = Prioritization::rank;
  int replay_ratio = 1;  // replay updates per on-policy update; 0 disables
  int eval_every = 500;
  int eval_samples = 1000;
  int top_k = 100;
  int checkpoint_every = 0;  // 0: final checkpoint only
  GridConfig grid;
  SeqConfig seq;

  Env make_env() const;
  void validate() const;
};

// grid: alpha 0.01, beta 1, 5000 steps; sequence: alpha 1e-3, beta 25,
// 2000 steps. Everything else shared.
TrainConfig make_default_config(EnvKind env);

struct MetricsRecord {
  uint64_t step = 0;
  double positive_ratio = 0.0;
  double mean_reward = 0.0;
  std::optional<double> pos_top_k;  // mean reward of top-K feasible samples
  double diversity = 0.0;
  int64_t n_unique = 0;
  std::optional<double> grid_l1;  // L1 distance to the exact grid target
  std::optional<double> loss_rtb;
  std::optional<double> loss_aux;
};

struct TrainerState {
  TrainConfig cfg;
  Env env;
  Policy posterior;
  PriorPolicy prior;
  PositiveBuffer d_pos;
  NegativeBuffer d_neg;
  AdamState adam_net;
  AdamState adam_logz;
  RngStream rng;
  uint64_t step = 0;
  std::optional<double> last_loss_balance;
  std::optional<double> last_loss_aux;
};

// Feasible strings from a DFA-guided stochastic sampler, with whole-motif
// injections at `motif_rate` so the prior has mass near high reward without
// being optimal. Draw order per position: stop coin (when stopping is
// legal), motif coin (when the motif fits), token index.
std::vector<std::string> generate_corpus(const SeqSpec& spec, int n, double motif_rate,
                                         double stop_prob, RngStream& rng);

// Next-token cross-entropy (teacher forcing, <eos>-terminated) over the
// corpus; returns the frozen prior. For the grid environment the analytic
// uniform prior is returned and the corpus is ignored.
PriorPolicy pretrain_prior(const std::vector<std::string>& corpus, int epochs,
                           const TrainConfig& cfg);

// Fresh trainer with the posterior warm-started from the prior and logZ = 0.
TrainerState init_trainer(const TrainConfig& cfg, PriorPolicy prior);

// One Algorithm iteration: (A) on-policy sampling and classification into
// the buffers, (B) one Adam update of the positive-only balance objective on
// the on-policy positives, (C) replay update(s) with the contrastive term.
// The grid environment trains plain TB (uniform backward); sequences train
// RTB against the frozen prior. With rs_baseline, (B) and (C) instead apply
// the balance objective to all trajectories under the shaped reward.
// Returns batch-level metrics of the on-policy samples.
MetricsRecord train_step(TrainerState& state);

// Metrics over freshly sampled trajectories. grid_l1 compares the empirical
// terminal distribution against the exact enumerated target (grid only).
MetricsRecord evaluate(const Policy& policy, const Env& env, int n_samples, int top_k,
                       double beta, RngStream& rng);

using CheckpointHook = std::function<void(const TrainerState&)>;

// Runs train_step up to cfg.steps, evaluating every cfg.eval_every steps and
// at the final step. Evaluation draws come from a stream keyed by
// (seed, step), so training and resume behavior are unaffected by the
// evaluation schedule.
std::vector<MetricsRecord> run_training(TrainerState& state,
                                        const CheckpointHook& checkpoint_hook = {});

// Constraint-change protocol: swap the oracle, reclassify the buffers, run
// `steps` replay-only updates (no on-policy sampling, no mutation, no oracle
// or reward calls on new objects), then evaluate once. Throws if the
// positive buffer is empty after reclassification.
MetricsRecord run_adaptation(TrainerState& state, const Env& new_env, int steps);

// Evaluation stream for a given training step; also used by adaptation.
RngStream make_eval_rng(uint64_t seed, uint64_t step);

}  // namespace softflow
