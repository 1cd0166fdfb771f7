#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "softflow/checkpoint.hpp"
#include "softflow/config.hpp"
#include "softflow/metrics_io.hpp"
#include "softflow/trainer.hpp"
#include "softflow/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace softflow;

namespace {

struct Overrides {
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<int> batch_size;
  std::optional<int> steps;
  std::optional<int> capacity;
  std::optional<std::string> env;
  std::optional<std::string> oracle_path;
  bool rs_baseline = false;
  bool mutation_negatives = false;
  std::optional<uint64_t> seed;
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--alpha", o.alpha, "auxiliary loss coefficient");
  cmd->add_option("--beta", o.beta, "reward temperature");
  cmd->add_option("--batch-size", o.batch_size, "on-policy batch size B");
  cmd->add_option("--steps", o.steps, "training iterations");
  cmd->add_option("--capacity", o.capacity, "replay buffer capacity (both buffers)");
  cmd->add_option("--env", o.env, "environment: grid | sequence");
  cmd->add_option("--oracle", o.oracle_path, "feasibility oracle DFA JSON file");
  cmd->add_flag("--rs-baseline", o.rs_baseline, "reward-shaping baseline mode");
  cmd->add_flag("--mutation-negatives", o.mutation_negatives, "mutate replayed positives into negatives");
  cmd->add_option("--seed", o.seed, "run seed");
}

TrainConfig resolve_config(const std::string& config_path, const Overrides& o) {
  TrainConfig cfg;
  if (!config_path.empty()) {
    cfg = load_config(config_path);
  } else if (o.env) {
    cfg = make_default_config(*o.env == "sequence" ? EnvKind::sequence : EnvKind::grid);
  } else {
    cfg = make_default_config(EnvKind::grid);
  }
  if (o.env) {
    if (*o.env != "grid" && *o.env != "sequence")
      throw std::invalid_argument("--env must be 'grid' or 'sequence'");
    const EnvKind kind = *o.env == "grid" ? EnvKind::grid : EnvKind::sequence;
    if (kind != cfg.env) {
      // Re-resolve per-environment defaults, then re-apply the file's shared keys.
      TrainConfig fresh = make_default_config(kind);
      fresh.seed = cfg.seed;
      fresh.batch_size = cfg.batch_size;
      cfg = fresh;
    }
  }
  if (o.alpha) cfg.alpha = *o.alpha;
  if (o.beta) cfg.beta = *o.beta;
  if (o.batch_size) cfg.batch_size = *o.batch_size;
  if (o.steps) cfg.steps = *o.steps;
  if (o.capacity) {
    cfg.positive_capacity = *o.capacity;
    cfg.negative_capacity = *o.capacity;
  }
  if (o.oracle_path) {
    if (cfg.env != EnvKind::sequence)
      throw std::invalid_argument("--oracle applies to the sequence environment");
    std::ifstream in(*o.oracle_path);
    if (!in) throw std::runtime_error("cannot open oracle file " + *o.oracle_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    dfa_from_json_text(buf.str());  // validate early
    cfg.seq.oracle_json = json::parse(buf.str()).dump();
  }
  if (o.rs_baseline) cfg.rs_baseline = true;
  if (o.mutation_negatives) cfg.mutation_negatives = true;
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

// SOFTFLOW_SEED wins over both config and --seed; the manifest records it.
bool apply_seed_env(TrainConfig& cfg) {
  const std::optional<uint64_t> seed = env_seed_override();
  if (!seed) return false;
  cfg.seed = *seed;
  return true;
}

void write_manifest(const fs::path& dir, const TrainConfig& cfg, bool seed_from_env,
                    const std::vector<std::string>& outputs) {
  json manifest;
  manifest["code_version"] = kVersionString;
  manifest["config"] = json::parse(config_to_json_text(cfg));
  manifest["seed"] = cfg.seed;
  manifest["seed_source"] = seed_from_env ? kSeedEnvVar : "config";
  manifest["start_timestamp"] = static_cast<int64_t>(
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
  manifest["outputs"] = outputs;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

json metrics_to_json(const MetricsRecord& r) {
  json j;
  j["step"] = r.step;
  j["positive_ratio"] = r.positive_ratio;
  j["mean_reward"] = r.mean_reward;
  j["pos_top100"] = r.pos_top_k ? json(*r.pos_top_k) : json(nullptr);
  j["diversity"] = r.diversity;
  j["n_unique"] = r.n_unique;
  j["grid_l1"] = r.grid_l1 ? json(*r.grid_l1) : json(nullptr);
  j["loss_rtb"] = r.loss_rtb ? json(*r.loss_rtb) : json(nullptr);
  j["loss_aux"] = r.loss_aux ? json(*r.loss_aux) : json(nullptr);
  return j;
}

PriorPolicy prior_for_training(const TrainConfig& cfg, const std::string& prior_flag) {
  if (cfg.env == EnvKind::grid) return pretrain_prior({}, 1, cfg);
  std::string path = prior_flag.empty() ? cfg.seq.prior_checkpoint : prior_flag;
  if (path.empty())
    throw std::runtime_error(
        "sequence training needs a prior: run `softflow pretrain` and pass --prior (or set "
        "sequence.prior_checkpoint)");
  TrainerState prior_state = load_checkpoint(path);
  if (prior_state.prior.analytic_uniform)
    throw std::runtime_error("checkpoint " + path + " does not contain a trained prior");
  return prior_state.prior;
}

std::vector<double> empirical_heatmap(const Policy& policy, const Env& env, int n_samples,
                                      RngStream& rng) {
  const int side = env.grid().side;
  std::vector<double> mass(static_cast<size_t>(side) * side, 0.0);
  int remaining = n_samples;
  while (remaining > 0) {
    const int chunk = std::min(remaining, 512);
    for (const Trajectory& t : sample_batch(policy, env, chunk, rng)) {
      const GridState& cell = std::get<GridState>(t.terminal);
      mass[static_cast<size_t>(cell.y) * side + cell.x] += 1.0 / n_samples;
    }
    remaining -= chunk;
  }
  return mass;
}

int cmd_pretrain(const std::string& config_path, const Overrides& overrides,
                 const std::string& out_dir) {
  TrainConfig cfg = resolve_config(config_path, overrides);
  if (cfg.env != EnvKind::sequence)
    throw std::runtime_error("pretrain applies to the sequence environment (--env sequence)");
  const bool seed_from_env = apply_seed_env(cfg);
  fs::create_directories(out_dir);
  write_manifest(out_dir, cfg, seed_from_env, {"config.json", "prior.ckpt"});
  save_config((fs::path(out_dir) / "config.json").string(), cfg);

  RngStream corpus_rng(mix_seed(cfg.seed, 0xc0c0));
  const Env env = cfg.make_env();
  const std::vector<std::string> corpus = generate_corpus(
      env.seq(), cfg.seq.corpus_size, cfg.seq.corpus_motif_rate, cfg.seq.corpus_stop_prob,
      corpus_rng);
  PriorPolicy prior = pretrain_prior(corpus, cfg.seq.pretrain_epochs, cfg);
  TrainerState state = init_trainer(cfg, std::move(prior));
  const std::string ckpt = (fs::path(out_dir) / "prior.ckpt").string();
  save_checkpoint(ckpt, state);

  RngStream eval_rng = make_eval_rng(cfg.seed, 0);
  MetricsRecord rec =
      evaluate(state.posterior, state.env, cfg.eval_samples, cfg.top_k, cfg.beta, eval_rng);
  std::cout << metrics_to_json(rec).dump() << "\n";
  std::cerr << "prior checkpoint written to " << ckpt << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const Overrides& overrides,
              const std::string& out_dir, const std::string& prior_flag,
              const std::string& resume_path) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const std::string ckpt_path = (dir / "checkpoint.bin").string();

  TrainerState state = [&] {
    if (!resume_path.empty()) return load_checkpoint(resume_path);
    TrainConfig cfg = resolve_config(config_path, overrides);
    apply_seed_env(cfg);
    return init_trainer(cfg, prior_for_training(cfg, prior_flag));
  }();
  const bool seed_from_env = env_seed_override().has_value();

  write_manifest(dir, state.cfg, seed_from_env,
                 {"config.json", "metrics.csv", "checkpoint.bin"});
  save_config((dir / "config.json").string(), state.cfg);

  const CheckpointHook hook = [&](const TrainerState& s) { save_checkpoint(ckpt_path, s); };
  const std::vector<MetricsRecord> records = run_training(state, hook);
  write_metrics((dir / "metrics.csv").string(), records);
  if (!records.empty())
    std::cout << metrics_to_json(records.back()).dump() << "\n";
  std::cerr << "run artifacts in " << dir.string() << "\n";
  return 0;
}

int cmd_adapt(const std::string& checkpoint_path, const std::string& oracle_path, int steps,
              const std::string& out_dir, std::optional<int> n_samples) {
  TrainerState state = load_checkpoint(checkpoint_path);
  if (state.env.kind() != EnvKind::sequence)
    throw std::runtime_error("adapt applies to sequence checkpoints");
  if (n_samples) state.cfg.eval_samples = *n_samples;
  const bool seed_from_env = apply_seed_env(state.cfg);

  Dfa oracle = load_dfa(oracle_path);
  Env new_env = state.env.with_oracle(oracle);
  // Keep the config echo consistent with the swapped oracle.
  state.cfg.seq.oracle_json = json::parse(dfa_to_json_text(oracle)).dump();

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_manifest(dir, state.cfg, seed_from_env,
                 {"config.json", "metrics.csv", "checkpoint.bin"});
  save_config((dir / "config.json").string(), state.cfg);

  MetricsRecord rec = run_adaptation(state, new_env, steps);
  write_metrics((dir / "metrics.csv").string(), {rec});
  save_checkpoint((dir / "checkpoint.bin").string(), state);
  std::cout << metrics_to_json(rec).dump() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, int n_samples, const std::string& oracle_path,
             std::optional<uint64_t> seed) {
  TrainerState state = load_checkpoint(checkpoint_path);
  Env env = state.env;
  if (!oracle_path.empty()) env = env.with_oracle(load_dfa(oracle_path));
  uint64_t eval_seed = seed ? *seed : state.cfg.seed;
  if (const auto env_seed = env_seed_override()) eval_seed = *env_seed;
  RngStream rng = make_eval_rng(eval_seed, state.step);
  MetricsRecord rec = evaluate(state.posterior, env, n_samples, state.cfg.top_k, state.cfg.beta, rng);
  rec.step = state.step;
  std::cout << metrics_to_json(rec).dump() << "\n";
  return 0;
}

int cmd_grid_demo(double alpha, int steps, uint64_t seed, const std::string& out_dir, bool sweep,
                  int n_samples) {
  TrainConfig base = make_default_config(EnvKind::grid);
  base.steps = steps;
  base.seed = seed;
  if (const auto env_seed = env_seed_override()) base.seed = *env_seed;
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  const Env env = base.make_env();
  write_heatmap((dir / "target.csv").string(), env.grid().side,
                enumerate_grid_target(env.grid(), base.beta, true), "exact target distribution");

  auto run_to_heatmap = [&](double run_alpha, const std::string& name) {
    TrainConfig cfg = base;
    cfg.alpha = run_alpha;
    cfg.eval_every = 0;  // heatmap at the end only
    TrainerState state = init_trainer(cfg, pretrain_prior({}, 1, cfg));
    run_training(state);
    RngStream rng = make_eval_rng(cfg.seed, state.step + 0x9ea7);
    write_heatmap((dir / name).string(), env.grid().side,
                  empirical_heatmap(state.posterior, state.env, n_samples, rng),
                  "empirical sampling distribution, alpha=" + format_float(run_alpha));
    std::cerr << "wrote " << (dir / name).string() << "\n";
  };

  run_to_heatmap(0.0, "no_aux.csv");
  run_to_heatmap(alpha, "with_aux.csv");
  if (sweep) {
    for (double a : {0.1, 0.01, 0.001}) {
      std::ostringstream name;
      name << "alpha_" << format_float(a) << ".csv";
      run_to_heatmap(a, name.str());
    }
  }
  std::cout << "grid-demo outputs in " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"softflow: soft-constrained GFlowNet training harness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersionString);

  std::string config_path, out_dir = "run_out", prior_flag, resume_path;
  std::string checkpoint_path, oracle_path;
  int adapt_steps = 100;
  std::optional<int> adapt_n;
  int eval_n = 1000;
  std::optional<uint64_t> eval_seed;
  double demo_alpha = 0.01;
  int demo_steps = 5000;
  uint64_t demo_seed = 1;
  int demo_samples = 10000;
  bool demo_sweep = false;
  Overrides overrides;

  CLI::App* pretrain = app.add_subcommand("pretrain", "train the sequence prior by MLE on a generated corpus");
  pretrain->add_option("--config", config_path, "config JSON path");
  pretrain->add_option("--out", out_dir, "output directory");
  add_override_flags(pretrain, overrides);

  CLI::App* train = app.add_subcommand("train", "run soft-constrained post-training");
  train->add_option("--config", config_path, "config JSON path");
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--prior", prior_flag, "prior checkpoint (sequence env)");
  train->add_option("--resume", resume_path, "resume from a checkpoint");
  add_override_flags(train, overrides);

  CLI::App* adapt = app.add_subcommand("adapt", "replay-only adaptation to a new oracle");
  adapt->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  adapt->add_option("--oracle", oracle_path, "new feasibility oracle DFA JSON")->required();
  adapt->add_option("--steps", adapt_steps, "replay-only update budget");
  adapt->add_option("--n", adapt_n, "evaluation sample count");
  adapt->add_option("--out", out_dir, "output directory");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate")->required();
  eval->add_option("--n", eval_n, "evaluation sample count");
  eval->add_option("--oracle", oracle_path, "evaluate under a swapped oracle");
  eval->add_option("--seed", eval_seed, "evaluation seed (defaults to the run seed)");

  CLI::App* demo = app.add_subcommand("grid-demo", "emit grid heatmaps: exact target, no-aux run, aux run");
  demo->add_option("--alpha", demo_alpha, "aux coefficient for the with-aux run");
  demo->add_option("--steps", demo_steps, "training steps per run");
  demo->add_option("--seed", demo_seed, "run seed");
  demo->add_option("--out", out_dir, "output directory");
  demo->add_option("--n", demo_samples, "samples per heatmap");
  demo->add_flag("--sweep", demo_sweep, "additionally sweep alpha over {0.1, 0.01, 0.001}");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pretrain->parsed()) return cmd_pretrain(config_path, overrides, out_dir);
    if (train->parsed()) return cmd_train(config_path, overrides, out_dir, prior_flag, resume_path);
    if (adapt->parsed()) return cmd_adapt(checkpoint_path, oracle_path, adapt_steps, out_dir, adapt_n);
    if (eval->parsed()) return cmd_eval(checkpoint_path, eval_n, oracle_path, eval_seed);
    if (demo->parsed())
      return cmd_grid_demo(demo_alpha, demo_steps, demo_seed, out_dir, demo_sweep, demo_samples);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}
