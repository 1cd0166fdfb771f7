#include "softflow/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace softflow {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& known, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key()))
      throw std::invalid_argument(std::string("config: unknown key '") + it.key() + "' in " +
                                  where);
  }
}

template <typename T>
void read_into(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

GridConfig parse_grid(const json& j) {
  reject_unknown_keys(j, {"side", "r0", "r1", "r2", "infeasible_region", "hidden"}, "grid");
  GridConfig g;
  read_into(j, "side", g.side);
  read_into(j, "r0", g.r0);
  read_into(j, "r1", g.r1);
  read_into(j, "r2", g.r2);
  if (j.contains("infeasible_region")) {
    const std::string region = j.at("infeasible_region").get<std::string>();
    if (region == "upper_left_quadrant") g.infeasible_region = GridRegionPredicate::upper_left_quadrant;
    else if (region == "none") g.infeasible_region = GridRegionPredicate::none;
    else throw std::invalid_argument("config: infeasible_region must be 'upper_left_quadrant' or 'none'");
  }
  read_into(j, "hidden", g.hidden);
  return g;
}

SeqConfig parse_sequence(const json& j) {
  reject_unknown_keys(j,
                      {"vocab", "max_len", "motif", "oracle", "window", "hidden",
                       "prior_checkpoint", "corpus_size", "corpus_motif_rate", "corpus_stop_prob",
                       "pretrain_epochs", "pretrain_batch", "pretrain_lr"},
                      "sequence");
  SeqConfig s;
  read_into(j, "vocab", s.vocab);
  read_into(j, "max_len", s.max_len);
  read_into(j, "motif", s.motif);
  if (j.contains("oracle") && !j.at("oracle").is_null()) {
    // Store the canonical dump; dfa_from_json_text validates it.
    const std::string text = j.at("oracle").dump();
    dfa_from_json_text(text);
    s.oracle_json = text;
  }
  read_into(j, "window", s.window);
  read_into(j, "hidden", s.hidden);
  read_into(j, "prior_checkpoint", s.prior_checkpoint);
  read_into(j, "corpus_size", s.corpus_size);
  read_into(j, "corpus_motif_rate", s.corpus_motif_rate);
  read_into(j, "corpus_stop_prob", s.corpus_stop_prob);
  read_into(j, "pretrain_epochs", s.pretrain_epochs);
  read_into(j, "pretrain_batch", s.pretrain_batch);
  read_into(j, "pretrain_lr", s.pretrain_lr);
  return s;
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: document must be an object");
  reject_unknown_keys(j,
                      {"env", "seed", "alpha", "beta", "batch_size", "steps", "positive_capacity",
                       "negative_capacity", "lr_net", "lr_logz", "adam_beta1", "adam_beta2",
                       "adam_eps", "mutation_negatives", "rs_baseline", "reward_floor",
                       "prioritization", "replay_ratio", "eval_every", "eval_samples", "top_k",
                       "checkpoint_every", "grid", "sequence"},
                      "config");
  if (!j.contains("env")) throw std::invalid_argument("config: missing 'env'");
  const std::string env_name = j.at("env").get<std::string>();
  EnvKind env;
  if (env_name == "grid") env = EnvKind::grid;
  else if (env_name == "sequence") env = EnvKind::sequence;
  else throw std::invalid_argument("config: env must be 'grid' or 'sequence'");

  TrainConfig cfg = make_default_config(env);
  read_into(j, "seed", cfg.seed);
  read_into(j, "alpha", cfg.alpha);
  read_into(j, "beta", cfg.beta);
  read_into(j, "batch_size", cfg.batch_size);
  read_into(j, "steps", cfg.steps);
  read_into(j, "positive_capacity", cfg.positive_capacity);
  read_into(j, "negative_capacity", cfg.negative_capacity);
  read_into(j, "lr_net", cfg.lr_net);
  read_into(j, "lr_logz", cfg.lr_logz);
  read_into(j, "adam_beta1", cfg.adam_beta1);
  read_into(j, "adam_beta2", cfg.adam_beta2);
  read_into(j, "adam_eps", cfg.adam_eps);
  read_into(j, "mutation_negatives", cfg.mutation_negatives);
  read_into(j, "rs_baseline", cfg.rs_baseline);
  read_into(j, "reward_floor", cfg.reward_floor);
  if (j.contains("prioritization")) {
    const std::string scheme = j.at("prioritization").get<std::string>();
    if (scheme == "rank") cfg.prioritization = Prioritization::rank;
    else if (scheme == "proportional") cfg.prioritization = Prioritization::proportional;
    else throw std::invalid_argument("config: prioritization must be 'rank' or 'proportional'");
  }
  read_into(j, "replay_ratio", cfg.replay_ratio);
  read_into(j, "eval_every", cfg.eval_every);
  read_into(j, "eval_samples", cfg.eval_samples);
  read_into(j, "top_k", cfg.top_k);
  read_into(j, "checkpoint_every", cfg.checkpoint_every);
  if (j.contains("grid")) cfg.grid = parse_grid(j.at("grid"));
  if (j.contains("sequence")) cfg.seq = parse_sequence(j.at("sequence"));
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_to_json_text(const TrainConfig& cfg) {
  json j;
  j["env"] = cfg.env == EnvKind::grid ? "grid" : "sequence";
  j["seed"] = cfg.seed;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["batch_size"] = cfg.batch_size;
  j["steps"] = cfg.steps;
  j["positive_capacity"] = cfg.positive_capacity;
  j["negative_capacity"] = cfg.negative_capacity;
  j["lr_net"] = cfg.lr_net;
  j["lr_logz"] = cfg.lr_logz;
  j["adam_beta1"] = cfg.adam_beta1;
  j["adam_beta2"] = cfg.adam_beta2;
  j["adam_eps"] = cfg.adam_eps;
  j["mutation_negatives"] = cfg.mutation_negatives;
  j["rs_baseline"] = cfg.rs_baseline;
  j["reward_floor"] = cfg.reward_floor;
  j["prioritization"] = cfg.prioritization == Prioritization::rank ? "rank" : "proportional";
  j["replay_ratio"] = cfg.replay_ratio;
  j["eval_every"] = cfg.eval_every;
  j["eval_samples"] = cfg.eval_samples;
  j["top_k"] = cfg.top_k;
  j["checkpoint_every"] = cfg.checkpoint_every;
  json grid;
  grid["side"] = cfg.grid.side;
  grid["r0"] = cfg.grid.r0;
  grid["r1"] = cfg.grid.r1;
  grid["r2"] = cfg.grid.r2;
  grid["infeasible_region"] =
      cfg.grid.infeasible_region == GridRegionPredicate::upper_left_quadrant
          ? "upper_left_quadrant"
          : "none";
  grid["hidden"] = cfg.grid.hidden;
  j["grid"] = grid;
  json seq;
  seq["vocab"] = cfg.seq.vocab;
  seq["max_len"] = cfg.seq.max_len;
  seq["motif"] = cfg.seq.motif;
  seq["oracle"] = cfg.seq.oracle_json ? json::parse(*cfg.seq.oracle_json) : json(nullptr);
  seq["window"] = cfg.seq.window;
  seq["hidden"] = cfg.seq.hidden;
  seq["prior_checkpoint"] = cfg.seq.prior_checkpoint;
  seq["corpus_size"] = cfg.seq.corpus_size;
  seq["corpus_motif_rate"] = cfg.seq.corpus_motif_rate;
  seq["corpus_stop_prob"] = cfg.seq.corpus_stop_prob;
  seq["pretrain_epochs"] = cfg.seq.pretrain_epochs;
  seq["pretrain_batch"] = cfg.seq.pretrain_batch;
  seq["pretrain_lr"] = cfg.seq.pretrain_lr;
  j["sequence"] = seq;
  return j.dump(2);
}

void save_config(const std::string& path, const TrainConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << config_to_json_text(cfg) << "\n";
}

std::optional<uint64_t> env_seed_override() {
  const char* value = std::getenv("SOFTFLOW_SEED");
  if (!value || *value == '\0') return std::nullopt;
  try {
    return std::stoull(value);
  } catch (const std::exception&) {
    throw std::invalid_argument("SOFTFLOW_SEED: not a valid unsigned integer");
  }
}

}  // namespace softflow
