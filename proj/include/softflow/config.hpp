#pragma once

#include <optional>
#include <string>

#include "softflow/trainer.hpp"

namespace softflow {

// JSON <-> TrainConfig. Unknown keys are rejected at every level; absent
// optional keys take their defaults (alpha/beta/steps resolve per
// environment). The serialized form is canonical (sorted keys), so
// config_to_json_text(load(text)) round-trips exactly.
TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config(const std::string& path);
std::string config_to_json_text(const TrainConfig& cfg);
void save_config(const std::string& path, const TrainConfig& cfg);

inline bool config_equals(const TrainConfig& a, const TrainConfig& b) {
  return config_to_json_text(a) == config_to_json_text(b);
}

// SOFTFLOW_SEED environment variable, parsed when set.
std::optional<uint64_t> env_seed_override();

}  // namespace softflow
