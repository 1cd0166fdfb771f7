#pragma once

#include <string>

#include "softflow/trainer.hpp"

namespace softflow {

// Versioned binary checkpoint, little-endian:
//   magic "SFLW" | u32 version | u64 header_len | header JSON
//   | u64 tensor_bytes | raw f64 payloads | u64 buffer_bytes | buffer records
//
// The header carries the full config echo, step counter, RNG engine state,
// optimizer step counts, network layouts, and the tensor name/shape table
// (payloads follow in table order). Buffers serialize as action lists plus
// the stored terminal evaluation; states are rebuilt by replaying the
// actions on load. load(save(state)) resumes training bit-for-bit.
void save_checkpoint(const std::string& path, const TrainerState& state);
TrainerState load_checkpoint(const std::string& path);

inline constexpr uint32_t kCheckpointVersion = 1;

}  // namespace softflow
