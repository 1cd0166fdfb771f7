#pragma once

namespace softflow {

inline constexpr const char* kVersionString = "softflow 0.1.0";
inline constexpr const char* kSeedEnvVar = "SOFTFLOW_SEED";

}  // namespace softflow
