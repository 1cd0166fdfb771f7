#pragma once

#include <string>
#include <vector>

#include "softflow/trainer.hpp"

namespace softflow {

// Fixed-header CSV, one row per evaluation record. Floats carry 9
// significant digits; absent metrics are empty fields.
inline constexpr const char* kMetricsHeader =
    "step,positive_ratio,mean_reward,pos_top100,diversity,n_unique,grid_l1,loss_rtb,loss_aux";

std::string metrics_to_csv(const std::vector<MetricsRecord>& records);
void write_metrics(const std::string& path, const std::vector<MetricsRecord>& records);

// H x H comma-separated probabilities. File rows run y = H-1 down to 0 (top
// row first, so the plotted-upward convention reads naturally); columns run
// x = 0..H-1. `probabilities` is indexed y*H + x.
void write_heatmap(const std::string& path, int side, const std::vector<double>& probabilities,
                   const std::string& label);
std::vector<double> read_heatmap(const std::string& path, int side);

std::string format_float(double v);  // the CSV float format (%.9g)

}  // namespace softflow
