#include "softflow/metrics_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace softflow {

std::string format_float(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

namespace {

std::string opt_field(const std::optional<double>& v) {
  return v ? format_float(*v) : std::string();
}

}  // namespace

std::string metrics_to_csv(const std::vector<MetricsRecord>& records) {
  std::ostringstream out;
  out << kMetricsHeader << "\n";
  for (const MetricsRecord& r : records) {
    out << r.step << ',' << format_float(r.positive_ratio) << ',' << format_float(r.mean_reward)
        << ',' << opt_field(r.pos_top_k) << ',' << format_float(r.diversity) << ',' << r.n_unique
        << ',' << opt_field(r.grid_l1) << ',' << opt_field(r.loss_rtb) << ','
        << opt_field(r.loss_aux) << "\n";
  }
  return out.str();
}

void write_metrics(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_metrics: cannot write " + path);
  out << metrics_to_csv(records);
  if (!out) throw std::runtime_error("write_metrics: write failed for " + path);
}

void write_heatmap(const std::string& path, int side, const std::vector<double>& probabilities,
                   const std::string& label) {
  if (static_cast<size_t>(side) * side != probabilities.size())
    throw std::invalid_argument("write_heatmap: value count does not match side");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_heatmap: cannot write " + path);
  out << "# " << label << "; rows y=" << side - 1 << "..0 top to bottom, columns x=0.." << side - 1
      << " left to right\n";
  for (int y = side - 1; y >= 0; --y) {
    for (int x = 0; x < side; ++x) {
      out << (x ? "," : "") << format_float(probabilities[static_cast<size_t>(y) * side + x]);
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write_heatmap: write failed for " + path);
}

std::vector<double> read_heatmap(const std::string& path, int side) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_heatmap: cannot open " + path);
  std::vector<double> values(static_cast<size_t>(side) * side, 0.0);
  std::string line;
  int y = side - 1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (y < 0) throw std::runtime_error("read_heatmap: too many rows");
    std::istringstream row(line);
    std::string cell;
    for (int x = 0; x < side; ++x) {
      if (!std::getline(row, cell, ',')) throw std::runtime_error("read_heatmap: short row");
      values[static_cast<size_t>(y) * side + x] = std::stod(cell);
    }
    --y;
  }
  if (y != -1) throw std::runtime_error("read_heatmap: missing rows");
  return values;
}

}  // namespace softflow
