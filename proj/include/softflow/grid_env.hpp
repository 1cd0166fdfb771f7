#pragma once

#include <vector>

#include "softflow/trajectory.hpp"

namespace softflow {

// Grid actions: increment one axis or stop in place.
inline constexpr int kGridIncX = 0;
inline constexpr int kGridIncY = 1;
inline constexpr int kGridStop = 2;
inline constexpr int kGridActionCount = 3;

enum class GridRegionPredicate { upper_left_quadrant, none };

// Deceptive 2-D grid: high-reward rings near the four corners separated from
// the start by a low-reward plateau, with an optional infeasible quadrant.
//
// Reward at cell c with t_i = |c_i/(H-1) - 0.5|:
//   R = r0 + r1 * prod_i I[0.25 < t_i <= 0.5] + r2 * prod_i I[0.3 < t_i < 0.4]
struct GridSpec {
  int side = 32;  // H, cells per axis; the space is H x H
  double r0 = 0.001;
  double r1 = 0.5;
  double r2 = 2.0;
  GridRegionPredicate infeasible_region = GridRegionPredicate::upper_left_quadrant;

  void validate() const;
  bool in_bounds(const GridState& s) const {
    return s.x >= 0 && s.x < side && s.y >= 0 && s.y < side;
  }
};

// Valid moves from `state`: increments filtered by bounds, plus stop (always).
std::vector<int> grid_valid_actions(const GridSpec& spec, const GridState& state);

// Apply one action. Stop returns the same cell flagged terminal.
GridState grid_step(const GridSpec& spec, const GridState& state, int action);

double grid_reward(const GridSpec& spec, const GridState& state);

// False iff x < H/2 and y >= H/2 (axis 0 horizontal, axis 1 vertical plotted
// upward: the upper-left quadrant).
bool grid_feasible(const GridSpec& spec, const GridState& state);

// States reachable by decrementing one positive coordinate.
std::vector<GridState> grid_parents(const GridSpec& spec, const GridState& state);

// Exact target distribution p*(c) = R(c)^beta * I[feasible or !constrained] / Z
// over all H*H cells, row-major by (y, x) with index y*H + x. Enumeration
// oracle for tests and heatmaps; requires H <= 64.
std::vector<double> enumerate_grid_target(const GridSpec& spec, double beta, bool constrained);

}  // namespace softflow
