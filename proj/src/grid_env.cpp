#include "softflow/grid_env.hpp"

#include <cmath>
#include <stdexcept>

namespace softflow {

void GridSpec::validate() const {
  if (side < 4) throw std::invalid_argument("GridSpec: side must be >= 4");
  if (r0 <= 0.0) throw std::invalid_argument("GridSpec: r0 must be strictly positive");
  if (r1 < 0.0 || r2 < 0.0) throw std::invalid_argument("GridSpec: reward bonuses must be >= 0");
}

std::vector<int> grid_valid_actions(const GridSpec& spec, const GridState& state) {
  if (!spec.in_bounds(state)) throw std::invalid_argument("grid_valid_actions: state out of bounds");
  std::vector<int> actions;
  if (state.x + 1 < spec.side) actions.push_back(kGridIncX);
  if (state.y + 1 < spec.side) actions.push_back(kGridIncY);
  actions.push_back(kGridStop);
  return actions;
}

GridState grid_step(const GridSpec& spec, const GridState& state, int action) {
  if (!spec.in_bounds(state)) throw std::invalid_argument("grid_step: state out of bounds");
  if (state.stopped) throw std::invalid_argument("grid_step: state already terminal");
  switch (action) {
    case kGridIncX:
      if (state.x + 1 >= spec.side) throw std::invalid_argument("grid_step: x increment out of bounds");
      return {state.x + 1, state.y, false};
    case kGridIncY:
      if (state.y + 1 >= spec.side) throw std::invalid_argument("grid_step: y increment out of bounds");
      return {state.x, state.y + 1, false};
    case kGridStop:
      return {state.x, state.y, true};
    default:
      throw std::invalid_argument("grid_step: unknown action");
  }
}

double grid_reward(const GridSpec& spec, const GridState& state) {
  if (!spec.in_bounds(state)) throw std::invalid_argument("grid_reward: state out of bounds");
  const double tx = std::abs(static_cast<double>(state.x) / (spec.side - 1) - 0.5);
  const double ty = std::abs(static_cast<double>(state.y) / (spec.side - 1) - 0.5);
  const bool ring1 = tx > 0.25 && tx <= 0.5 && ty > 0.25 && ty <= 0.5;
  const bool ring2 = tx > 0.3 && tx < 0.4 && ty > 0.3 && ty < 0.4;
  return spec.r0 + (ring1 ? spec.r1 : 0.0) + (ring2 ? spec.r2 : 0.0);
}

bool grid_feasible(const GridSpec& spec, const GridState& state) {
  if (!spec.in_bounds(state)) throw std::invalid_argument("grid_feasible: state out of bounds");
  if (spec.infeasible_region == GridRegionPredicate::none) return true;
  return !(state.x < spec.side / 2 && state.y >= spec.side / 2);
}

std::vector<GridState> grid_parents(const GridSpec& spec, const GridState& state) {
  if (!spec.in_bounds(state)) throw std::invalid_argument("grid_parents: state out of bounds");
  std::vector<GridState> parents;
  if (state.x > 0) parents.push_back({state.x - 1, state.y, false});
  if (state.y > 0) parents.push_back({state.x, state.y - 1, false});
  return parents;
}

std::vector<double> enumerate_grid_target(const GridSpec& spec, double beta, bool constrained) {
  spec.validate();
  if (spec.side > 64) throw std::invalid_argument("enumerate_grid_target: side must be <= 64");
  if (beta <= 0.0) throw std::invalid_argument("enumerate_grid_target: beta must be positive");
  std::vector<double> mass(static_cast<size_t>(spec.side) * spec.side, 0.0);
  double z = 0.0;
  for (int y = 0; y < spec.side; ++y) {
    for (int x = 0; x < spec.side; ++x) {
      GridState s{x, y, false};
      double w = std::pow(grid_reward(spec, s), beta);
      if (constrained && !grid_feasible(spec, s)) w = 0.0;
      mass[static_cast<size_t>(y) * spec.side + x] = w;
      z += w;
    }
  }
  for (double& m : mass) m /= z;
  return mass;
}

}  // namespace softflow
