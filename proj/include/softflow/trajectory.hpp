#pragma once

#include <string>
#include <variant>
#include <vector>

namespace softflow {

enum class EnvKind { grid, sequence };

// Position on the 2-D grid; `stopped` marks the post-stop terminal copy.
struct GridState {
  int x = 0;
  int y = 0;
  bool stopped = false;
};

inline bool same_cell(const GridState& a, const GridState& b) { return a.x == b.x && a.y == b.y; }

// Token prefix; `terminated` is set once the end-of-sequence action fires.
struct SeqState {
  std::string prefix;
  bool terminated = false;
};

using EnvState = std::variant<GridState, SeqState>;

// The object a trajectory terminates in: a grid cell or a finished string.
using TerminalObject = std::variant<GridState, std::string>;

// One complete rollout: the unit flowing through losses and replay buffers.
// states[0] is the initial state and states.back() the terminal marker, so
// |actions| == |states| - 1 always holds. reward_raw and feasible are the
// environment's evaluation of the terminal object (reward untempered).
struct Trajectory {
  EnvKind kind = EnvKind::grid;
  std::vector<EnvState> states;
  std::vector<int> actions;
  TerminalObject terminal;
  double reward_raw = 0.0;
  bool feasible = false;
};

inline std::string terminal_key(const TerminalObject& t) {
  if (std::holds_alternative<GridState>(t)) {
    const GridState& g = std::get<GridState>(t);
    return std::to_string(g.x) + "," + std::to_string(g.y);
  }
  return std::get<std::string>(t);
}

}  // namespace softflow
