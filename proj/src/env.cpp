#include "softflow/env.hpp"

#include <cmath>
#include <stdexcept>

namespace softflow {

Env::Env(GridSpec spec) : kind_(EnvKind::grid), spec_(std::move(spec)) {
  std::get<GridSpec>(spec_).validate();
}

Env::Env(SeqSpec spec) : kind_(EnvKind::sequence), spec_(std::move(spec)) {
  std::get<SeqSpec>(spec_).validate();
}

const GridSpec& Env::grid() const {
  if (kind_ != EnvKind::grid) throw std::logic_error("Env: not a grid environment");
  return std::get<GridSpec>(spec_);
}

const SeqSpec& Env::seq() const {
  if (kind_ != EnvKind::sequence) throw std::logic_error("Env: not a sequence environment");
  return std::get<SeqSpec>(spec_);
}

Env Env::with_oracle(Dfa oracle) const {
  SeqSpec spec = seq();
  spec.oracle = std::move(oracle);
  return Env(std::move(spec));
}

Env Env::with_infeasible_region(GridRegionPredicate predicate) const {
  GridSpec spec = grid();
  spec.infeasible_region = predicate;
  return Env(std::move(spec));
}

int Env::action_count() const {
  if (kind_ == EnvKind::grid) return kGridActionCount;
  return static_cast<int>(seq().vocab.size());
}

EnvState Env::initial_state() const {
  if (kind_ == EnvKind::grid) return GridState{0, 0, false};
  return SeqState{"", false};
}

bool Env::is_terminal(const EnvState& s) const {
  if (kind_ == EnvKind::grid) return std::get<GridState>(s).stopped;
  return std::get<SeqState>(s).terminated;
}

std::vector<bool> Env::action_mask(const EnvState& s) const {
  std::vector<bool> mask(static_cast<size_t>(action_count()), false);
  if (kind_ == EnvKind::grid) {
    for (int a : grid_valid_actions(grid(), std::get<GridState>(s))) mask[static_cast<size_t>(a)] = true;
  } else {
    const SeqSpec& spec = seq();
    const SeqState& state = std::get<SeqState>(s);
    if (state.terminated) throw std::invalid_argument("Env: action_mask on terminal state");
    const bool can_append = static_cast<int>(state.prefix.size()) < spec.max_len;
    for (size_t i = 0; i < spec.vocab.size(); ++i)
      mask[i] = can_append || static_cast<int>(i) == spec.eos_action();
  }
  return mask;
}

EnvState Env::apply(const EnvState& s, int action) const {
  if (kind_ == EnvKind::grid) return grid_step(grid(), std::get<GridState>(s), action);
  return seq_step(seq(), std::get<SeqState>(s), action);
}

TerminalObject Env::terminal_of(const EnvState& s) const {
  if (!is_terminal(s)) throw std::invalid_argument("Env: terminal_of on non-terminal state");
  if (kind_ == EnvKind::grid) return std::get<GridState>(s);
  return std::get<SeqState>(s).prefix;
}

double Env::reward_raw(const TerminalObject& t) const {
  if (kind_ == EnvKind::grid) return grid_reward(grid(), std::get<GridState>(t));
  return seq_reward(seq(), std::get<std::string>(t));
}

bool Env::feasible(const TerminalObject& t) const {
  if (kind_ == EnvKind::grid) return grid_feasible(grid(), std::get<GridState>(t));
  return seq_feasible(seq(), std::get<std::string>(t));
}

double Env::log_pb(const Trajectory& traj) const {
  if (kind_ == EnvKind::sequence) return 0.0;
  const GridSpec& spec = grid();
  double sum = 0.0;
  for (size_t i = 0; i + 1 < traj.states.size(); ++i) {
    if (traj.actions[i] == kGridStop) continue;  // deterministic backward through stop
    const GridState& child = std::get<GridState>(traj.states[i + 1]);
    const size_t parents = grid_parents(spec, child).size();
    sum += -std::log(static_cast<double>(parents));
  }
  return sum;
}

Trajectory Env::trajectory_from_actions(const std::vector<int>& actions) const {
  Trajectory traj;
  traj.kind = kind_;
  EnvState s = initial_state();
  traj.states.push_back(s);
  for (int a : actions) {
    s = apply(s, a);
    traj.actions.push_back(a);
    traj.states.push_back(s);
  }
  if (!is_terminal(s)) throw std::invalid_argument("Env: action list does not terminate");
  traj.terminal = terminal_of(s);
  traj.reward_raw = reward_raw(traj.terminal);
  traj.feasible = feasible(traj.terminal);
  return traj;
}

Trajectory Env::trajectory_from_string(const std::string& s) const {
  const SeqSpec& spec = seq();
  if (static_cast<int>(s.size()) > spec.max_len)
    throw std::invalid_argument("Env: string longer than max_len");
  std::vector<int> actions;
  actions.reserve(s.size() + 1);
  for (char c : s) actions.push_back(spec.char_action(c));
  actions.push_back(spec.eos_action());
  return trajectory_from_actions(actions);
}

}  // namespace softflow
