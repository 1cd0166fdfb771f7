#pragma once

#include <variant>
#include <vector>

#include "softflow/grid_env.hpp"
#include "softflow/seq_env.hpp"
#include "softflow/trajectory.hpp"

namespace softflow {

// Uniform view over the two environments. All values are immutable after
// construction; safe to share across threads.
class Env {
 public:
  explicit Env(GridSpec spec);
  explicit Env(SeqSpec spec);

  EnvKind kind() const { return kind_; }
  const GridSpec& grid() const;
  const SeqSpec& seq() const;

  // Returns a copy with a swapped feasibility oracle (buffers and policies
  // carry over; used by the adaptation protocol).
  Env with_oracle(Dfa oracle) const;
  Env with_infeasible_region(GridRegionPredicate predicate) const;

  int action_count() const;
  EnvState initial_state() const;
  bool is_terminal(const EnvState& s) const;
  std::vector<bool> action_mask(const EnvState& s) const;
  EnvState apply(const EnvState& s, int action) const;

  TerminalObject terminal_of(const EnvState& s) const;
  double reward_raw(const TerminalObject& t) const;
  bool feasible(const TerminalObject& t) const;

  // log P_B(tau | x): zero for sequences (deterministic backward); for the
  // grid the fixed uniform-parent backward, with the stop transition
  // contributing log 1 = 0.
  double log_pb(const Trajectory& traj) const;

  // Builds a full trajectory (states, terminal, reward, feasibility) from an
  // action list starting at the initial state.
  Trajectory trajectory_from_actions(const std::vector<int>& actions) const;
  // Sequence-only: the deterministic trajectory spelling out `s` then <eos>.
  Trajectory trajectory_from_string(const std::string& s) const;

 private:
  EnvKind kind_;
  std::variant<GridSpec, SeqSpec> spec_;
};

}  // namespace softflow
