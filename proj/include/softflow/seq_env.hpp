#pragma once

#include <string>
#include <vector>

#include "softflow/rng.hpp"
#include "softflow/trajectory.hpp"

namespace softflow {

// Deterministic finite automaton over single-character tokens; the
// feasibility oracle for the sequence environment (the synthesizability
// stand-in). The transition table is total over the alphabet. Optional
// length bounds apply on top of acceptance.
struct Dfa {
  int num_states = 0;
  std::string alphabet;                 // distinct chars, order fixes column indices
  int start = 0;
  std::vector<bool> accepting;          // size num_states
  std::vector<std::vector<int>> next;   // [state][alphabet index] -> state
  int min_len = 1;
  int max_len_bound = -1;               // -1 means no explicit upper bound

  void validate() const;
  int symbol_index(char c) const;       // throws on a char outside the alphabet
  bool accepts(const std::string& s) const;
};

// Balanced parentheses with nesting depth <= max_depth over
// letters + "()"; accepts at depth zero. States 0..max_depth track depth,
// one extra dead state absorbs violations.
Dfa make_depth_dfa(int max_depth, const std::string& letters = "ab");

// JSON document layout:
// {"states": [0,...], "alphabet": ["a",...], "start": 0, "accepting": [0],
//  "transitions": [[from, "a", to], ...], "min_len": 1, "max_len": 24}
// min_len / max_len optional.
Dfa dfa_from_json_text(const std::string& text);
std::string dfa_to_json_text(const Dfa& dfa);
Dfa load_dfa(const std::string& path);

// Token-append sequence environment. vocab is an ordered token list with
// exactly one reserved "<eos>" entry; every other entry is one character.
// Action indices follow vocab order, so the end-of-sequence action is the
// vocab position of "<eos>".
struct SeqSpec {
  std::vector<std::string> vocab = {"a", "b", "(", ")", "<eos>"};
  int max_len = 24;
  std::string motif = "aba";
  Dfa oracle = make_depth_dfa(4);

  void validate() const;
  int eos_action() const;
  std::string letters() const;          // vocab minus <eos>, concatenated in order
  char action_char(int action) const;   // token appended by a non-eos action
  int char_action(char c) const;
};

inline constexpr const char* kEosToken = "<eos>";
inline constexpr double kSeqRewardBase = 0.1;

// Append one token (or terminate on <eos>).
SeqState seq_step(const SeqSpec& spec, const SeqState& state, int action);

// DFA acceptance plus length bounds. Throws on tokens outside the alphabet.
bool seq_feasible(const SeqSpec& spec, const std::string& s);

// R = 0.1 + number of (overlapping) motif occurrences; strictly positive.
double seq_reward(const SeqSpec& spec, const std::string& s);

// Exactly one random edit: substitute, insert, or delete one token, with the
// operation resampled while it would leave [1, max_len]. Substitution always
// picks a token different from the current one, so the result is at
// Levenshtein distance exactly 1 from the input.
//
// Draw order: op in {0=substitute,1=insert,2=delete} until valid, then
// position, then (for substitute/insert) the token index.
std::string mutate_sequence(const SeqSpec& spec, const std::string& s, RngStream& rng);

}  // namespace softflow
