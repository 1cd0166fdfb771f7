#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>

#include "softflow/env.hpp"
#include "softflow/grid_env.hpp"
#include "softflow/seq_env.hpp"

using namespace softflow;

namespace {

GridSpec default_grid(int side = 32) {
  GridSpec spec;
  spec.side = side;
  return spec;
}

// Brute-force oracle: balanced parentheses with depth bound via an explicit
// stack counter, letters pass through.
bool brute_force_balanced(const std::string& s, int max_depth) {
  int depth = 0;
  for (char c : s) {
    if (c == '(') {
      if (++depth > max_depth) return false;
    } else if (c == ')') {
      if (--depth < 0) return false;
    }
  }
  return depth == 0;
}

size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), size_t{0});
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

TEST_CASE("grid_valid_actions") {
  const GridSpec spec = default_grid();
  auto at = [&](int x, int y) { return grid_valid_actions(spec, {x, y, false}); };
  CHECK(at(0, 0) == std::vector<int>{kGridIncX, kGridIncY, kGridStop});
  CHECK(at(31, 31) == std::vector<int>{kGridStop});
  CHECK(at(31, 5) == std::vector<int>{kGridIncY, kGridStop});
}

TEST_CASE("grid_step") {
  const GridSpec spec = default_grid();
  GridState s = grid_step(spec, {3, 4, false}, kGridIncX);
  CHECK((s.x == 4 && s.y == 4 && !s.stopped));
  GridState t = grid_step(spec, {3, 4, false}, kGridStop);
  CHECK((t.x == 3 && t.y == 4 && t.stopped));
  CHECK_THROWS_AS(grid_step(spec, {31, 0, false}, kGridIncX), std::invalid_argument);
  CHECK_THROWS_AS(grid_step(spec, t, kGridIncY), std::invalid_argument);
}

TEST_CASE("grid_reward default constants") {
  const GridSpec spec = default_grid();
  CHECK(grid_reward(spec, {16, 16, false}) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(grid_reward(spec, {2, 2, false}) == doctest::Approx(0.501).epsilon(1e-12));
  CHECK(grid_reward(spec, {4, 4, false}) == doctest::Approx(2.501).epsilon(1e-12));
  // Strictly positive everywhere.
  for (int y = 0; y < spec.side; ++y)
    for (int x = 0; x < spec.side; ++x) CHECK(grid_reward(spec, {x, y, false}) > 0.0);
}

TEST_CASE("grid_feasible upper-left quadrant") {
  const GridSpec spec = default_grid();
  CHECK_FALSE(grid_feasible(spec, {3, 28, false}));
  CHECK(grid_feasible(spec, {3, 3, false}));
  CHECK(grid_feasible(spec, {16, 16, false}));
  CHECK(grid_feasible(spec, {28, 3, false}));

  GridSpec open = default_grid();
  open.infeasible_region = GridRegionPredicate::none;
  CHECK(grid_feasible(open, {3, 28, false}));
}

TEST_CASE("grid_parents") {
  const GridSpec spec = default_grid();
  auto parents = grid_parents(spec, {1, 1, false});
  REQUIRE(parents.size() == 2);
  CHECK((parents[0].x == 0 && parents[0].y == 1));
  CHECK((parents[1].x == 1 && parents[1].y == 0));
  CHECK(grid_parents(spec, {0, 0, false}).empty());
  auto up = grid_parents(spec, {0, 5, false});
  REQUIRE(up.size() == 1);
  CHECK((up[0].x == 0 && up[0].y == 4));
}

TEST_CASE("grid step/parents mutual consistency (exhaustive, H=16)") {
  const GridSpec spec = default_grid(16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const GridState s{x, y, false};
      // children(s) via increments only.
      std::set<std::pair<int, int>> children;
      for (int a : grid_valid_actions(spec, s)) {
        if (a == kGridStop) continue;
        const GridState c = grid_step(spec, s, a);
        children.insert({c.x, c.y});
      }
      for (const auto& [cx, cy] : children) {
        const auto parents = grid_parents(spec, {cx, cy, false});
        const bool found = std::any_of(parents.begin(), parents.end(), [&](const GridState& p) {
          return p.x == x && p.y == y;
        });
        CHECK(found);
      }
      // Inverse direction: every parent of s has s among its children.
      for (const GridState& p : grid_parents(spec, s)) {
        bool found = false;
        for (int a : grid_valid_actions(spec, p)) {
          if (a == kGridStop) continue;
          const GridState c = grid_step(spec, p, a);
          if (c.x == x && c.y == y) found = true;
        }
        CHECK(found);
      }
    }
  }
}

TEST_CASE("seq_step") {
  SeqSpec spec;
  const SeqState s1 = seq_step(spec, {"", false}, spec.char_action('a'));
  CHECK(s1.prefix == "a");
  CHECK_FALSE(s1.terminated);
  const SeqState s2 = seq_step(spec, {"ab", false}, spec.eos_action());
  CHECK(s2.prefix == "ab");
  CHECK(s2.terminated);
  SeqState full{std::string(static_cast<size_t>(spec.max_len), 'a'), false};
  CHECK_THROWS_AS(seq_step(spec, full, spec.char_action('a')), std::invalid_argument);
  CHECK_FALSE(seq_step(spec, full, spec.eos_action()).prefix.empty());
  CHECK_THROWS_AS(seq_step(spec, s2, spec.char_action('a')), std::invalid_argument);
}

TEST_CASE("seq_feasible examples") {
  SeqSpec spec;
  CHECK(seq_feasible(spec, "(aba)"));
  CHECK_FALSE(seq_feasible(spec, "((a"));
  CHECK_FALSE(seq_feasible(spec, "(((((a)))))"));  // depth 5 exceeds the bound
  CHECK_FALSE(seq_feasible(spec, ""));             // length floor
  CHECK_THROWS_AS(seq_feasible(spec, "a$c"), std::invalid_argument);
}

TEST_CASE("seq_feasible equals brute-force balance checker up to length 8") {
  SeqSpec spec;
  const std::string alphabet = spec.letters();
  // Exhaustive strings over the 4-token default vocab, lengths 0..8.
  for (int len = 0; len <= 8; ++len) {
    std::string s(static_cast<size_t>(len), alphabet[0]);
    std::vector<int> idx(static_cast<size_t>(len), 0);
    for (;;) {
      for (int i = 0; i < len; ++i) s[static_cast<size_t>(i)] = alphabet[static_cast<size_t>(idx[static_cast<size_t>(i)])];
      const bool expected = brute_force_balanced(s, 4) && len >= 1;
      CHECK(seq_feasible(spec, s) == expected);
      int pos = len - 1;
      while (pos >= 0 && idx[static_cast<size_t>(pos)] == 3) idx[static_cast<size_t>(pos--)] = 0;
      if (pos < 0) break;
      ++idx[static_cast<size_t>(pos)];
    }
  }
}

TEST_CASE("seq_reward overlapping motif count") {
  SeqSpec spec;
  CHECK(seq_reward(spec, "ababa") == doctest::Approx(2.1).epsilon(1e-12));
  CHECK(seq_reward(spec, "") == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(seq_reward(spec, "(aba)b") == doctest::Approx(1.1).epsilon(1e-12));
}

TEST_CASE("mutate_sequence is a single edit") {
  SeqSpec spec;
  RngStream rng(7);
  for (int i = 0; i < 500; ++i) {
    const std::string inputs[] = {"(ab)", "a", "((aba))", "abab", "(((a)))b"};
    const std::string& in = inputs[i % 5];
    const std::string out = mutate_sequence(spec, in, rng);
    CHECK(levenshtein(in, out) == 1);
    CHECK(out.size() >= 1);
    CHECK(static_cast<int>(out.size()) <= spec.max_len);
  }
  CHECK_THROWS_AS(mutate_sequence(spec, "", rng), std::invalid_argument);

  // "a" can never be deleted (length floor); only substitution or insertion.
  for (int i = 0; i < 200; ++i) {
    const std::string out = mutate_sequence(spec, "a", rng);
    CHECK(!out.empty());
  }
}

TEST_CASE("mutate_sequence pinned seed-42 stream") {
  SeqSpec spec;
  RngStream rng(42);
  // Regression pin of the documented draw order (op, position, token).
  CHECK(mutate_sequence(spec, "(aba)", rng) == "(abab");
}

TEST_CASE("enumerate_grid_target") {
  GridSpec spec = default_grid(8);

  // Normalization, both modes.
  for (bool constrained : {false, true}) {
    const std::vector<double> p = enumerate_grid_target(spec, 1.0, constrained);
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    CHECK(std::abs(total - 1.0) < 1e-12);
  }

  // Constrained: every upper-left-quadrant cell has zero mass.
  const std::vector<double> constrained = enumerate_grid_target(spec, 1.0, true);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if (x < 4 && y >= 4) CHECK(constrained[static_cast<size_t>(y) * 8 + x] == 0.0);

  // Reward ratio 2.501 / 0.001 survives normalization.
  const std::vector<double> open = enumerate_grid_target(spec, 1.0, false);
  REQUIRE(grid_reward(spec, {1, 1, false}) == doctest::Approx(2.501));
  REQUIRE(grid_reward(spec, {3, 3, false}) == doctest::Approx(0.001));
  const double ratio = open[1 * 8 + 1] / open[3 * 8 + 3];
  CHECK(ratio == doctest::Approx(2501.0).epsilon(1e-9));

  CHECK_THROWS_AS(enumerate_grid_target(default_grid(128), 1.0, false), std::invalid_argument);
}

TEST_CASE("dfa json round trip and validation") {
  const Dfa dfa = make_depth_dfa(4);
  const Dfa back = dfa_from_json_text(dfa_to_json_text(dfa));
  CHECK(back.num_states == dfa.num_states);
  CHECK(back.alphabet == dfa.alphabet);
  CHECK(back.accepts("(aba)"));
  CHECK_FALSE(back.accepts("((a"));

  CHECK_THROWS_AS(dfa_from_json_text("{"), std::invalid_argument);
  CHECK_THROWS_AS(dfa_from_json_text("{\"states\":[0]}"), std::invalid_argument);
  // Non-total transition table.
  CHECK_THROWS_AS(dfa_from_json_text(R"({"states":[0],"alphabet":["a","b"],"start":0,
    "accepting":[0],"transitions":[[0,"a",0]]})"),
                  std::invalid_argument);
  // Nondeterministic duplicate transition.
  CHECK_THROWS_AS(dfa_from_json_text(R"({"states":[0],"alphabet":["a"],"start":0,
    "accepting":[0],"transitions":[[0,"a",0],[0,"a",0]]})"),
                  std::invalid_argument);
}

TEST_CASE("env facade trajectory building and log_pb") {
  const Env grid(default_grid());
  // (0,0) -> (1,0) -> (1,1) -> stop: log 1 + log(1/2) then 0 for the stop.
  const Trajectory t = grid.trajectory_from_actions({kGridIncX, kGridIncY, kGridStop});
  CHECK(t.states.size() == 4);
  CHECK(t.actions.size() == 3);
  CHECK(grid.log_pb(t) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  CHECK(terminal_key(t.terminal) == "1,1");

  // Straight line along one axis: single parents, log_pb 0.
  const Trajectory line = grid.trajectory_from_actions({kGridIncX, kGridIncX, kGridStop});
  CHECK(grid.log_pb(line) == doctest::Approx(0.0));

  const Env seq((SeqSpec()));
  const Trajectory s = seq.trajectory_from_string("(aba)");
  CHECK(seq.log_pb(s) == 0.0);
  CHECK(s.feasible);
  CHECK(s.reward_raw == doctest::Approx(1.1));
  CHECK(s.actions.size() == 6);  // five tokens plus <eos>
  CHECK(s.states.size() == 7);
}
