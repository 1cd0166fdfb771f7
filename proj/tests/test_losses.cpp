#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>

#include "softflow/losses.hpp"
#include "softflow/policy.hpp"
#include "softflow/trainer.hpp"
#include "test_helpers.hpp"

using namespace softflow;

TEST_CASE("tb_loss hand values") {
  CHECK(tb_loss(0, 0, 0, 0) == 0.0);
  CHECK(tb_loss(0.5, -2.0, -1.0, -1.0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS(tb_loss(std::nan(""), 0, 0, 0), std::invalid_argument);

  // d/dlogZ = 2 * residual: residual 0.5 gives gradient 1.0.
  Tape tape;
  const ValueId log_z = tape.leaf(Tensor::scalar(0.5), "logZ");
  const ValueId pf = tape.leaf(Tensor::scalar(-2.0));
  // residual = logZ + pf - log_r - log_pb with log_r = log_pb = -1.
  const ValueId residual = tape.add_const(tape.add(pf, log_z), 2.0);
  const ValueId loss = tape.square(residual);
  CHECK(tape.value(loss).item() == doctest::Approx(0.25).epsilon(1e-12));
  const GradientMap g = tape.backward(loss, Tensor::scalar(1.0));
  CHECK(g.at("logZ").item() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rtb_loss hand values") {
  CHECK(rtb_loss(0, -3.0, -3.0, 0) == 0.0);  // posterior == prior at logZ 0, log_r 0
  CHECK(rtb_loss(0, -3.0, -3.0, std::log(2.0)) ==
        doctest::Approx(std::log(2.0) * std::log(2.0)).epsilon(1e-12));
  CHECK(rtb_loss(0, -3.0, -3.0, std::log(2.0)) == doctest::Approx(0.480453014).epsilon(1e-8));
}

TEST_CASE("onpolicy_positive_loss") {
  LossBatchInputs batch;
  batch.log_z = 0.5;
  CHECK_FALSE(onpolicy_positive_loss(batch).has_value());  // empty set: no update

  batch.positives.push_back({-2.0, -1.0, -1.0});  // residual 0.5 -> loss 0.25
  CHECK(*onpolicy_positive_loss(batch) == doctest::Approx(0.25).epsilon(1e-12));

  // Mean of two: 0.2 and 0.4 -> 0.3.
  LossBatchInputs two;
  two.log_z = 0.0;
  const double r1 = std::sqrt(0.2), r2 = std::sqrt(0.4);
  two.positives.push_back({r1, 0.0, 0.0});
  two.positives.push_back({r2, 0.0, 0.0});
  CHECK(*onpolicy_positive_loss(two) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("aux_loss closed forms") {
  const double pos[] = {0.0};
  const double neg[] = {0.0};
  CHECK(aux_loss(pos, neg) == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  const double strong[] = {10.0};
  CHECK(aux_loss(strong, neg) == doctest::Approx(std::log(1.0 + std::exp(-10.0))).epsilon(1e-9));
  CHECK(aux_loss(strong, neg) == doctest::Approx(4.54e-5).epsilon(1e-2));

  const double two_pos[] = {0.0, 0.0};
  CHECK(aux_loss(two_pos, neg) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));

  CHECK_THROWS_AS(aux_loss(std::span<const double>{}, neg), std::invalid_argument);
  CHECK_THROWS_AS(aux_loss(pos, std::span<const double>{}), std::invalid_argument);
}

TEST_CASE("aux_loss monotonicity by finite differences") {
  const double eps = 1e-6;
  std::vector<double> pos = {0.3, -0.7};
  std::vector<double> neg = {-0.1, 0.4, 0.05};
  // Strictly decreasing in each positive score.
  for (size_t i = 0; i < pos.size(); ++i) {
    std::vector<double> up = pos;
    up[i] += eps;
    CHECK(aux_loss(up, neg) < aux_loss(pos, neg));
  }
  // Strictly increasing in each negative score.
  for (size_t i = 0; i < neg.size(); ++i) {
    std::vector<double> up = neg;
    up[i] += eps;
    CHECK(aux_loss(pos, up) > aux_loss(pos, neg));
  }
}

TEST_CASE("aux_loss literal form: positives excluded from each other's denominators") {
  // Shift invariance holds with a single positive...
  const std::vector<double> one_pos = {0.2};
  const std::vector<double> negs = {-0.4, 0.1};
  std::vector<double> one_pos_shift = {1.2};
  std::vector<double> negs_shift = {0.6, 1.1};
  CHECK(aux_loss(one_pos, negs) == doctest::Approx(aux_loss(one_pos_shift, negs_shift)).epsilon(1e-12));

  // ...and the value equals the sum of independent per-positive terms.
  const std::vector<double> two_pos = {0.2, -1.0};
  const double separate = aux_loss(std::vector<double>{0.2}, negs) +
                          aux_loss(std::vector<double>{-1.0}, negs);
  CHECK(aux_loss(two_pos, negs) == doctest::Approx(separate).epsilon(1e-12));
}

TEST_CASE("replay_loss composition") {
  LossBatchInputs batch;
  batch.log_z = 0.0;
  const double r = std::sqrt(0.3);
  batch.positives.push_back({r, 0.0, 0.0});  // balance term 0.3
  batch.negative_scores = {r};               // symmetric scores -> aux ln 2

  CHECK(replay_loss(batch, 0.0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(replay_loss(batch, 0.01) ==
        doctest::Approx(0.3 + 0.01 * std::log(2.0)).epsilon(1e-12));

  // Mutant negatives at symmetric scores double the aux contribution.
  batch.mutant_scores = {r};
  CHECK(replay_loss(batch, 0.01) ==
        doctest::Approx(0.3 + 0.02 * std::log(2.0)).epsilon(1e-12));

  LossBatchInputs empty;
  CHECK_THROWS_AS(replay_loss(empty, 0.0), std::invalid_argument);
}

TEST_CASE("temper_reward and shaped_reward") {
  CHECK(temper_reward(0.5, 2.0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(temper_reward(0.7, 1.0) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(log_tempered_reward(0.5, 2.0) == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-12));
  CHECK_THROWS_AS(temper_reward(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(temper_reward(1.0, 0.0), std::invalid_argument);

  CHECK(shaped_reward(0.8, true, 1e-8) == 0.8);
  CHECK(shaped_reward(123.0, false, 1e-8) == 1e-8);
  CHECK(shaped_reward(0.8, true, 1e-3) == 0.8);  // floor never touches feasible rewards
  CHECK_THROWS_AS(shaped_reward(0.8, true, 0.0), std::invalid_argument);
}

TEST_CASE("loss graphs agree with the pure forms") {
  // Balance graph vs mean of rtb_loss.
  Tape tape;
  const ValueId log_z = tape.leaf(Tensor::scalar(0.37), "logZ");
  const ValueId pf = tape.leaf(Tensor({3, 1}, {-1.0, -2.5, 0.4}));
  const std::vector<double> constants = {0.2, -1.0, 1.5};  // log_r + ref per entry
  const ValueId loss = balance_loss_graph(tape, pf, log_z, constants);
  double expected = 0.0;
  const double pf_values[] = {-1.0, -2.5, 0.4};
  for (int i = 0; i < 3; ++i) {
    const double residual = 0.37 + pf_values[i] - constants[static_cast<size_t>(i)];
    expected += residual * residual;
  }
  expected /= 3.0;
  CHECK(tape.value(loss).item() == doctest::Approx(expected).epsilon(1e-12));

  // Aux graph vs pure aux_loss.
  const std::vector<double> pos = {0.3, -0.7, 0.05};
  const std::vector<double> neg = {-0.1, 0.4};
  Tape tape2;
  const ValueId pos_col = tape2.leaf(Tensor({3, 1}, pos));
  const ValueId neg_row = tape2.leaf(Tensor({1, 2}, neg));
  const ValueId aux = aux_loss_graph(tape2, pos_col, neg_row);
  CHECK(tape2.value(aux).item() == doctest::Approx(aux_loss(pos, neg)).epsilon(1e-12));
}

TEST_CASE("aux graph gradients match finite differences") {
  std::vector<double> pos = {0.3, -0.7, 0.05};
  std::vector<double> neg = {-0.1, 0.4};
  Tensor pos_t({3, 1}, pos);
  Tensor neg_t({1, 2}, neg);
  auto loss = [&] {
    Tape tape;
    const ValueId p = tape.leaf(pos_t, "pos");
    const ValueId n = tape.leaf(neg_t, "neg");
    return tape.value(aux_loss_graph(tape, p, n)).item();
  };
  Tape tape;
  const ValueId p = tape.leaf(pos_t, "pos");
  const ValueId n = tape.leaf(neg_t, "neg");
  const GradientMap analytic = tape.backward(aux_loss_graph(tape, p, n), Tensor::scalar(1.0));
  const GradientMap fd = softflow::testing::finite_difference_gradients(
      {{"pos", &pos_t}, {"neg", &neg_t}}, loss);
  CHECK(softflow::testing::max_relative_gradient_error(analytic, fd) < 1e-6);
}

namespace {

// Single-state DFA accepting every string over `letters` (any length).
Dfa accept_all_dfa(const std::string& letters) {
  Dfa dfa;
  dfa.num_states = 1;
  dfa.alphabet = letters;
  dfa.start = 0;
  dfa.accepting = {true};
  dfa.next = {std::vector<int>(letters.size(), 0)};
  dfa.min_len = 0;
  return dfa;
}

// Exact terminal distribution of a sequence policy by enumerating every
// trajectory (vocab {a,b}, short max_len: the 2-level toy tree).
std::map<std::string, double> enumerate_policy_distribution(const Policy& policy, const Env& env) {
  std::map<std::string, double> dist;
  struct Item {
    EnvState state;
    double log_p;
  };
  std::vector<Item> stack{{env.initial_state(), 0.0}};
  while (!stack.empty()) {
    Item item = stack.back();
    stack.pop_back();
    if (env.is_terminal(item.state)) {
      dist[terminal_key(env.terminal_of(item.state))] += std::exp(item.log_p);
      continue;
    }
    const std::vector<double> lp = action_log_probs(policy, env, item.state);
    const std::vector<bool> mask = env.action_mask(item.state);
    for (size_t a = 0; a < lp.size(); ++a) {
      if (!mask[a]) continue;
      stack.push_back({env.apply(item.state, static_cast<int>(a)), item.log_p + lp[a]});
    }
  }
  return dist;
}

}  // namespace

TEST_CASE("driving RTB to zero implies posterior proportional to R * prior") {
  // Enumerable toy tree: vocab {a,b}, max_len 2, seven terminal strings.
  SeqSpec spec;
  spec.vocab = {"a", "b", "<eos>"};
  spec.max_len = 2;
  spec.motif = "a";
  spec.oracle = accept_all_dfa("ab");
  const Env env(spec);

  // Prior: a fixed random network; posterior trained against it with RTB.
  PriorPolicy prior;
  prior.analytic_uniform = false;
  prior.window = 2;
  prior.mlp = build_mlp({encode_dim(env, 2), 16, env.action_count()}, Activation::tanh, 12);

  Policy posterior = warm_start_policy(prior, env, {16}, 1);
  AdamState adam_net, adam_logz;
  RngStream rng(5);

  // Train on full enumeration batches (every trajectory each step).
  std::vector<Trajectory> all;
  for (const std::string& s : {"", "a", "b", "aa", "ab", "ba", "bb"})
    all.push_back(env.trajectory_from_string(s));

  double mean_loss = 1.0;
  for (int step = 0; step < 4000 && mean_loss > 1e-8; ++step) {
    Tape tape;
    PolicyLeaves leaves = bind_policy_leaves(tape, posterior);
    BatchLogPf pf = batch_log_pf_graph(tape, posterior, leaves, env, all);
    const std::vector<double> prior_lp = prior_batch_log_pf(prior, env, all);
    std::vector<double> constants(all.size());
    for (size_t i = 0; i < all.size(); ++i)
      constants[i] = std::log(all[i].reward_raw) + prior_lp[i];
    const ValueId loss = balance_loss_graph(tape, pf.column, leaves.log_z, constants);
    mean_loss = tape.value(loss).item();
    const GradientMap grads = tape.backward(loss, Tensor::scalar(1.0));
    NamedParams net;
    for (size_t l = 0; l < posterior.mlp.weights.size(); ++l) {
      net.emplace_back("w" + std::to_string(l), &posterior.mlp.weights[l]);
      net.emplace_back("b" + std::to_string(l), &posterior.mlp.biases[l]);
    }
    adam_step(net, grads, adam_net, 1e-2);
    NamedParams logz{{"logZ", &posterior.log_z}};
    adam_step(logz, grads, adam_logz, 1e-1);
  }
  CHECK(mean_loss < 1e-6);

  // Exact target: p(x) proportional to R(x) * p_prior(x).
  std::map<std::string, double> target;
  double z = 0.0;
  for (const Trajectory& t : all) {
    const double w = t.reward_raw * std::exp(prior_trajectory_log_pf(prior, env, t));
    target[terminal_key(t.terminal)] = w;
    z += w;
  }
  for (auto& [key, w] : target) w /= z;

  const std::map<std::string, double> learned = enumerate_policy_distribution(posterior, env);
  double tv = 0.0;
  for (const auto& [key, p] : target) tv += std::abs(p - learned.at(key));
  CHECK(tv / 2.0 < 1e-3);
}

TEST_CASE("driving TB to zero on an enumerable MDP matches R/Z") {
  // Same toy tree, plain TB (deterministic backward, no prior).
  SeqSpec spec;
  spec.vocab = {"a", "b", "<eos>"};
  spec.max_len = 2;
  spec.motif = "a";
  spec.oracle = accept_all_dfa("ab");
  const Env env(spec);

  PriorPolicy uniform;
  uniform.analytic_uniform = true;
  uniform.window = 2;
  Policy policy = warm_start_policy(uniform, env, {16}, 2);
  AdamState adam_net, adam_logz;

  std::vector<Trajectory> all;
  for (const std::string& s : {"", "a", "b", "aa", "ab", "ba", "bb"})
    all.push_back(env.trajectory_from_string(s));

  double mean_loss = 1.0;
  for (int step = 0; step < 4000 && mean_loss > 1e-8; ++step) {
    Tape tape;
    PolicyLeaves leaves = bind_policy_leaves(tape, policy);
    BatchLogPf pf = batch_log_pf_graph(tape, policy, leaves, env, all);
    std::vector<double> constants(all.size());
    for (size_t i = 0; i < all.size(); ++i)
      constants[i] = std::log(all[i].reward_raw) + env.log_pb(all[i]);
    const ValueId loss = balance_loss_graph(tape, pf.column, leaves.log_z, constants);
    mean_loss = tape.value(loss).item();
    const GradientMap grads = tape.backward(loss, Tensor::scalar(1.0));
    NamedParams net;
    for (size_t l = 0; l < policy.mlp.weights.size(); ++l) {
      net.emplace_back("w" + std::to_string(l), &policy.mlp.weights[l]);
      net.emplace_back("b" + std::to_string(l), &policy.mlp.biases[l]);
    }
    adam_step(net, grads, adam_net, 1e-2);
    NamedParams logz{{"logZ", &policy.log_z}};
    adam_step(logz, grads, adam_logz, 1e-1);
  }
  CHECK(mean_loss < 1e-6);

  double z = 0.0;
  for (const Trajectory& t : all) z += t.reward_raw;
  const std::map<std::string, double> learned = enumerate_policy_distribution(policy, env);
  double tv = 0.0;
  for (const Trajectory& t : all)
    tv += std::abs(t.reward_raw / z - learned.at(terminal_key(t.terminal)));
  CHECK(tv / 2.0 < 1e-3);

  // logZ recovered the true partition function.
  CHECK(policy.log_z.item() == doctest::Approx(std::log(z)).epsilon(1e-3));
}
