#include "softflow/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace softflow {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::invalid_argument(std::string("loss: non-finite ") + what);
}

double log_sum_exp(std::span<const double> xs) {
  double mx = xs[0];
  for (double x : xs) mx = std::max(mx, x);
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - mx);
  return mx + std::log(sum);
}

}  // namespace

double tb_loss(double log_z, double log_pf, double log_pb, double log_r) {
  require_finite(log_z, "logZ");
  require_finite(log_pf, "log_pf");
  require_finite(log_pb, "log_pb");
  require_finite(log_r, "log_r");
  const double residual = log_z + log_pf - log_r - log_pb;
  return residual * residual;
}

double rtb_loss(double log_z, double log_pf_post, double log_pf_prior, double log_r) {
  require_finite(log_z, "logZ");
  require_finite(log_pf_post, "log_pf_post");
  require_finite(log_pf_prior, "log_pf_prior");
  require_finite(log_r, "log_r");
  const double residual = log_z + log_pf_post - log_r - log_pf_prior;
  return residual * residual;
}

std::optional<double> onpolicy_positive_loss(const LossBatchInputs& batch) {
  if (batch.positives.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& e : batch.positives)
    sum += rtb_loss(batch.log_z, e.log_pf_post, e.log_ref, e.log_reward);
  return sum / static_cast<double>(batch.positives.size());
}

double aux_loss(std::span<const double> scores_pos, std::span<const double> scores_neg) {
  if (scores_pos.empty()) throw std::invalid_argument("aux_loss: empty positive set");
  if (scores_neg.empty()) throw std::invalid_argument("aux_loss: empty negative set");
  for (double s : scores_pos) require_finite(s, "positive score");
  for (double s : scores_neg) require_finite(s, "negative score");
  const double lse_neg = log_sum_exp(scores_neg);
  double total = 0.0;
  for (double s : scores_pos) {
    const double pair[2] = {s, lse_neg};
    total += log_sum_exp(pair) - s;
  }
  return total;
}

double replay_loss(const LossBatchInputs& batch, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("replay_loss: alpha must be >= 0");
  const std::optional<double> balance = onpolicy_positive_loss(batch);
  if (!balance) throw std::invalid_argument("replay_loss: empty positive set");
  double total = *balance;
  if (alpha > 0.0) {
    std::vector<double> pos_scores;
    pos_scores.reserve(batch.positives.size());
    for (const auto& e : batch.positives) pos_scores.push_back(e.log_pf_post);
    if (!batch.negative_scores.empty())
      total += alpha * aux_loss(pos_scores, batch.negative_scores);
    if (!batch.mutant_scores.empty())
      total += alpha * aux_loss(pos_scores, batch.mutant_scores);
  }
  return total;
}

double temper_reward(double r, double beta) {
  if (r <= 0.0) throw std::invalid_argument("temper_reward: reward must be positive");
  if (beta <= 0.0) throw std::invalid_argument("temper_reward: beta must be positive");
  return std::pow(r, beta);
}

double log_tempered_reward(double r, double beta) {
  if (r <= 0.0) throw std::invalid_argument("log_tempered_reward: reward must be positive");
  if (beta <= 0.0) throw std::invalid_argument("log_tempered_reward: beta must be positive");
  return beta * std::log(r);
}

double shaped_reward(double r, bool feasible, double floor) {
  if (r <= 0.0) throw std::invalid_argument("shaped_reward: reward must be positive");
  if (floor <= 0.0) throw std::invalid_argument("shaped_reward: floor must be positive");
  return feasible ? r : floor;
}

ValueId balance_loss_graph(Tape& tape, ValueId log_pf_column, ValueId log_z_leaf,
                           const std::vector<double>& log_r_plus_ref) {
  const Tensor& col = tape.value(log_pf_column);
  const int n = col.rows();
  if (col.cols() != 1 || n != static_cast<int>(log_r_plus_ref.size()))
    throw std::invalid_argument("balance_loss_graph: shape mismatch");
  for (double c : log_r_plus_ref) require_finite(c, "balance constant");
  const ValueId c = tape.leaf(Tensor({n, 1}, log_r_plus_ref));
  const ValueId residual = tape.sub(tape.add(log_pf_column, log_z_leaf), c);
  return tape.mul_const(tape.reduce_sum(tape.square(residual)), 1.0 / n);
}

ValueId aux_loss_graph(Tape& tape, ValueId pos_scores_column, ValueId neg_scores_row) {
  const Tensor& pos = tape.value(pos_scores_column);
  const Tensor& neg = tape.value(neg_scores_row);
  if (pos.cols() != 1) throw std::invalid_argument("aux_loss_graph: positives must be a column");
  if (neg.rows() != 1) throw std::invalid_argument("aux_loss_graph: negatives must be a row");
  const int p = pos.rows();

  // LSE over the negatives, recovered from a row log-softmax.
  const ValueId lsm_neg = tape.log_softmax_rows(neg_scores_row);
  const ValueId lse_neg =
      tape.sub(tape.gather_cols(neg_scores_row, {0}), tape.gather_cols(lsm_neg, {0}));

  // Per-positive two-way softmax against the pooled negative mass:
  // columns (s_i, LSE_neg), entry 0 of the row log-softmax is
  // s_i - log(exp(s_i) + sum_j exp(n_j)).
  const ValueId ones = tape.leaf(Tensor({p, 1}, std::vector<double>(static_cast<size_t>(p), 1.0)));
  const ValueId lse_col = tape.matmul(ones, lse_neg);
  const ValueId e0 = tape.leaf(Tensor({1, 2}, {1.0, 0.0}));
  const ValueId e1 = tape.leaf(Tensor({1, 2}, {0.0, 1.0}));
  const ValueId pair = tape.add(tape.matmul(pos_scores_column, e0), tape.matmul(lse_col, e1));
  const ValueId lsm_pair = tape.log_softmax_rows(pair);
  const ValueId picked = tape.gather_cols(lsm_pair, std::vector<int>(static_cast<size_t>(p), 0));
  return tape.mul_const(tape.reduce_sum(picked), -1.0);
}

}  // namespace softflow
