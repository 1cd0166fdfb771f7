#pragma once

#include <optional>
#include <span>
#include <vector>

#include "softflow/tape.hpp"

namespace softflow {

// Per-trajectory scalars entering the training objectives. log_ref is the
// reference term of the balance residual: log P_F^prior for RTB, log P_B for
// plain TB. log_reward is already tempered (beta * log R).
struct LossBatchInputs {
  double log_z = 0.0;
  struct Entry {
    double log_pf_post = 0.0;
    double log_ref = 0.0;
    double log_reward = 0.0;
  };
  std::vector<Entry> positives;
  std::vector<double> negative_scores;  // log P_F of buffer negatives
  std::vector<double> mutant_scores;    // log P_F of mutation negatives (optional)
};

// (logZ + log_pf - log_r - log_pb)^2
double tb_loss(double log_z, double log_pf, double log_pb, double log_r);

// (logZ + log_pf_post - log_r - log_pf_prior)^2
double rtb_loss(double log_z, double log_pf_post, double log_pf_prior, double log_r);

// Mean balance loss over the positive set; empty set yields nullopt (no
// update). Negative score sets are ignored here.
std::optional<double> onpolicy_positive_loss(const LossBatchInputs& batch);

// Contrastive term: each positive is contrasted against the full negative
// set (positives never appear in each other's denominators). Log-sum-exp
// stabilized; summed (not averaged) over positives.
double aux_loss(std::span<const double> scores_pos, std::span<const double> scores_neg);

// Mean balance loss over positives plus alpha * aux against buffer
// negatives, plus a second alpha-weighted aux term against mutant negatives
// when present. Empty negative sets simply drop their aux term; an empty
// positive set is an error.
double replay_loss(const LossBatchInputs& batch, double alpha);

// r^beta. Losses consume the log form beta*log(r) to avoid overflow.
double temper_reward(double r, double beta);
double log_tempered_reward(double r, double beta);

// r when feasible, otherwise a strictly positive floor standing in for the
// zero of R(x) * I[x feasible] so log stays defined.
double shaped_reward(double r, bool feasible, double floor);

// --- differentiable forms -------------------------------------------------

// mean_i (logZ + log_pf_i - c_i)^2 for a [T,1] log_pf column, where
// c_i = log_r_i + log_ref_i is constant for the update.
ValueId balance_loss_graph(Tape& tape, ValueId log_pf_column, ValueId log_z_leaf,
                           const std::vector<double>& log_r_plus_ref);

// Graph form of aux_loss. Positive scores as a [P,1] column, negative scores
// as a [1,N] row; both live on the same tape (typically shared with the
// balance term so gradients flow through one forward pass).
ValueId aux_loss_graph(Tape& tape, ValueId pos_scores_column, ValueId neg_scores_row);

}  // namespace softflow
