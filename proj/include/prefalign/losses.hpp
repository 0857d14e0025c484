#pragma once

// Preference losses over per-candidate log-probabilities. Every loss returns
// its value together with the gradient with respect to the policy
// log-probabilities; chaining into model parameters is the policy's job.

#include "prefalign/numerics.hpp"

#include <string>
#include <string_view>

namespace prefalign {

enum class LossKind { sft, bpr, softmax, dpo, sdpo };

std::string_view to_string(LossKind kind);
/// Throws std::invalid_argument for unknown names.
LossKind parse_loss_kind(std::string_view name);

/// Policy and reference log-probabilities for one context's candidates.
/// Every index other than `positive` belongs to the dispreferred set.
struct LogProbTable {
  RealVector policy_logp;
  RealVector ref_logp;
  Index positive = 0;

  Index size() const { return policy_logp.size(); }
  Index num_negatives() const { return policy_logp.size() - 1; }

  /// Throws std::invalid_argument on mismatched lengths, fewer than two
  /// candidates, an out-of-range positive or non-finite entries.
  void validate() const;
};

struct LossOutput {
  double value = 0.0;
  RealVector grad_policy_logp;
};

struct AlignmentConfig {
  double beta = 1.0;
  Index num_negatives = 3;
  LossKind loss_kind = LossKind::sdpo;

  void validate() const;
};

/// beta * (log pi_theta - log pi_ref). The per-context log-partition term is
/// left out; it cancels in every reward difference used below.
inline double implicit_reward(double policy_logp, double ref_logp, double beta) {
  return beta * (policy_logp - ref_logp);
}

RealVector implicit_rewards(const LogProbTable& table, double beta);

/// Pairwise loss -log sigma(r_p - r_d) on a two-candidate table.
LossOutput dpo_loss(const LogProbTable& table, double beta);

/// Mean of dpo_loss over the K (positive, negative) pairs of the table.
LossOutput multi_pair_dpo_loss(const LogProbTable& table, double beta);

/// Multi-negative loss -log sigma(-log sum_d exp(r_d - r_p)).
///
/// Gradient with L = log sum_d exp(r_d - r_p):
///   d/d logp_p = -beta * sigma(L)
///   d/d logp_d = +beta * sigma(L) * w_d,  w = softmax over negatives of r_d
LossOutput sdpo_loss(const LogProbTable& table, double beta);

/// Softmax over the dispreferred candidates' implicit rewards.
RealVector negative_weights(const LogProbTable& table, double beta);

/// The sigma(L) factor that scales the whole S-DPO gradient.
double sdpo_outer_weight(const LogProbTable& table, double beta);

/// -log sigma(f_p - f_d); gradient is with respect to (f_p, f_d).
LossOutput bpr_loss(double score_pos, double score_neg);

/// Mean BPR over (positive, negative) pairs; candidate layout as in LogProbTable.
LossOutput multi_pair_bpr_loss(const RealVector& scores, Index positive);

/// -log sigma(-log sum_d exp(f_d - f_p)); gradient laid out as
/// [d/d f_p, d/d f_neg_0, ...].
LossOutput softmax_ranking_loss(double score_pos, const RealVector& scores_neg);

/// Same loss on a candidate vector where `positive` marks the preferred entry.
LossOutput softmax_ranking_loss(const RealVector& scores, Index positive);

/// -log pi(positive); gradient -1 at the positive, 0 elsewhere.
LossOutput sft_nll(const LogProbTable& table);

/// Dispatches on config.loss_kind. bpr and softmax score candidates by the
/// policy log-probabilities and ignore the reference.
LossOutput alignment_loss(const LogProbTable& table, const AlignmentConfig& config);

}  // namespace prefalign
