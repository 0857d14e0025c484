#include "prefalign/losses.hpp"

#include <stdexcept>
#include <string>

namespace prefalign {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::sft: return "sft";
    case LossKind::bpr: return "bpr";
    case LossKind::softmax: return "softmax";
    case LossKind::dpo: return "dpo";
    case LossKind::sdpo: return "sdpo";
  }
  return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "sft") return LossKind::sft;
  if (name == "bpr") return LossKind::bpr;
  if (name == "softmax") return LossKind::softmax;
  if (name == "dpo") return LossKind::dpo;
  if (name == "sdpo") return LossKind::sdpo;
  throw std::invalid_argument("unknown loss kind '" + std::string(name) + "'");
}

void LogProbTable::validate() const {
  if (policy_logp.size() != ref_logp.size()) {
    throw std::invalid_argument("LogProbTable: policy and reference lengths differ");
  }
  if (policy_logp.size() < 2) {
    throw std::invalid_argument("LogProbTable: at least one dispreferred candidate required");
  }
  if (positive < 0 || positive >= policy_logp.size()) {
    throw std::invalid_argument("LogProbTable: positive index out of range");
  }
  require_finite(policy_logp, "policy log-probabilities");
  require_finite(ref_logp, "reference log-probabilities");
}

void AlignmentConfig::validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
  if (num_negatives < 1) throw std::invalid_argument("num_negatives must be >= 1");
}

namespace {

void check_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be > 0");
}

// Gathers the dispreferred entries of a candidate vector, preserving order.
RealVector negatives_of(const RealVector& values, Index positive) {
  RealVector out(values.size() - 1);
  for (Index i = 0, j = 0; i < values.size(); ++i) {
    if (i != positive) out(j++) = values(i);
  }
  return out;
}

// Shared core of S-DPO and the softmax ranking loss, on generic scores.
LossOutput softmax_family(const RealVector& scores, Index positive, double scale) {
  const RealVector neg = negatives_of(scores, positive);
  const RealVector margins = (neg.array() - scores(positive)).matrix();
  const double lse = log_sum_exp(margins);
  const double outer = sigmoid(lse);
  const RealVector weights = softmax(neg);

  LossOutput out;
  out.value = -log_sigmoid(-lse);
  out.grad_policy_logp.resize(scores.size());
  for (Index i = 0, j = 0; i < scores.size(); ++i) {
    out.grad_policy_logp(i) = i == positive ? -scale * outer : scale * outer * weights(j++);
  }
  return out;
}

}  // namespace

RealVector implicit_rewards(const LogProbTable& table, double beta) {
  return (beta * (table.policy_logp - table.ref_logp).array()).matrix();
}

LossOutput dpo_loss(const LogProbTable& table, double beta) {
  table.validate();
  check_beta(beta);
  if (table.size() != 2) {
    throw std::invalid_argument("dpo_loss: exactly 2 candidates required, got " +
                                std::to_string(table.size()));
  }
  const Index p = table.positive;
  const Index d = 1 - p;
  const RealVector r = implicit_rewards(table, beta);
  const double margin = r(p) - r(d);
  const double weight = sigmoid(-margin);

  LossOutput out;
  out.value = -log_sigmoid(margin);
  out.grad_policy_logp.resize(2);
  out.grad_policy_logp(p) = -beta * weight;
  out.grad_policy_logp(d) = beta * weight;
  return out;
}

LossOutput multi_pair_dpo_loss(const LogProbTable& table, double beta) {
  table.validate();
  check_beta(beta);
  const Index k = table.num_negatives();
  LossOutput out;
  out.grad_policy_logp = RealVector::Zero(table.size());
  for (Index d = 0; d < table.size(); ++d) {
    if (d == table.positive) continue;
    LogProbTable pair;
    pair.policy_logp = real_vector({table.policy_logp(table.positive), table.policy_logp(d)});
    pair.ref_logp = real_vector({table.ref_logp(table.positive), table.ref_logp(d)});
    pair.positive = 0;
    const LossOutput term = dpo_loss(pair, beta);
    out.value += term.value / static_cast<double>(k);
    out.grad_policy_logp(table.positive) += term.grad_policy_logp(0) / static_cast<double>(k);
    out.grad_policy_logp(d) += term.grad_policy_logp(1) / static_cast<double>(k);
  }
  return out;
}

LossOutput sdpo_loss(const LogProbTable& table, double beta) {
  if (table.policy_logp.size() < 2) {
    throw std::invalid_argument("sdpo_loss: at least one dispreferred candidate");
  }
  table.validate();
  check_beta(beta);
  return softmax_family(implicit_rewards(table, beta), table.positive, beta);
}

RealVector negative_weights(const LogProbTable& table, double beta) {
  table.validate();
  check_beta(beta);
  return softmax(negatives_of(implicit_rewards(table, beta), table.positive));
}

double sdpo_outer_weight(const LogProbTable& table, double beta) {
  table.validate();
  check_beta(beta);
  const RealVector r = implicit_rewards(table, beta);
  const RealVector neg = negatives_of(r, table.positive);
  return sigmoid(log_sum_exp((neg.array() - r(table.positive)).matrix()));
}

LossOutput bpr_loss(double score_pos, double score_neg) {
  if (!std::isfinite(score_pos) || !std::isfinite(score_neg)) {
    throw std::invalid_argument("bpr_loss: non-finite score");
  }
  const double margin = score_pos - score_neg;
  const double weight = sigmoid(-margin);
  LossOutput out;
  out.value = -log_sigmoid(margin);
  out.grad_policy_logp = real_vector({-weight, weight});
  return out;
}

LossOutput multi_pair_bpr_loss(const RealVector& scores, Index positive) {
  if (scores.size() < 2) throw std::invalid_argument("multi_pair_bpr_loss: no negatives");
  if (positive < 0 || positive >= scores.size()) {
    throw std::invalid_argument("multi_pair_bpr_loss: positive index out of range");
  }
  const double k = static_cast<double>(scores.size() - 1);
  LossOutput out;
  out.grad_policy_logp = RealVector::Zero(scores.size());
  for (Index d = 0; d < scores.size(); ++d) {
    if (d == positive) continue;
    const LossOutput term = bpr_loss(scores(positive), scores(d));
    out.value += term.value / k;
    out.grad_policy_logp(positive) += term.grad_policy_logp(0) / k;
    out.grad_policy_logp(d) += term.grad_policy_logp(1) / k;
  }
  return out;
}

LossOutput softmax_ranking_loss(double score_pos, const RealVector& scores_neg) {
  if (scores_neg.size() == 0) {
    throw std::invalid_argument("softmax_ranking_loss: at least one negative score required");
  }
  RealVector scores(scores_neg.size() + 1);
  scores << score_pos, scores_neg;
  return softmax_ranking_loss(scores, 0);
}

LossOutput softmax_ranking_loss(const RealVector& scores, Index positive) {
  if (scores.size() < 2) {
    throw std::invalid_argument("softmax_ranking_loss: at least one negative score required");
  }
  if (positive < 0 || positive >= scores.size()) {
    throw std::invalid_argument("softmax_ranking_loss: positive index out of range");
  }
  require_finite(scores, "softmax_ranking_loss");
  return softmax_family(scores, positive, 1.0);
}

LossOutput sft_nll(const LogProbTable& table) {
  if (table.positive < 0 || table.positive >= table.policy_logp.size()) {
    throw std::invalid_argument("sft_nll: positive index out of range");
  }
  require_finite(table.policy_logp, "policy log-probabilities");
  LossOutput out;
  out.value = -table.policy_logp(table.positive);
  out.grad_policy_logp = RealVector::Zero(table.policy_logp.size());
  out.grad_policy_logp(table.positive) = -1.0;
  return out;
}

LossOutput alignment_loss(const LogProbTable& table, const AlignmentConfig& config) {
  switch (config.loss_kind) {
    case LossKind::sft: return sft_nll(table);
    case LossKind::bpr: return multi_pair_bpr_loss(table.policy_logp, table.positive);
    case LossKind::softmax: return softmax_ranking_loss(table.policy_logp, table.positive);
    case LossKind::dpo:
      return table.size() == 2 ? dpo_loss(table, config.beta)
                               : multi_pair_dpo_loss(table, config.beta);
    case LossKind::sdpo: return sdpo_loss(table, config.beta);
  }
  throw std::invalid_argument("alignment_loss: unknown loss kind");
}

}  // namespace prefalign
