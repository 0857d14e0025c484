#include "prefalign/policy.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

namespace prefalign {

Catalog::Catalog(Index items, std::vector<std::string> names)
    : item_count(items), titles(std::move(names)) {
  if (item_count < 2) throw std::invalid_argument("Catalog: at least two items required");
  if (!titles.empty() && static_cast<Index>(titles.size()) != item_count) {
    throw std::invalid_argument("Catalog: title count does not match item count");
  }
}

const std::string* Catalog::title(Index item) const {
  if (titles.empty() || item < 0 || item >= item_count) return nullptr;
  return &titles[static_cast<std::size_t>(item)];
}

std::string_view to_string(PolicyKind kind) {
  return kind == PolicyKind::tabular ? "tabular" : "embedding";
}

std::string_view to_string(Pooling pooling) { return pooling == Pooling::mean ? "mean" : "last"; }

PolicyKind parse_policy_kind(std::string_view name) {
  if (name == "tabular") return PolicyKind::tabular;
  if (name == "embedding") return PolicyKind::embedding;
  throw std::invalid_argument("unknown policy kind '" + std::string(name) + "'");
}

Pooling parse_pooling(std::string_view name) {
  if (name == "mean") return Pooling::mean;
  if (name == "last") return Pooling::last;
  throw std::invalid_argument("unknown pooling '" + std::string(name) + "'");
}

Policy::Policy(PolicyKind kind, RealMatrix params, Pooling pooling)
    : kind_(kind), pooling_(pooling), params_(std::move(params)) {
  require_finite(params_, "policy parameters");
  if (item_count() < 2) throw std::invalid_argument("Policy: at least two items required");
  if (params_.rows() < 1 || params_.cols() < 1) throw std::invalid_argument("Policy: empty parameters");
}

Policy Policy::tabular(Index users, Index items) {
  if (users < 1) throw std::invalid_argument("Policy::tabular: at least one user required");
  return Policy(PolicyKind::tabular, RealMatrix::Zero(users, items), Pooling::mean);
}

Policy Policy::embedding(Index items, Index dim, std::uint64_t seed, Pooling pooling) {
  if (dim < 1) throw std::invalid_argument("Policy::embedding: dimension must be >= 1");
  if (items < 2) throw std::invalid_argument("Policy: at least two items required");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  RealMatrix v(items, dim);
  for (Index i = 0; i < items; ++i) {
    for (Index j = 0; j < dim; ++j) v(i, j) = normal(rng);
  }
  return Policy(PolicyKind::embedding, std::move(v), pooling);
}

Policy Policy::from_parameters(PolicyKind kind, RealMatrix parameters, Pooling pooling) {
  return Policy(kind, std::move(parameters), pooling);
}

Index Policy::item_count() const {
  return kind_ == PolicyKind::tabular ? params_.cols() : params_.rows();
}

Index Policy::dimension() const {
  return kind_ == PolicyKind::tabular ? params_.rows() : params_.cols();
}

void Policy::check_items(std::span<const Index> items) const {
  for (Index i : items) {
    if (i < 0 || i >= item_count()) {
      throw std::out_of_range("item index " + std::to_string(i) + " outside catalog of " +
                              std::to_string(item_count()));
    }
  }
}

RealVector Policy::user_representation(const Context& context) const {
  if (context.history.empty()) throw std::invalid_argument("cold-start context unsupported");
  check_items(context.history);
  if (pooling_ == Pooling::last) return params_.row(context.history.back()).transpose();
  RealVector h = RealVector::Zero(params_.cols());
  for (Index i : context.history) h += params_.row(i).transpose();
  return h / static_cast<double>(context.history.size());
}

RealVector Policy::scores(const Context& context) const {
  if (kind_ == PolicyKind::tabular) {
    if (context.user < 0 || context.user >= params_.rows()) {
      throw std::out_of_range("user " + std::to_string(context.user) + " outside tabular policy");
    }
    return params_.row(context.user).transpose();
  }
  return params_ * user_representation(context);
}

RealVector Policy::full_log_probs(const Context& context) const {
  return log_softmax(scores(context));
}

RealVector Policy::log_probs(const Context& context, std::span<const Index> items) const {
  check_items(items);
  const RealVector s = scores(context);
  const double lse = log_sum_exp(s);
  RealVector out(static_cast<Index>(items.size()));
  for (std::size_t k = 0; k < items.size(); ++k) out(static_cast<Index>(k)) = s(items[k]) - lse;
  counter_.add(items.size());
  return out;
}

void Policy::backprop(const Context& context, std::span<const Index> items,
                      const RealVector& grad_logp, RealMatrix& grad) const {
  if (grad_logp.size() != static_cast<Index>(items.size())) {
    throw std::invalid_argument("backprop: gradient has " + std::to_string(grad_logp.size()) +
                                " entries for " + std::to_string(items.size()) + " items");
  }
  if (grad.rows() != params_.rows() || grad.cols() != params_.cols()) {
    throw std::invalid_argument("backprop: gradient buffer shape mismatch");
  }
  check_items(items);
  const RealVector s = scores(context);
  // d log pi_c / d s = onehot(c) - softmax(s)
  RealVector grad_scores = -grad_logp.sum() * softmax(s);
  for (std::size_t k = 0; k < items.size(); ++k) grad_scores(items[k]) += grad_logp(static_cast<Index>(k));

  if (kind_ == PolicyKind::tabular) {
    grad.row(context.user) += grad_scores.transpose();
    return;
  }
  const RealVector h = user_representation(context);
  const RealVector grad_h = params_.transpose() * grad_scores;
  grad.noalias() += grad_scores * h.transpose();
  if (pooling_ == Pooling::last) {
    grad.row(context.history.back()) += grad_h.transpose();
  } else {
    const double share = 1.0 / static_cast<double>(context.history.size());
    for (Index j : context.history) grad.row(j) += share * grad_h.transpose();
  }
}

ReferencePolicy::ReferencePolicy(Kind kind, Index items, std::shared_ptr<const Policy> snapshot)
    : kind_(kind), item_count_(items), snapshot_(std::move(snapshot)) {}

ReferencePolicy ReferencePolicy::uniform(Index items) {
  if (items < 2) throw std::invalid_argument("ReferencePolicy: at least two items required");
  return ReferencePolicy(Kind::uniform, items, nullptr);
}

ReferencePolicy ReferencePolicy::frozen(const Policy& policy) {
  auto copy = std::make_shared<Policy>(policy);
  copy->forward_evals().reset();
  return ReferencePolicy(Kind::frozen_snapshot, policy.item_count(), std::move(copy));
}

RealVector ReferencePolicy::log_probs(const Context& context, std::span<const Index> items) const {
  counter_.add(items.size());
  if (kind_ == Kind::frozen_snapshot) return snapshot_->log_probs(context, items);
  for (Index i : items) {
    if (i < 0 || i >= item_count_) throw std::out_of_range("item index outside catalog");
  }
  return RealVector::Constant(static_cast<Index>(items.size()),
                              -std::log(static_cast<double>(item_count_)));
}

ReferencePolicy snapshot_reference(const Policy& policy) { return ReferencePolicy::frozen(policy); }

std::uint64_t parameter_hash(const RealMatrix& parameters) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(parameters.data());
  const std::size_t n = static_cast<std::size_t>(parameters.size()) * sizeof(double);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace prefalign
