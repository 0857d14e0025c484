#pragma once

// Item-level stand-ins for the recommender policy: a tabular policy with one
// logit row per user, and an embedding policy scoring items against a pooled
// history representation. Both normalize over the full catalog.

#include "prefalign/numerics.hpp"

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace prefalign {

struct Catalog {
  Index item_count = 0;
  std::vector<std::string> titles;

  explicit Catalog(Index items, std::vector<std::string> names = {});
  const std::string* title(Index item) const;
};

enum class PolicyKind : std::uint8_t { tabular = 0, embedding = 1 };
enum class Pooling : std::uint8_t { mean = 0, last = 1 };

std::string_view to_string(PolicyKind kind);
std::string_view to_string(Pooling pooling);
PolicyKind parse_policy_kind(std::string_view name);
Pooling parse_pooling(std::string_view name);

/// The user context x_u: a user row for the tabular policy, the interaction
/// history for the embedding policy.
struct Context {
  Index user = 0;
  std::span<const Index> history;
};

/// Counts item log-probability evaluations. Copies carry the current value.
class EvalCounter {
 public:
  EvalCounter() = default;
  EvalCounter(const EvalCounter& other) : count_(other.value()) {}
  EvalCounter& operator=(const EvalCounter& other) {
    count_.store(other.value(), std::memory_order_relaxed);
    return *this;
  }
  void add(std::uint64_t n) const { count_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t value() const { return count_.load(std::memory_order_relaxed); }
  void reset() const { count_.store(0, std::memory_order_relaxed); }

 private:
  mutable std::atomic<std::uint64_t> count_{0};
};

class Policy {
 public:
  /// All-zero logits: the uniform policy for every user.
  static Policy tabular(Index users, Index items);
  /// Item embeddings drawn i.i.d. from N(0, 1/dim).
  static Policy embedding(Index items, Index dim, std::uint64_t seed, Pooling pooling = Pooling::mean);
  /// Wraps an existing parameter matrix (users x items or items x dim).
  static Policy from_parameters(PolicyKind kind, RealMatrix parameters,
                                Pooling pooling = Pooling::mean);

  PolicyKind kind() const { return kind_; }
  Pooling pooling() const { return pooling_; }
  Index item_count() const;
  /// Embedding width; for the tabular policy, the number of user rows.
  Index dimension() const;

  const RealMatrix& parameters() const { return params_; }
  RealMatrix& parameters() { return params_; }

  /// Pooled history embedding. Throws on empty history.
  RealVector user_representation(const Context& context) const;

  /// Unnormalized scores over the full catalog.
  RealVector scores(const Context& context) const;

  /// log pi(item | context) for each requested item, normalized over the full
  /// catalog. Adds items.size() to the forward-evaluation counter.
  RealVector log_probs(const Context& context, std::span<const Index> items) const;

  /// log pi over the whole catalog; not counted.
  RealVector full_log_probs(const Context& context) const;

  /// Accumulates d(loss)/d(parameters) into `grad` given d(loss)/d(log pi(items)).
  void backprop(const Context& context, std::span<const Index> items, const RealVector& grad_logp,
                RealMatrix& grad) const;

  RealMatrix zero_gradient() const { return RealMatrix::Zero(params_.rows(), params_.cols()); }

  const EvalCounter& forward_evals() const { return counter_; }

 private:
  Policy(PolicyKind kind, RealMatrix params, Pooling pooling);
  void check_items(std::span<const Index> items) const;

  PolicyKind kind_;
  Pooling pooling_;
  RealMatrix params_;
  EvalCounter counter_;
};

/// pi_ref: either uniform over the catalog or an immutable copy of a policy.
class ReferencePolicy {
 public:
  enum class Kind { uniform, frozen_snapshot };

  static ReferencePolicy uniform(Index items);
  static ReferencePolicy frozen(const Policy& policy);

  Kind kind() const { return kind_; }
  Index item_count() const { return item_count_; }
  /// Null for the uniform reference.
  const Policy* snapshot() const { return snapshot_.get(); }

  /// Counted like Policy::log_probs.
  RealVector log_probs(const Context& context, std::span<const Index> items) const;

  const EvalCounter& forward_evals() const { return counter_; }

 private:
  ReferencePolicy(Kind kind, Index items, std::shared_ptr<const Policy> snapshot);

  Kind kind_;
  Index item_count_;
  std::shared_ptr<const Policy> snapshot_;
  EvalCounter counter_;
};

ReferencePolicy snapshot_reference(const Policy& policy);

/// 64-bit FNV-1a over the raw parameter bytes.
std::uint64_t parameter_hash(const RealMatrix& parameters);

}  // namespace prefalign
