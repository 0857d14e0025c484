#pragma once

// Randomized comparison of the analytic loss gradients against central finite
// differences, at the log-probability level and end-to-end through a policy.

#include "prefalign/losses.hpp"
#include "prefalign/policy.hpp"

#include <cstdint>
#include <string>

namespace prefalign {

struct GradCheckResult {
  LossKind loss_kind = LossKind::sdpo;
  Index num_negatives = 1;
  std::string level;  // "logp", "tabular" or "embedding"
  Index trials = 0;
  double max_error = 0.0;
  /// Trial and coordinate of the worst disagreement.
  Index worst_trial = -1;
  Index worst_coordinate = -1;

  bool passed(double tolerance) const { return max_error <= tolerance; }
};

struct GradCheckOptions {
  Index trials = 100;
  std::uint64_t seed = 0;
  double step = kDefaultFiniteDifferenceStep;
  /// Negates the analytic gradient; used to confirm the checker can fail.
  bool flip_sign = false;
};

/// Random tables with K negatives, beta drawn from {0.1, 0.5, 1, 3, 5}.
GradCheckResult check_logp_gradients(LossKind kind, Index num_negatives,
                                     const GradCheckOptions& options);

/// Random small policies (|I| <= 20, d in {2, 4}) with a perturbed frozen
/// reference; compares parameter gradients of one preference sample.
GradCheckResult check_policy_gradients(PolicyKind policy_kind, LossKind kind, Index num_negatives,
                                       const GradCheckOptions& options);

}  // namespace prefalign
