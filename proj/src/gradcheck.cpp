#include "prefalign/gradcheck.hpp"

#include "prefalign/data.hpp"
#include "prefalign/training.hpp"

#include <array>
#include <stdexcept>

namespace prefalign {

namespace {

constexpr std::array<double, 5> kBetas = {0.1, 0.5, 1.0, 3.0, 5.0};

void record(GradCheckResult& result, const GradientDiscrepancy& d, Index trial) {
  if (result.worst_trial < 0 || d.max_error > result.max_error) {
    result.max_error = d.max_error;
    result.worst_trial = trial;
    result.worst_coordinate = d.coordinate;
  }
}

RealVector random_logp(Index n, Rng& rng) {
  std::uniform_real_distribution<double> u(-6.0, -0.05);
  RealVector v(n);
  for (Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

}  // namespace

GradCheckResult check_logp_gradients(LossKind kind, Index num_negatives,
                                     const GradCheckOptions& options) {
  if (options.trials < 1) throw std::invalid_argument("gradcheck: trials must be >= 1");
  if (num_negatives < 1) throw std::invalid_argument("gradcheck: K must be >= 1");
  GradCheckResult result{kind, num_negatives, "logp", options.trials};
  Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(num_negatives)));
  std::uniform_int_distribution<std::size_t> pick_beta(0, kBetas.size() - 1);
  std::uniform_int_distribution<Index> pick_pos(0, num_negatives);

  for (Index trial = 0; trial < options.trials; ++trial) {
    LogProbTable table;
    table.policy_logp = random_logp(num_negatives + 1, rng);
    table.ref_logp = random_logp(num_negatives + 1, rng);
    table.positive = pick_pos(rng);
    const AlignmentConfig cfg{kBetas[pick_beta(rng)], num_negatives, kind};

    RealVector analytic = alignment_loss(table, cfg).grad_policy_logp;
    if (options.flip_sign) analytic = -analytic;
    const RealVector numeric = finite_difference_gradient(
        [&](const RealVector& x) {
          LogProbTable probe = table;
          probe.policy_logp = x;
          return alignment_loss(probe, cfg).value;
        },
        table.policy_logp, options.step);
    record(result, compare_gradients(analytic, numeric), trial);
  }
  return result;
}

GradCheckResult check_policy_gradients(PolicyKind policy_kind, LossKind kind, Index num_negatives,
                                       const GradCheckOptions& options) {
  if (options.trials < 1) throw std::invalid_argument("gradcheck: trials must be >= 1");
  if (num_negatives < 1) throw std::invalid_argument("gradcheck: K must be >= 1");
  GradCheckResult result{kind, num_negatives, std::string(to_string(policy_kind)), options.trials};
  Rng rng(derive_seed(options.seed, 0x706f6c, static_cast<std::uint64_t>(kind),
                      static_cast<std::uint64_t>(num_negatives) * 2 + static_cast<std::uint64_t>(policy_kind)));
  std::uniform_int_distribution<std::size_t> pick_beta(0, kBetas.size() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Index items = std::min<Index>(20, num_negatives + 6);
  constexpr Index kUsers = 3;
  for (Index trial = 0; trial < options.trials; ++trial) {
    const Index dim = trial % 2 == 0 ? 2 : 4;
    const Index rows = policy_kind == PolicyKind::tabular ? kUsers : items;
    const Index cols = policy_kind == PolicyKind::tabular ? items : dim;
    RealMatrix params(rows, cols);
    RealMatrix ref_params(rows, cols);
    for (Index i = 0; i < params.size(); ++i) {
      params(i) = normal(rng);
      ref_params(i) = params(i) + 0.3 * normal(rng);
    }
    const Pooling pooling = trial % 3 == 2 ? Pooling::last : Pooling::mean;
    const Policy policy = Policy::from_parameters(policy_kind, params, pooling);
    const ReferencePolicy reference =
        snapshot_reference(Policy::from_parameters(policy_kind, ref_params, pooling));

    // history, positive and negatives are disjoint draws from the catalog.
    std::uniform_int_distribution<Index> hist_len(1, 4);
    const Index h = hist_len(rng);
    std::vector<Index> drawn = sample_non_interacted({}, items, h + 1 + num_negatives, rng);
    PreferenceSample sample;
    sample.user_id = std::uniform_int_distribution<Index>(0, kUsers - 1)(rng);
    sample.history.assign(drawn.begin(), drawn.begin() + h);
    sample.positive = drawn[static_cast<std::size_t>(h)];
    sample.negatives.assign(drawn.begin() + h + 1, drawn.end());
    const AlignmentConfig cfg{kBetas[pick_beta(rng)], num_negatives, kind};

    RealMatrix grad = policy.zero_gradient();
    preference_sample_loss(policy, &reference, sample, cfg, &grad);
    RealVector analytic = Eigen::Map<const RealVector>(grad.data(), grad.size());
    if (options.flip_sign) analytic = -analytic;
    const RealVector theta = Eigen::Map<const RealVector>(params.data(), params.size());
    const RealVector numeric = finite_difference_gradient(
        [&](const RealVector& x) {
          const Policy probe =
              Policy::from_parameters(policy_kind, Eigen::Map<const RealMatrix>(x.data(), rows, cols), pooling);
          return preference_sample_loss(probe, &reference, sample, cfg).value;
        },
        theta, options.step);
    record(result, compare_gradients(analytic, numeric), trial);
  }
  return result;
}

}  // namespace prefalign
