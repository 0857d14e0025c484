#pragma once

// Plackett-Luce and Bradley-Terry preference distributions over a fixed
// context's candidate rewards.

#include "prefalign/numerics.hpp"

#include <random>
#include <vector>

namespace prefalign {

/// One reward (log-odds) per candidate.
using RewardVector = RealVector;

/// Position j holds the candidate index ranked j-th.
class Ranking {
 public:
  Ranking() = default;
  /// Throws std::invalid_argument unless `order` is a permutation of 0..n-1.
  explicit Ranking(std::vector<Index> order);

  static Ranking identity(Index n);

  Index size() const { return static_cast<Index>(order_.size()); }
  Index operator[](Index position) const { return order_[static_cast<std::size_t>(position)]; }
  const std::vector<Index>& order() const { return order_; }

  friend bool operator==(const Ranking&, const Ranking&) = default;
  friend auto operator<=>(const Ranking&, const Ranking&) = default;

 private:
  std::vector<Index> order_;
};

using Rng = std::mt19937_64;

/// log of the PL probability prod_j exp(r_tau(j)) / sum_{l>=j} exp(r_tau(l)).
double pl_log_ranking_probability(const RewardVector& rewards, const Ranking& ranking);
double pl_ranking_probability(const RewardVector& rewards, const Ranking& ranking);

/// Probability that `candidate` is preferred over every other candidate:
/// exp(r_p) / sum_j exp(r_j).
double top_choice_probability(const RewardVector& rewards, Index candidate);

inline constexpr Index kMaxOracleCandidates = 8;

/// Sums pl_ranking_probability over every ranking that starts with `candidate`,
/// enumerated lexicographically. Limited to kMaxOracleCandidates candidates.
double brute_force_top_choice(const RewardVector& rewards, Index candidate);

/// Bradley-Terry probability sigma(r_w - r_l).
double bt_pair_probability(double reward_winner, double reward_loser);

/// Draws the first `length` positions of a PL ranking by sequential
/// without-replacement choices proportional to exp(reward).
std::vector<Index> sample_ranking_prefix(const RewardVector& rewards, Index length, Rng& rng);

/// Full PL ranking draw.
Ranking sample_ranking(const RewardVector& rewards, Rng& rng);

}  // namespace prefalign
