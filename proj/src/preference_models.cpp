#include "prefalign/preference_models.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace prefalign {

Ranking::Ranking(std::vector<Index> order) : order_(std::move(order)) {
  std::vector<bool> seen(order_.size(), false);
  for (Index i : order_) {
    if (i < 0 || i >= static_cast<Index>(order_.size()) || seen[static_cast<std::size_t>(i)]) {
      throw std::invalid_argument("Ranking: not a permutation of 0.." +
                                  std::to_string(order_.size()) + "-1");
    }
    seen[static_cast<std::size_t>(i)] = true;
  }
}

Ranking Ranking::identity(Index n) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  return Ranking(std::move(order));
}

namespace {

void check_rewards(const RewardVector& rewards) {
  if (rewards.size() == 0) throw std::invalid_argument("reward vector is empty");
  require_finite(rewards, "reward vector");
}

}  // namespace

double pl_log_ranking_probability(const RewardVector& rewards, const Ranking& ranking) {
  check_rewards(rewards);
  if (ranking.size() != rewards.size()) {
    throw std::invalid_argument("pl_ranking_probability: ranking has " +
                                std::to_string(ranking.size()) + " entries, rewards " +
                                std::to_string(rewards.size()));
  }
  const Index k = rewards.size();
  RealVector ordered(k);
  for (Index j = 0; j < k; ++j) ordered(j) = rewards(ranking[j]);
  double log_p = 0.0;
  for (Index j = 0; j < k; ++j) {
    log_p += ordered(j) - log_sum_exp(ordered.tail(k - j));
  }
  return log_p;
}

double pl_ranking_probability(const RewardVector& rewards, const Ranking& ranking) {
  return std::exp(pl_log_ranking_probability(rewards, ranking));
}

double top_choice_probability(const RewardVector& rewards, Index candidate) {
  check_rewards(rewards);
  if (candidate < 0 || candidate >= rewards.size()) {
    throw std::out_of_range("top_choice_probability: candidate " + std::to_string(candidate) +
                            " out of range");
  }
  return softmax(rewards)(candidate);
}

double brute_force_top_choice(const RewardVector& rewards, Index candidate) {
  check_rewards(rewards);
  if (rewards.size() > kMaxOracleCandidates) {
    throw std::invalid_argument("oracle limited to K <= 8");
  }
  if (candidate < 0 || candidate >= rewards.size()) {
    throw std::out_of_range("brute_force_top_choice: candidate out of range");
  }
  std::vector<Index> order(static_cast<std::size_t>(rewards.size()));
  std::iota(order.begin(), order.end(), Index{0});
  double total = 0.0;
  do {
    if (order.front() == candidate) {
      total += pl_ranking_probability(rewards, Ranking(order));
    }
  } while (std::next_permutation(order.begin(), order.end()));
  return total;
}

double bt_pair_probability(double reward_winner, double reward_loser) {
  return sigmoid(reward_winner - reward_loser);
}

std::vector<Index> sample_ranking_prefix(const RewardVector& rewards, Index length, Rng& rng) {
  check_rewards(rewards);
  if (length < 0 || length > rewards.size()) {
    throw std::invalid_argument("sample_ranking_prefix: length exceeds candidate count");
  }
  const Index k = rewards.size();
  std::vector<Index> remaining(static_cast<std::size_t>(k));
  std::iota(remaining.begin(), remaining.end(), Index{0});
  std::vector<Index> drawn;
  drawn.reserve(static_cast<std::size_t>(length));
  std::vector<double> weights;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index step = 0; step < length; ++step) {
    double top = -std::numeric_limits<double>::infinity();
    for (Index i : remaining) top = std::max(top, rewards(i));
    weights.clear();
    double total = 0.0;
    for (Index i : remaining) {
      total += std::exp(rewards(i) - top);
      weights.push_back(total);
    }
    const double u = unit(rng) * total;
    auto it = std::upper_bound(weights.begin(), weights.end(), u);
    std::size_t pick = std::min<std::size_t>(static_cast<std::size_t>(it - weights.begin()),
                                             remaining.size() - 1);
    drawn.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return drawn;
}

Ranking sample_ranking(const RewardVector& rewards, Rng& rng) {
  return Ranking(sample_ranking_prefix(rewards, rewards.size(), rng));
}

}  // namespace prefalign
