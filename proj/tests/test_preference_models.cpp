#include <doctest.h>

#include "prefalign/preference_models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

using namespace prefalign;

namespace {

RewardVector random_rewards(Index k, Rng& rng, double lo = -5.0, double hi = 5.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  RewardVector r(k);
  for (Index i = 0; i < k; ++i) r(i) = u(rng);
  return r;
}

}  // namespace

TEST_CASE("Ranking validates permutations") {
  CHECK_NOTHROW(Ranking({2, 0, 1}));
  CHECK_THROWS_AS(Ranking({0, 0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(Ranking({0, 3}), std::invalid_argument);
  CHECK(Ranking::identity(3).order() == std::vector<Index>{0, 1, 2});
}

TEST_CASE("Plackett-Luce ranking probability") {
  CHECK(pl_ranking_probability(real_vector({1.5, 1.5}), Ranking({0, 1})) == doctest::Approx(0.5));
  CHECK(pl_ranking_probability(real_vector({1.5, 1.5}), Ranking({1, 0})) == doctest::Approx(0.5));
  CHECK(pl_ranking_probability(real_vector({std::log(2.0), 0, 0}), Ranking({0, 1, 2})) ==
        doctest::Approx(0.25).epsilon(1e-14));
  CHECK(pl_ranking_probability(real_vector({-3.0}), Ranking({0})) == 1.0);
  CHECK_THROWS_AS(pl_ranking_probability(real_vector({0, 0}), Ranking({0, 1, 2})), std::invalid_argument);
}

TEST_CASE("PL probabilities sum to one over all rankings") {
  Rng rng(11);
  for (Index k = 1; k <= 6; ++k) {
    const RewardVector r = random_rewards(k, rng);
    std::vector<Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    double total = 0.0;
    do {
      total += pl_ranking_probability(r, Ranking(order));
    } while (std::next_permutation(order.begin(), order.end()));
    CHECK(std::abs(total - 1.0) <= 1e-10);
  }
}

TEST_CASE("top choice probability") {
  for (Index p = 0; p < 4; ++p) CHECK(top_choice_probability(real_vector({2, 2, 2, 2}), p) == doctest::Approx(0.25));
  CHECK(top_choice_probability(real_vector({std::log(2.0), 0, 0}), 0) == doctest::Approx(0.5));
  CHECK(top_choice_probability(real_vector({0.7, -1.2}), 0) ==
        doctest::Approx(bt_pair_probability(0.7, -1.2)).epsilon(1e-14));
  CHECK_THROWS_AS(top_choice_probability(real_vector({0, 0}), 2), std::out_of_range);
}

TEST_CASE("brute-force marginalization agrees with the closed form") {
  CHECK(brute_force_top_choice(real_vector({3, 3}), 0) == doctest::Approx(0.5));
  CHECK(brute_force_top_choice(real_vector({std::log(2.0), 0, 0}), 0) == doctest::Approx(0.5).epsilon(1e-14));
  Rng rng(5);
  for (Index k = 2; k <= 7; ++k) {
    for (int trial = 0; trial < 20; ++trial) {
      const RewardVector r = random_rewards(k, rng);
      const Index p = std::uniform_int_distribution<Index>(0, k - 1)(rng);
      CHECK(std::abs(top_choice_probability(r, p) - brute_force_top_choice(r, p)) <= 1e-12);
    }
  }
  CHECK_THROWS_WITH(brute_force_top_choice(RewardVector::Zero(9), 0), "oracle limited to K <= 8");
}

TEST_CASE("Bradley-Terry pair probability") {
  CHECK(bt_pair_probability(0.4, 0.4) == doctest::Approx(0.5));
  CHECK(bt_pair_probability(std::log(3.0), 0.0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(bt_pair_probability(1.3, -0.2) == doctest::Approx(1.0 - bt_pair_probability(-0.2, 1.3)));
}

TEST_CASE("extreme rewards stay finite") {
  const RewardVector r = real_vector({800.0, -800.0, 0.0});
  CHECK(top_choice_probability(r, 0) == doctest::Approx(1.0));
  CHECK(top_choice_probability(r, 1) < 1e-300);
  CHECK(std::isfinite(pl_log_ranking_probability(r, Ranking({1, 0, 2}))));
}

TEST_CASE("sample_ranking") {
  Rng rng(1);
  int dominant = 0;
  for (int i = 0; i < 1000; ++i) dominant += sample_ranking(real_vector({30, -30}), rng) == Ranking({0, 1});
  CHECK(dominant >= 999);

  CHECK(sample_ranking(real_vector({4.0}), rng) == Ranking({0}));

  // Uniform over the 6 orders: chi-square with 5 dof, 0.999 quantile 20.52.
  constexpr int kDraws = 60000;
  Rng uniform_rng(7);
  std::map<Ranking, int> counts;
  for (int i = 0; i < kDraws; ++i) ++counts[sample_ranking(real_vector({0.3, 0.3, 0.3}), uniform_rng)];
  CHECK(counts.size() == 6);
  double chi2 = 0.0;
  const double expected = kDraws / 6.0;
  for (const auto& [ranking, n] : counts) {
    chi2 += (n - expected) * (n - expected) / expected;
    CHECK(std::abs(n - expected) <= 3.0 * std::sqrt(kDraws * (1.0 / 6.0) * (5.0 / 6.0)));
  }
  CHECK(chi2 < 20.52);
}

TEST_CASE("sampled rankings follow PL probabilities") {
  Rng rng(3);
  const RewardVector r = real_vector({1.0, 0.0, -0.5});
  constexpr int kDraws = 40000;
  std::map<Ranking, int> counts;
  for (int i = 0; i < kDraws; ++i) ++counts[sample_ranking(r, rng)];
  double chi2 = 0.0;
  for (const auto& [ranking, n] : counts) {
    const double e = kDraws * pl_ranking_probability(r, ranking);
    chi2 += (n - e) * (n - e) / e;
  }
  CHECK(chi2 < 20.52);
}

TEST_CASE("sample_ranking_prefix draws without replacement") {
  Rng rng(9);
  const auto prefix = sample_ranking_prefix(RewardVector::Zero(10), 4, rng);
  CHECK(prefix.size() == 4);
  std::vector<Index> sorted = prefix;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  CHECK_THROWS(sample_ranking_prefix(RewardVector::Zero(3), 4, rng));
}
