#include <doctest.h>

#include "prefalign/numerics.hpp"

#include <cmath>
#include <limits>

using namespace prefalign;

TEST_CASE("log_sum_exp") {
  CHECK(log_sum_exp(real_vector({0.0, 0.0})) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(log_sum_exp(real_vector({5.0})) == 5.0);
  CHECK(log_sum_exp(real_vector({1000.0, 1000.0})) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_WITH(log_sum_exp(RealVector()), "log_sum_exp: empty vector");

  const RealVector x = real_vector({-3.0, 0.5, 2.0, -1.0});
  const double base = log_sum_exp(x);
  for (double c : {-700.0, -1.0, 3.0, 900.0}) {
    const RealVector shifted = x.array() + c;
    CHECK(std::abs(log_sum_exp(shifted) - (base + c)) <= 1e-12 * std::max(1.0, std::abs(c)));
  }
}

TEST_CASE("log_sigmoid is finite at the extremes") {
  CHECK(log_sigmoid(0.0) == doctest::Approx(-std::log(2.0)));
  CHECK(log_sigmoid(50.0) == doctest::Approx(-1.9287498479639178e-22).epsilon(1e-12));
  CHECK(log_sigmoid(-50.0) == doctest::Approx(-50.0).epsilon(1e-15));
  CHECK(std::isfinite(log_sigmoid(-1e4)));
  CHECK(log_sigmoid(1e4) == 0.0);
  for (double x : {-30.0, -2.0, 0.3, 7.0}) {
    CHECK(std::exp(log_sigmoid(x)) == doctest::Approx(sigmoid(x)).epsilon(1e-14));
  }
}

TEST_CASE("softmax") {
  const RealVector u = softmax(real_vector({0, 0, 0, 0}));
  for (Index i = 0; i < 4; ++i) CHECK(u(i) == doctest::Approx(0.25));

  const RealVector p = softmax(real_vector({std::log(2.0), 0, 0}));
  CHECK(p(0) == doctest::Approx(0.5));
  CHECK(p(1) == doctest::Approx(0.25));
  CHECK(p(2) == doctest::Approx(0.25));

  for (double c : {-500.0, 0.0, 800.0}) {
    const RealVector q = softmax(real_vector({c, c + std::log(3.0)}));
    CHECK(q(0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(q(1) == doctest::Approx(0.75).epsilon(1e-12));
  }
  const RealVector big = softmax(real_vector({1e3, -1e3, 0.0}));
  CHECK(big.allFinite());
  CHECK(std::abs(big.sum() - 1.0) <= 1e-12);
}

TEST_CASE("log_softmax matches log of softmax") {
  const RealVector x = real_vector({0.1, -2.0, 3.5});
  const RealVector a = log_softmax(x);
  const RealVector b = softmax(x).array().log();
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("finite differences") {
  const RealVector x = real_vector({1.0, -2.0, 0.5});
  const RealVector g = finite_difference_gradient([](const RealVector& v) { return v.sum(); }, x);
  CHECK((g.array() - 1.0).abs().maxCoeff() <= 1e-9);

  const RealVector sq = finite_difference_gradient(
      [](const RealVector& v) { return v(0) * v(0); }, real_vector({3.0}));
  CHECK(sq(0) == doctest::Approx(6.0).epsilon(1e-6));

  const RealVector lse = finite_difference_gradient(
      [](const RealVector& v) { return log_sum_exp(v); }, real_vector({0.0, 0.0}));
  CHECK(lse(0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(lse(1) == doctest::Approx(0.5).epsilon(1e-9));

  CHECK_THROWS_AS(finite_difference_gradient(
                      [](const RealVector& v) {
                        return v(1) > 0 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
                      },
                      real_vector({0.0, 0.0})),
                  std::domain_error);
}

TEST_CASE("compare_gradients reports the worst coordinate") {
  const GradientDiscrepancy d =
      compare_gradients(real_vector({1.0, 2.0, 3.0}), real_vector({1.0, 2.5, 3.0}));
  CHECK(d.coordinate == 1);
  CHECK(d.max_error == doctest::Approx(0.2));
  const GradientDiscrepancy same = compare_gradients(real_vector({1e-9}), real_vector({1e-9}));
  CHECK(same.max_error == 0.0);
  CHECK(same.coordinate == 0);
}
