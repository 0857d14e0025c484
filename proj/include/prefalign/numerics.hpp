#pragma once

// Numerically stable scalar/vector primitives shared by the preference models
// and the losses, plus a central-difference gradient checker.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>

namespace prefalign {

using Index = Eigen::Index;
using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;

/// Throws std::invalid_argument if any coefficient is NaN or infinite.
template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& xs, const char* what = "vector") {
  for (Index i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs.derived().coeff(i))) {
      throw std::invalid_argument(std::string(what) + ": non-finite entry at index " +
                                  std::to_string(i));
    }
  }
}

/// Builds a validated RealVector from a literal list.
inline RealVector real_vector(std::initializer_list<double> values) {
  RealVector out(static_cast<Index>(values.size()));
  Index i = 0;
  for (double v : values) out(i++) = v;
  require_finite(out);
  return out;
}

/// log sum_i exp(x_i), shifted by the maximum so large inputs do not overflow.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& xs) {
  using Scalar = typename Derived::Scalar;
  if (xs.size() == 0) throw std::invalid_argument("log_sum_exp: empty vector");
  require_finite(xs, "log_sum_exp");
  const Scalar m = xs.maxCoeff();
  return m + std::log((xs.array() - m).exp().sum());
}

/// log sigma(x) = -log(1 + exp(-x)), evaluated without overflow in either tail.
template <typename Scalar>
Scalar log_sigmoid(Scalar x) {
  if (x >= Scalar(0)) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& xs) {
  if (xs.size() == 0) throw std::invalid_argument("softmax: empty vector");
  require_finite(xs, "softmax");
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> e =
      (xs.array() - xs.maxCoeff()).exp().matrix();
  return e / e.sum();
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> log_softmax(
    const Eigen::MatrixBase<Derived>& xs) {
  const auto lse = log_sum_exp(xs);
  return (xs.array() - lse).matrix();
}

using ScalarFunction = std::function<double(const RealVector&)>;

inline constexpr double kDefaultFiniteDifferenceStep = 1e-5;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
inline RealVector finite_difference_gradient(const ScalarFunction& f, const RealVector& x,
                                             double h = kDefaultFiniteDifferenceStep) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: step must be > 0");
  RealVector grad(x.size());
  RealVector probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double plus = f(probe);
    probe(i) = x(i) - h;
    const double minus = f(probe);
    probe(i) = x(i);
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw std::domain_error("finite_difference_gradient: non-finite evaluation at coordinate " +
                              std::to_string(i));
    }
    grad(i) = (plus - minus) / (2.0 * h);
  }
  return grad;
}

/// Location and size of the worst disagreement between two gradients.
struct GradientDiscrepancy {
  double max_error = 0.0;
  Index coordinate = -1;
};

/// Per-coordinate error |a - b| / max(1, |a|, |b|): relative for large entries,
/// absolute for entries near zero.
template <typename A, typename B>
GradientDiscrepancy compare_gradients(const Eigen::MatrixBase<A>& analytic,
                                      const Eigen::MatrixBase<B>& numeric) {
  if (analytic.size() != numeric.size()) {
    throw std::invalid_argument("compare_gradients: size mismatch");
  }
  GradientDiscrepancy out;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic.derived().coeff(i);
    const double b = numeric.derived().coeff(i);
    const double err = std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
    if (out.coordinate < 0 || !(err <= out.max_error)) {
      out.max_error = err;
      out.coordinate = i;
    }
  }
  return out;
}

}  // namespace prefalign
