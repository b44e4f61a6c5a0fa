#pragma once

// Central finite-difference oracle shared by the unit and acceptance tests.
// It only ever calls the scalar function it is given, so it stays independent
// of the analytic backward pass it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "ftcnn/tensor.hpp"

namespace ftcnn::testing {

inline constexpr double kFiniteDifferenceStep = 1e-5;

// Denominator floor keeps gradients that are zero up to round-off from
// producing meaningless ratios.
inline double relativeError(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

inline Tensor numericGradient(const std::function<double(const Tensor&)>& f, const Tensor& at,
                              double eps = kFiniteDifferenceStep) {
  Tensor grad(at.shape());
  Tensor probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + eps;
    const double up = f(probe);
    probe[i] = original - eps;
    const double down = f(probe);
    probe[i] = original;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

inline double maxRelativeError(const Tensor& analytic, const Tensor& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, relativeError(analytic[i], numeric[i]));
  }
  return worst;
}

inline Tensor randomTensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensor t(shape);
  for (double& v : t.data()) v = d(rng);
  return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace ftcnn::testing
