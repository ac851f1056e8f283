#pragma once

// Central finite-difference oracle used to validate every analytic gradient.
// Step 1e-5 balances truncation against cancellation for double precision;
// relative error uses max(|a|, |b|, 1) in the denominator so near-zero
// gradients are compared absolutely.

#include <algorithm>
#include <cmath>

namespace oracle {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kGradTol = 1e-4;

template <typename LossFn>
double central_diff(LossFn&& loss, double& coord, double h = kFdStep) {
  const double orig = coord;
  coord = orig + h;
  const double fp = loss();
  coord = orig - h;
  const double fm = loss();
  coord = orig;
  return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

}  // namespace oracle
