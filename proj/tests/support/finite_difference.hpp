#pragma once

// Central finite-difference oracles used across the gradient tests. These
// stay independent of the analytic backward paths they check.

#include <progslam/core/types.hpp>

#include <functional>

namespace progslam::testing {

// d(f)/d(x_i) by central differences with per-parameter scaled step.
inline VecX finite_difference(const std::function<double(const VecX&)>& f,
                              const VecX& x, double h = 1e-5) {
  VecX g(x.size());
  VecX xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double step = h * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + step;
    double fp = f(xp);
    xp[i] = x[i] - step;
    double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

// Relative error between an analytic gradient and its finite-difference
// estimate, using a norm-scaled denominator so near-zero entries do not
// blow up the ratio.
inline double gradient_rel_error(const VecX& analytic, const VecX& fd) {
  double denom = std::max({analytic.norm(), fd.norm(), 1e-12});
  return (analytic - fd).norm() / denom;
}

}  // namespace progslam::testing
