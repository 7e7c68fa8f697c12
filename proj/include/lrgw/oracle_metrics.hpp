#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "lrgw/alloc_stats.hpp"
#include "lrgw/types.hpp"

namespace lrgw {

// Brute-force evaluation of the distortion energy
//   sum_{i,j,i',j'} (A[i][i'] - B[j][j'])^2 P[i][j] P[i'][j']
// by the direct four-index loop. Deliberately capped: oracles must stay
// cheap enough that they never dominate test time.
inline double gw_quadruple_sum(const DenseCost& a_cost, const DenseCost& b_cost,
                               const Coupling& coupling) {
  const Index n = a_cost.size();
  const Index m = b_cost.size();
  require(coupling.plan.rows() == n && coupling.plan.cols() == m,
          "gw_quadruple_sum: plan shape does not match costs");
  require(n * m <= 10000,
          "gw_quadruple_sum: refusing instances above the oracle scale cap "
          "(n*m <= 1e4)");
  double total = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) {
      const double mass_ij = coupling.plan(i, j);
      if (mass_ij == 0.0) continue;
      for (Index k = 0; k < n; ++k)
        for (Index l = 0; l < m; ++l) {
          const double gap = a_cost.values(i, k) - b_cost.values(j, l);
          total += gap * gap * mass_ij * coupling.plan(k, l);
        }
    }
  return total;
}

// <x, log(x/y) - 1> with the 0 log 0 = 0 convention.
inline double generalized_kl(const Eigen::Ref<const Matrix>& x,
                             const Eigen::Ref<const Matrix>& y) {
  require(x.rows() == y.rows() && x.cols() == y.cols(),
          "generalized_kl: shape mismatch");
  double total = 0.0;
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i) {
      const double xi = x(i, j);
      const double yi = y(i, j);
      require(xi >= 0.0, "generalized_kl: negative entry in first argument");
      require(yi > 0.0, "generalized_kl: non-positive entry in second argument");
      if (xi > 0.0) total += xi * (std::log(xi / yi) - 1.0);
    }
  return total;
}

// Bregman divergence of the entropy, sum x log(x/y) - x + y. Nonnegative,
// zero iff x == y; this is the form the stationarity criterion sums.
inline double bregman_kl(const Eigen::Ref<const Matrix>& x,
                         const Eigen::Ref<const Matrix>& y) {
  return generalized_kl(x, y) + y.sum();
}

// Central finite differences of a scalar field over a coupling triple.
inline GradientTriple finite_difference_gradient(
    const std::function<double(const LowRankCoupling&)>& field,
    const LowRankCoupling& point, double step) {
  require(step >= 1e-7 && step <= 1e-4,
          "finite_difference_gradient: step outside [1e-7, 1e-4]");
  require((point.source_factor.array() > 0).all() &&
              (point.target_factor.array() > 0).all() &&
              (point.inner_weights.array() > 0).all(),
          "finite_difference_gradient: point must be interior");

  const auto central = [&](LowRankCoupling& probe, double* slot) {
    const double saved = *slot;
    *slot = saved + step;
    const double upper = field(probe);
    *slot = saved - step;
    const double lower = field(probe);
    *slot = saved;
    if (!std::isfinite(upper) || !std::isfinite(lower))
      throw numerical_error("finite_difference_gradient: field is non-finite");
    return (upper - lower) / (2.0 * step);
  };

  GradientTriple out;
  out.d_source.resize(point.source_factor.rows(), point.source_factor.cols());
  out.d_target.resize(point.target_factor.rows(), point.target_factor.cols());
  out.d_weights.resize(point.inner_weights.size());

  LowRankCoupling probe = point;
  for (Index j = 0; j < probe.source_factor.cols(); ++j)
    for (Index i = 0; i < probe.source_factor.rows(); ++i)
      out.d_source(i, j) = central(probe, &probe.source_factor(i, j));
  for (Index j = 0; j < probe.target_factor.cols(); ++j)
    for (Index i = 0; i < probe.target_factor.rows(); ++i)
      out.d_target(i, j) = central(probe, &probe.target_factor(i, j));
  for (Index k = 0; k < probe.inner_weights.size(); ++k)
    out.d_weights(k) = central(probe, &probe.inner_weights(k));
  return out;
}

// Fraction of samples closer than the true match, averaged over the source
// side; 0 is a perfect alignment, 1 the worst possible one.
inline double foscttm(const PointCloud& aligned, const PointCloud& target,
                      const std::vector<Index>& true_match) {
  const Index n = aligned.size();
  require(target.size() == n && static_cast<Index>(true_match.size()) == n,
          "foscttm: sizes must match");
  require(aligned.dim() == target.dim(), "foscttm: dimensions must match");
  require(n >= 2, "foscttm: need at least two samples");
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    require(true_match[i] >= 0 && true_match[i] < n,
            "foscttm: match index out of range");
    const double own =
        (aligned.points.row(i) - target.points.row(true_match[i])).norm();
    Index closer = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == true_match[i]) continue;
      if ((aligned.points.row(i) - target.points.row(j)).norm() < own)
        ++closer;
    }
    total += static_cast<double>(closer) / static_cast<double>(n - 1);
  }
  return total / static_cast<double>(n);
}

}  // namespace lrgw
