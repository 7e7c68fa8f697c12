#pragma once

#include <cmath>
#include <sstream>

#include "lrgw/alloc_stats.hpp"
#include "lrgw/types.hpp"

namespace lrgw {

struct DykstraResult {
  LowRankCoupling triple;
  // Final scalings; the factors satisfy exactly
  // source_factor = Diag(u_source) * K1 * Diag(v_source) and likewise for
  // the target side, so they can be recomputed bit-for-bit.
  Vector u_source, v_source;
  Vector u_target, v_target;
  int iterations = 0;
};

struct FeasibilityResiduals {
  double source_rows = 0.0;   // || Q 1 - a ||_1
  double target_rows = 0.0;   // || R 1 - b ||_1
  double source_cols = 0.0;   // || Q^T 1 - g ||_1
  double target_cols = 0.0;   // || R^T 1 - g ||_1
  double weight_sum = 0.0;    // | sum g - 1 |
  double weight_floor = 0.0;  // max(0, alpha - min g)
  double negativity = 0.0;    // most negative entry, as a magnitude

  double worst() const {
    return std::max({source_rows, target_rows, source_cols, target_cols,
                     weight_sum, weight_floor, negativity});
  }
};

inline FeasibilityResiduals feasibility_residuals(const LowRankCoupling& triple,
                                                  const Vector& row_target,
                                                  const Vector& col_target,
                                                  double alpha) {
  FeasibilityResiduals out;
  out.source_rows =
      (triple.source_factor.rowwise().sum() - row_target).lpNorm<1>();
  out.target_rows =
      (triple.target_factor.rowwise().sum() - col_target).lpNorm<1>();
  out.source_cols = (triple.source_factor.colwise().sum().transpose() -
                     triple.inner_weights)
                        .lpNorm<1>();
  out.target_cols = (triple.target_factor.colwise().sum().transpose() -
                     triple.inner_weights)
                        .lpNorm<1>();
  out.weight_sum = std::abs(triple.inner_weights.sum() - 1.0);
  out.weight_floor =
      std::max(0.0, alpha - triple.inner_weights.minCoeff());
  out.negativity = std::max(
      {0.0, -triple.source_factor.minCoeff(), -triple.target_factor.minCoeff(),
       -triple.inner_weights.minCoeff()});
  return out;
}

namespace detail {

// 0/0 is 0; x/0 with x > 0 means an upstream NaN/overflow, since strictly
// positive kernels cannot produce true zeros here.
inline Vector guarded_quotient(const Vector& numerator,
                               const Vector& denominator, const char* who) {
  Vector out(numerator.size());
  for (Index i = 0; i < numerator.size(); ++i) {
    if (denominator(i) == 0.0) {
      if (numerator(i) == 0.0) {
        out(i) = 0.0;
        continue;
      }
      throw numerical_error(std::string(who) +
                            ": division by zero with nonzero numerator");
    }
    out(i) = numerator(i) / denominator(i);
  }
  return out;
}

}  // namespace detail

// Alternating Bregman projections onto the truncated low-rank transport set:
// the sweep clamps the inner weights at alpha, re-balances them by the
// geometric mean of the three column sums, then refreshes the scalings. The
// two weight updates are applied in exactly this order; swapping them yields
// different iterates. Stops when the summed l1 marginal error of both factor
// couplings drops below delta.
inline DykstraResult dykstra_project(const KernelTriple& kernels,
                                     const Vector& row_target,
                                     const Vector& col_target, double alpha,
                                     double delta, int max_iter) {
  const Index n = kernels.source_kernel.rows();
  const Index m = kernels.target_kernel.rows();
  const Index r = kernels.source_kernel.cols();
  require(kernels.target_kernel.cols() == r && kernels.weight_kernel.size() == r,
          "dykstra_project: kernel ranks disagree");
  require(row_target.size() == n && col_target.size() == m,
          "dykstra_project: marginal sizes do not match the kernels");
  require(alpha > 0.0 && alpha <= 1.0 / static_cast<double>(r),
          "dykstra_project: need 0 < alpha <= 1/r");
  require(delta > 0.0 && max_iter >= 1,
          "dykstra_project: bad tolerance or budget");
  require((kernels.source_kernel.array() > 0.0).all() &&
              (kernels.target_kernel.array() > 0.0).all() &&
              (kernels.weight_kernel.array() > 0.0).all(),
          "dykstra_project: kernels must be strictly positive");

  note_buffer(static_cast<std::size_t>(n + m) * r, "dykstra.workspace");
  Vector u1 = Vector::Ones(n), u2 = Vector::Ones(m);
  Vector v1 = Vector::Ones(r), v2 = Vector::Ones(r);
  Vector v1_prev = Vector::Ones(r), v2_prev = Vector::Ones(r);
  Vector q1 = Vector::Ones(r), q2 = Vector::Ones(r);
  Vector q3_1 = Vector::Ones(r), q3_2 = Vector::Ones(r);
  Vector g_prev = kernels.weight_kernel;
  Vector weights(r);

  double residual = std::numeric_limits<double>::infinity();
  int sweeps = 0;
  while (sweeps < max_iter) {
    ++sweeps;
    u1 = detail::guarded_quotient(
        row_target, kernels.source_kernel * v1_prev, "dykstra_project");
    u2 = detail::guarded_quotient(
        col_target, kernels.target_kernel * v2_prev, "dykstra_project");

    // Weight projection 1: clamp at the floor, with its Dykstra correction.
    weights = (g_prev.cwiseProduct(q3_1)).cwiseMax(alpha);
    q3_1 = detail::guarded_quotient(g_prev.cwiseProduct(q3_1), weights,
                                    "dykstra_project");
    g_prev = weights;

    // Weight projection 2: geometric mean of the three column-sum estimates.
    const Vector source_cols = kernels.source_kernel.transpose() * u1;
    const Vector target_cols = kernels.target_kernel.transpose() * u2;
    weights = ((g_prev.cwiseProduct(q3_2)).array().pow(1.0 / 3.0) *
               (v1_prev.cwiseProduct(q1).cwiseProduct(source_cols))
                   .array()
                   .pow(1.0 / 3.0) *
               (v2_prev.cwiseProduct(q2).cwiseProduct(target_cols))
                   .array()
                   .pow(1.0 / 3.0))
                  .matrix();

    v1 = detail::guarded_quotient(weights, source_cols, "dykstra_project");
    v2 = detail::guarded_quotient(weights, target_cols, "dykstra_project");
    q1 = detail::guarded_quotient(v1_prev.cwiseProduct(q1), v1,
                                  "dykstra_project");
    q2 = detail::guarded_quotient(v2_prev.cwiseProduct(q2), v2,
                                  "dykstra_project");
    q3_2 = detail::guarded_quotient(g_prev.cwiseProduct(q3_2), weights,
                                    "dykstra_project");
    v1_prev = v1;
    v2_prev = v2;
    g_prev = weights;

    if (!u1.allFinite() || !u2.allFinite() || !v1.allFinite() ||
        !v2.allFinite() || !weights.allFinite())
      throw numerical_error("dykstra_project: non-finite scalings");

    residual = (u1.cwiseProduct(kernels.source_kernel * v1) - row_target)
                   .lpNorm<1>() +
               (u2.cwiseProduct(kernels.target_kernel * v2) - col_target)
                   .lpNorm<1>();
    if (residual < delta) break;
  }
  if (residual >= delta) {
    std::ostringstream message;
    message << "dykstra_project: residual " << residual << " above " << delta
            << " after " << max_iter << " sweeps";
    throw convergence_error(message.str(), residual);
  }

  DykstraResult out;
  note_buffer(static_cast<std::size_t>(n + m) * r, "dykstra.factors");
  out.triple.source_factor =
      u1.asDiagonal() * kernels.source_kernel * v1.asDiagonal();
  out.triple.target_factor =
      u2.asDiagonal() * kernels.target_kernel * v2.asDiagonal();
  // The clamp is the algorithm's max step; re-applying it on exit keeps the
  // returned weights at or above the floor regardless of which projection
  // the sweep ended on.
  out.triple.inner_weights = weights.cwiseMax(alpha);
  out.u_source = std::move(u1);
  out.v_source = std::move(v1);
  out.u_target = std::move(u2);
  out.v_target = std::move(v2);
  out.iterations = sweeps;
  return out;
}

}  // namespace lrgw
