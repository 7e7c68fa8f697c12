#pragma once

#include <chrono>
#include <cmath>
#include <sstream>

#include "lrgw/costs.hpp"
#include "lrgw/lot_init.hpp"
#include "lrgw/lr_dykstra.hpp"
#include "lrgw/oracle_metrics.hpp"
#include "lrgw/types.hpp"

namespace lrgw {

struct GwLrConfig {
  Index rank = 10;
  double alpha = 1e-10;
  double gamma = 100.0;
  double epsilon = 0.0;  // entropic weight; 0 disables the regularizer
  int outer_iter = 50;
  double dykstra_delta = 1e-3;
  int dykstra_max_iter = 5000;
  double stop_tol = 1e-6;
  std::uint64_t seed = 0;

  void check() const {
    require(rank >= 1, "GwLrConfig: rank must be >= 1");
    require(alpha > 0.0 && alpha <= 1.0 / static_cast<double>(rank),
            "GwLrConfig: need 0 < alpha <= 1/rank");
    require(gamma > 0.0, "GwLrConfig: gamma must be > 0");
    require(epsilon >= 0.0, "GwLrConfig: epsilon must be >= 0");
  }
};

struct SmoothnessConstants {
  double smoothness = 0.0;    // 27 (||A|| ||B|| / alpha^4 + epsilon)
  double gamma_theory = 0.0;  // 1 / (2 L); +inf sentinel when L == 0
  bool degenerate = false;
};

// Relative-smoothness constant of the distortion energy over the truncated
// set, and the step size the convergence analysis would prescribe. The
// theoretical step is exposed as a diagnostic only; at practical alpha it is
// far too small to run.
inline SmoothnessConstants smoothness_constants(const CostView& a_cost,
                                                const CostView& b_cost,
                                                double alpha, double epsilon) {
  require(alpha > 0.0, "smoothness_constants: alpha must be > 0");
  require(epsilon >= 0.0, "smoothness_constants: epsilon must be >= 0");
  const double norms = spectral_norm(a_cost) * spectral_norm(b_cost);
  SmoothnessConstants out;
  out.smoothness = 27.0 * (norms / std::pow(alpha, 4) + epsilon);
  if (out.smoothness > 0.0) {
    out.gamma_theory = 1.0 / (2.0 * out.smoothness);
  } else {
    out.gamma_theory = std::numeric_limits<double>::infinity();
    out.degenerate = true;
  }
  return out;
}

namespace detail {

// Shared per-iteration contractions. Everything flows through the thin
// products A (Q Diag(1/g)) and B R, so a factored cost never touches a
// buffer of size n*m, n*n or m*m.
struct GwLrBlocks {
  Matrix scaled_source;  // A P B R Diag(1/g), n x r
  Matrix scaled_target;  // B P^T A Q Diag(1/g), m x r
  Vector omega;          // diag(Q^T A P B R), length r
};

inline GwLrBlocks gw_lr_blocks(const CostView& a_cost, const CostView& b_cost,
                               const LowRankCoupling& triple) {
  const Vector inv_weights = triple.inner_weights.cwiseInverse();
  note_buffer(static_cast<std::size_t>(triple.rows() + triple.cols()) *
                  triple.rank(),
              "gw_lr.blocks");
  const Matrix source_scaled = triple.source_factor * inv_weights.asDiagonal();
  const Matrix a_source = a_cost.apply(source_scaled);        // n x r
  const Matrix b_target = b_cost.apply(triple.target_factor);  // m x r
  const Matrix cross_target =
      triple.target_factor.transpose() * b_target;  // r x r
  const Matrix cross_source =
      triple.source_factor.transpose() * a_source;  // r x r

  GwLrBlocks blocks;
  blocks.scaled_source =
      a_source * cross_target * inv_weights.asDiagonal();
  blocks.scaled_target =
      b_target * inv_weights.asDiagonal() * cross_source;
  blocks.omega = (cross_source.array() * cross_target.transpose().array())
                     .rowwise()
                     .sum()
                     .matrix();
  return blocks;
}

inline void check_interior(const LowRankCoupling& triple, const char* who) {
  require((triple.source_factor.array() > 0.0).all() &&
              (triple.target_factor.array() > 0.0).all() &&
              (triple.inner_weights.array() > 0.0).all(),
          std::string(who) + ": triple must be interior (strictly positive)");
}

}  // namespace detail

// Gradient of F_eps(Q, R, g) = -2 <A P B, P> + eps * sum xi (log xi - 1)
// summed over the three blocks, with P = Q Diag(1/g) R^T. The weight block
// is +4 omega / g^2: the positive sign is what central finite differences
// and the mirror-descent kernels below both require.
inline GradientTriple gw_lr_gradient(const CostView& a_cost,
                                     const CostView& b_cost,
                                     const LowRankCoupling& triple,
                                     double epsilon) {
  detail::check_interior(triple, "gw_lr_gradient");
  const auto blocks = detail::gw_lr_blocks(a_cost, b_cost, triple);
  const Vector inv_weights = triple.inner_weights.cwiseInverse();

  GradientTriple out;
  out.d_source = -4.0 * blocks.scaled_source;
  out.d_target = -4.0 * blocks.scaled_target;
  out.d_weights =
      4.0 * blocks.omega.cwiseProduct(inv_weights).cwiseProduct(inv_weights);
  if (epsilon > 0.0) {
    out.d_source += epsilon * triple.source_factor.array().log().matrix();
    out.d_target += epsilon * triple.target_factor.array().log().matrix();
    out.d_weights += epsilon * triple.inner_weights.array().log().matrix();
  }
  return out;
}

// Mirror-descent kernels at the current triple:
//   K1 = exp(4 gamma A P B R Diag(1/g) - (gamma eps - 1) log Q)
// and its two siblings, which is exp(log xi - gamma grad F_eps(xi))
// elementwise. Exponents beyond +-700 fail fast rather than rescale, since
// rescaling would silently change the descent geometry.
inline KernelTriple step_kernels(const CostView& a_cost, const CostView& b_cost,
                                 const LowRankCoupling& triple,
                                 const GwLrConfig& cfg) {
  detail::check_interior(triple, "step_kernels");
  cfg.check();
  const auto blocks = detail::gw_lr_blocks(a_cost, b_cost, triple);
  const double log_coeff = 1.0 - cfg.gamma * cfg.epsilon;
  const Vector inv_weights = triple.inner_weights.cwiseInverse();

  Matrix exponent =
      4.0 * cfg.gamma * blocks.scaled_source +
      log_coeff * triple.source_factor.array().log().matrix();
  detail::check_exponent_range(exponent, "step_kernels");
  KernelTriple kernels;
  kernels.source_kernel =
      exponent.array().exp().matrix().cwiseMax(detail::kKernelFloor);

  exponent = 4.0 * cfg.gamma * blocks.scaled_target +
             log_coeff * triple.target_factor.array().log().matrix();
  detail::check_exponent_range(exponent, "step_kernels");
  kernels.target_kernel =
      exponent.array().exp().matrix().cwiseMax(detail::kKernelFloor);

  Vector weight_exponent =
      -4.0 * cfg.gamma *
          blocks.omega.cwiseProduct(inv_weights).cwiseProduct(inv_weights) +
      log_coeff * triple.inner_weights.array().log().matrix();
  detail::check_exponent_range(weight_exponent, "step_kernels");
  kernels.weight_kernel =
      weight_exponent.array().exp().matrix().cwiseMax(detail::kKernelFloor);
  return kernels;
}

// Materialized plan Q Diag(1/g) R^T; refuses above the entry cap since this
// exists for inspection and tests, not for the solve path.
inline Coupling densify(const LowRankCoupling& triple,
                        std::size_t entry_cap = 10000000) {
  const std::size_t entries =
      static_cast<std::size_t>(triple.rows()) * triple.cols();
  if (entries > entry_cap) {
    std::ostringstream message;
    message << "densify: " << entries << " entries exceed the cap of "
            << entry_cap;
    throw input_error(message.str());
  }
  note_buffer(entries, "densify.plan");
  Matrix plan = triple.source_factor *
                triple.inner_weights.cwiseInverse().asDiagonal() *
                triple.target_factor.transpose();
  return Coupling{std::move(plan), triple.source_factor.rowwise().sum(),
                  triple.target_factor.rowwise().sum()};
}

namespace detail {

inline double triple_bregman_symmetric(const LowRankCoupling& x,
                                       const LowRankCoupling& y) {
  const double total = bregman_kl(x.source_factor, y.source_factor) +
                       bregman_kl(y.source_factor, x.source_factor) +
                       bregman_kl(x.target_factor, y.target_factor) +
                       bregman_kl(y.target_factor, x.target_factor) +
                       bregman_kl(x.inner_weights, y.inner_weights) +
                       bregman_kl(y.inner_weights, x.inner_weights);
  // Nonnegative by construction; near-identical arguments can cancel to a
  // few ulps below zero.
  return std::max(total, 0.0);
}

}  // namespace detail

struct DeltaResult {
  double delta = 0.0;
  LowRankCoupling next;  // the one-step mirror-descent image
};

// Stationarity criterion: symmetrized Bregman divergence between a state
// and its one-step mirror-descent image, scaled by 1/gamma^2. Zero exactly
// at fixed points of the update map.
inline DeltaResult delta_criterion(const CostView& a_cost,
                                   const CostView& b_cost,
                                   const LowRankCoupling& triple,
                                   const GwLrConfig& cfg,
                                   const Vector& row_target,
                                   const Vector& col_target) {
  const KernelTriple kernels = step_kernels(a_cost, b_cost, triple, cfg);
  DykstraResult projected =
      dykstra_project(kernels, row_target, col_target, cfg.alpha,
                      cfg.dykstra_delta, cfg.dykstra_max_iter);
  DeltaResult out;
  out.delta = detail::triple_bregman_symmetric(triple, projected.triple) /
              (cfg.gamma * cfg.gamma);
  out.next = std::move(projected.triple);
  return out;
}

namespace detail {

inline std::pair<LowRankCoupling, SolveReport> solve_gw_lr_impl(
    const CostView& a_cost, const CostView& b_cost, const Vector& row_target,
    const Vector& col_target, const GwLrConfig& cfg) {
  cfg.check();
  check_probability(row_target, "solve_gw_lr (row)");
  check_probability(col_target, "solve_gw_lr (col)");
  require(a_cost.rows() == a_cost.cols() && b_cost.rows() == b_cost.cols(),
          "solve_gw_lr: costs must be square");
  require(a_cost.rows() == row_target.size() &&
              b_cost.rows() == col_target.size(),
          "solve_gw_lr: marginal sizes do not match the costs");

  SolveReport report;
  const Vector x_profile =
      a_cost.hadamard_square_apply(row_target).cwiseMax(0.0);
  const Vector y_profile =
      b_cost.hadamard_square_apply(col_target).cwiseMax(0.0);
  const double constant =
      x_profile.dot(row_target) + y_profile.dot(col_target);

  LotConfig lot_cfg;
  lot_cfg.rank = cfg.rank;
  lot_cfg.alpha = cfg.alpha;
  lot_cfg.gamma = cfg.gamma;
  lot_cfg.dykstra_delta = cfg.dykstra_delta;
  lot_cfg.dykstra_max_iter = cfg.dykstra_max_iter;
  lot_cfg.seed = cfg.seed;

  LowRankCoupling triple;
  try {
    triple = first_lower_bound(a_cost, b_cost, row_target, col_target, lot_cfg)
                 .first;
    check_interior(triple, "solve_gw_lr init");
  } catch (const error&) {
    triple = jittered_start(row_target, col_target, cfg.rank, cfg.alpha,
                            cfg.dykstra_delta, cfg.dykstra_max_iter, cfg.seed);
    report.init_fallback = true;
  }

  const auto loss_at = [&](const LowRankCoupling& point) {
    const GwLrBlocks blocks = gw_lr_blocks(a_cost, b_cost, point);
    return constant -
           2.0 * blocks.omega.cwiseQuotient(point.inner_weights).sum();
  };

  const double initial_loss = loss_at(triple);
  double best_loss = initial_loss;
  double previous_loss = initial_loss;
  report.stop_reason = StopReason::iteration_budget;

  for (int iter = 0; iter < cfg.outer_iter; ++iter) {
    const auto tick = std::chrono::steady_clock::now();
    const KernelTriple kernels = step_kernels(a_cost, b_cost, triple, cfg);
    DykstraResult projected =
        dykstra_project(kernels, row_target, col_target, cfg.alpha,
                        cfg.dykstra_delta, cfg.dykstra_max_iter);

    projected.triple.source_factor =
        projected.triple.source_factor.cwiseMax(kKernelFloor);
    projected.triple.target_factor =
        projected.triple.target_factor.cwiseMax(kKernelFloor);
    const double delta =
        triple_bregman_symmetric(triple, projected.triple) /
        (cfg.gamma * cfg.gamma);
    triple = std::move(projected.triple);

    const double loss = loss_at(triple);
    report.losses.push_back(loss);
    report.deltas.push_back(delta);
    report.inner_iterations.push_back(projected.iterations);
    report.elapsed_ms.push_back(
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - tick)
            .count());
    best_loss = std::min(best_loss, loss);

    const double scale =
        std::max({1.0, std::abs(loss), std::abs(previous_loss)});
    if (std::abs(previous_loss - loss) <= cfg.stop_tol * scale) {
      report.stop_reason = StopReason::loss_tolerance;
      break;
    }
    if (delta < cfg.stop_tol) {
      report.stop_reason = StopReason::delta_tolerance;
      break;
    }
    previous_loss = loss;
  }
  report.initial_gap = initial_loss - best_loss;
  return {std::move(triple), std::move(report)};
}

}  // namespace detail

// Quadratic-time low-rank solver on dense costs.
inline std::pair<LowRankCoupling, SolveReport> solve_gw_lr(
    const DenseCost& a_cost, const DenseCost& b_cost, const Vector& row_target,
    const Vector& col_target, const GwLrConfig& cfg) {
  return detail::solve_gw_lr_impl(a_cost, b_cost, row_target, col_target, cfg);
}

// Linear-time variant: identical iteration on factored costs. Nothing of
// size n*m, n*n or m*m is ever allocated on this path.
inline std::pair<LowRankCoupling, SolveReport> solve_gw_lr_linear(
    const FactoredCost& a_cost, const FactoredCost& b_cost,
    const Vector& row_target, const Vector& col_target,
    const GwLrConfig& cfg) {
  return detail::solve_gw_lr_impl(a_cost, b_cost, row_target, col_target, cfg);
}

}  // namespace lrgw
