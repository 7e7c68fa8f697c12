#pragma once

#include <chrono>
#include <cmath>
#include <sstream>

#include "lrgw/costs.hpp"
#include "lrgw/lr_dykstra.hpp"
#include "lrgw/types.hpp"

namespace lrgw {

// Rank-3 factors of the profile cost C[i][j] = (sqrt(x~_i) - sqrt(y~_j))^2.
struct InitCostFactors {
  Matrix left;   // n x 3
  Matrix right;  // 3 x m

  FactoredCost as_factored() const {
    return FactoredCost{left, right.transpose(), 3};
  }
};

// Which profile the initialization cost compares. `profile_sqrt` is the
// proved lower-bound form (sqrt(x~_i) - sqrt(y~_j))^2; `profile_plain`
// matches the literal listing (x~_i - y~_j)^2 and is kept for comparison
// because the two genuinely disagree.
enum class InitCostVariant { profile_sqrt, profile_plain };

// Builds the initialization cost factors from x~ = A^{.2} a, y~ = B^{.2} b.
// Factored costs evaluate the profiles through the widened factors in
// O(n d^2 + m d'^2).
inline InitCostFactors build_init_cost(
    const CostView& a_cost, const Vector& row_target, const CostView& b_cost,
    const Vector& col_target,
    InitCostVariant variant = InitCostVariant::profile_sqrt) {
  Vector x_profile = a_cost.hadamard_square_apply(row_target);
  Vector y_profile = b_cost.hadamard_square_apply(col_target);
  if (x_profile.minCoeff() < -1e-8 || y_profile.minCoeff() < -1e-8)
    throw numerical_error(
        "build_init_cost: squared-cost profile came out negative; the cost "
        "inputs are not valid nonnegative costs");
  x_profile = x_profile.cwiseMax(0.0);
  y_profile = y_profile.cwiseMax(0.0);

  const Vector s = variant == InitCostVariant::profile_sqrt
                       ? Vector(x_profile.cwiseSqrt())
                       : x_profile;
  const Vector t = variant == InitCostVariant::profile_sqrt
                       ? Vector(y_profile.cwiseSqrt())
                       : y_profile;
  const double root2 = std::sqrt(2.0);

  InitCostFactors out;
  out.left.resize(s.size(), 3);
  out.left.col(0) = s.array().square();
  out.left.col(1).setOnes();
  out.left.col(2) = -root2 * s;
  out.right.resize(3, t.size());
  out.right.row(0).setOnes();
  out.right.row(1) = t.array().square();
  out.right.row(2) = root2 * t.transpose();
  return out;
}

struct LotConfig {
  Index rank = 2;
  double alpha = 1e-10;
  double gamma = 100.0;
  double dykstra_delta = 1e-3;
  int dykstra_max_iter = 5000;
  int outer_iter = 50;
  double stop_tol = 1e-7;  // relative objective change
  std::uint64_t seed = 0;  // drives the symmetry-breaking jitter below
};

namespace detail {

inline LowRankCoupling uniform_triple(const Vector& row_target,
                                      const Vector& col_target, Index rank) {
  const Vector weights = uniform_weights(rank);
  return LowRankCoupling{row_target * weights.transpose(),
                         col_target * weights.transpose(), weights};
}

// The pure product triple spans an invariant manifold of the mirror-descent
// map (every column of each kernel comes out identical, and the plan stays
// a b^T with the objective constant there), so it cannot serve as the
// starting point. A seeded multiplicative jitter projected back onto the
// feasible set breaks the symmetry deterministically.
inline LowRankCoupling jittered_start(const Vector& row_target,
                                      const Vector& col_target, Index rank,
                                      double alpha, double delta, int max_iter,
                                      std::uint64_t seed) {
  if (rank == 1) return uniform_triple(row_target, col_target, 1);
  CounterRng rng(seed ^ 0x10775EEDull);
  KernelTriple kernels;
  kernels.source_kernel.resize(row_target.size(), rank);
  kernels.target_kernel.resize(col_target.size(), rank);
  const double share = 1.0 / static_cast<double>(rank);
  for (Index i = 0; i < row_target.size(); ++i)
    for (Index k = 0; k < rank; ++k)
      kernels.source_kernel(i, k) =
          row_target(i) * share * rng.uniform(0.8, 1.2);
  for (Index j = 0; j < col_target.size(); ++j)
    for (Index k = 0; k < rank; ++k)
      kernels.target_kernel(j, k) =
          col_target(j) * share * rng.uniform(0.8, 1.2);
  kernels.weight_kernel = uniform_weights(rank);
  return dykstra_project(kernels, row_target, col_target, alpha, delta,
                         max_iter)
      .triple;
}

// Fail fast on exponents that would overflow, instead of rescaling the step
// (rescaling would silently change the descent geometry). Underflow on the
// negative side is handled where the kernels are built, by flooring at a
// subnormal-scale constant: entries there carry no mass representable in
// double precision, they only keep strict positivity intact.
inline constexpr double kKernelFloor = 1e-300;

template <typename Derived>
void check_exponent_range(const Eigen::MatrixBase<Derived>& exponent,
                          const char* who) {
  const double top = exponent.maxCoeff();
  if (top > 700.0) {
    std::ostringstream message;
    message << who << ": kernel exponent " << top
            << " would overflow; use a smaller gamma";
    throw numerical_error(message.str());
  }
}

}  // namespace detail

// Gradient of the linear transport objective <C, Q Diag(1/g) R^T>:
// grad_Q = C R Diag(1/g), grad_R = C^T Q Diag(1/g),
// grad_g = -diag(Q^T C R) / g^2. Checked against central finite differences
// in the test suite before anything else relies on it.
inline GradientTriple lot_gradient(const CostView& cost,
                                   const LowRankCoupling& triple) {
  const Vector inv_weights = triple.inner_weights.cwiseInverse();
  GradientTriple out;
  Matrix cost_r = cost.apply(triple.target_factor);  // n x r
  Vector omega =
      (triple.source_factor.cwiseProduct(cost_r)).colwise().sum().transpose();
  out.d_source = cost_r * inv_weights.asDiagonal();
  out.d_target =
      cost.apply_transpose(triple.source_factor) * inv_weights.asDiagonal();
  out.d_weights = -omega.cwiseProduct(inv_weights).cwiseProduct(inv_weights);
  return out;
}

// Mirror descent for the linear transport objective over the truncated
// low-rank set; the kernels are exp(log xi - gamma * grad) elementwise.
// Factored costs keep every product thin.
inline std::pair<LowRankCoupling, SolveReport> lot_solve(
    const CostView& cost, const Vector& row_target, const Vector& col_target,
    const LotConfig& cfg) {
  check_probability(row_target, "lot_solve (row)");
  check_probability(col_target, "lot_solve (col)");
  require(cfg.rank >= 1, "lot_solve: rank must be >= 1");
  require(cfg.alpha > 0.0 && cfg.alpha <= 1.0 / static_cast<double>(cfg.rank),
          "lot_solve: need 0 < alpha <= 1/rank");
  require(cfg.gamma > 0.0, "lot_solve: gamma must be > 0");

  LowRankCoupling triple = detail::jittered_start(
      row_target, col_target, cfg.rank, cfg.alpha, cfg.dykstra_delta,
      cfg.dykstra_max_iter, cfg.seed);

  const auto objective_products = [&](const LowRankCoupling& point) {
    Matrix cost_r = cost.apply(point.target_factor);  // n x r
    Vector omega =
        (point.source_factor.cwiseProduct(cost_r)).colwise().sum().transpose();
    return std::make_pair(std::move(cost_r), std::move(omega));
  };

  SolveReport report;
  auto [cost_r, omega] = objective_products(triple);
  double objective = omega.cwiseQuotient(triple.inner_weights).sum();
  const double initial_objective = objective;
  double best = objective;
  report.stop_reason = StopReason::iteration_budget;

  for (int iter = 0; iter < cfg.outer_iter; ++iter) {
    const auto tick = std::chrono::steady_clock::now();
    const GradientTriple grad = lot_gradient(cost, triple);

    KernelTriple kernels;
    Matrix exponent = -cfg.gamma * grad.d_source;
    detail::check_exponent_range(exponent, "lot_solve");
    kernels.source_kernel =
        triple.source_factor.cwiseProduct(exponent.array().exp().matrix())
            .cwiseMax(detail::kKernelFloor);

    exponent = -cfg.gamma * grad.d_target;
    detail::check_exponent_range(exponent, "lot_solve");
    kernels.target_kernel =
        triple.target_factor.cwiseProduct(exponent.array().exp().matrix())
            .cwiseMax(detail::kKernelFloor);

    const Vector weight_exponent = -cfg.gamma * grad.d_weights;
    detail::check_exponent_range(weight_exponent, "lot_solve");
    kernels.weight_kernel =
        triple.inner_weights
            .cwiseProduct(weight_exponent.array().exp().matrix())
            .cwiseMax(detail::kKernelFloor);

    DykstraResult projected =
        dykstra_project(kernels, row_target, col_target, cfg.alpha,
                        cfg.dykstra_delta, cfg.dykstra_max_iter);
    triple = std::move(projected.triple);
    triple.source_factor = triple.source_factor.cwiseMax(detail::kKernelFloor);
    triple.target_factor = triple.target_factor.cwiseMax(detail::kKernelFloor);

    std::tie(cost_r, omega) = objective_products(triple);
    const double next = omega.cwiseQuotient(triple.inner_weights).sum();
    report.losses.push_back(next);
    report.inner_iterations.push_back(projected.iterations);
    report.elapsed_ms.push_back(
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - tick)
            .count());
    best = std::min(best, next);

    const double scale = std::max({1.0, std::abs(objective), std::abs(next)});
    if (std::abs(objective - next) <= cfg.stop_tol * scale) {
      report.stop_reason = StopReason::loss_tolerance;
      objective = next;
      break;
    }
    objective = next;
  }
  report.initial_gap = initial_objective - best;
  return {std::move(triple), std::move(report)};
}

// Low-rank transport bound on the distortion energy: solves the LOT problem
// on the profile cost and returns both the minimizing triple (the solver
// initialization) and the bound value.
inline std::pair<LowRankCoupling, double> first_lower_bound(
    const CostView& a_cost, const CostView& b_cost, const Vector& row_target,
    const Vector& col_target, const LotConfig& cfg,
    InitCostVariant variant = InitCostVariant::profile_sqrt) {
  const InitCostFactors factors =
      build_init_cost(a_cost, row_target, b_cost, col_target, variant);
  const FactoredCost profile_cost = factors.as_factored();
  auto [triple, report] = lot_solve(profile_cost, row_target, col_target, cfg);
  const double bound = report.losses.empty() ? 0.0 : report.losses.back();
  return {std::move(triple), bound};
}

}  // namespace lrgw
