#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "lrgw/errors.hpp"

namespace lrgw {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// A family of points, one per row.
struct PointCloud {
  Matrix points;  // n x d

  Index size() const { return points.rows(); }
  Index dim() const { return points.cols(); }
};

// Dense intra-space cost matrix (symmetric, zero diagonal, nonnegative).
struct DenseCost {
  Matrix values;  // n x n

  Index size() const { return values.rows(); }
};

// Cost held as a thin product left * right^T; the full matrix is never
// required to apply it.
struct FactoredCost {
  Matrix left;   // n x k
  Matrix right;  // m x k
  Index rank_hint = 0;

  Index rows() const { return left.rows(); }
  Index cols() const { return right.rows(); }
};

// Dense transport plan together with the marginals it couples.
struct Coupling {
  Matrix plan;            // n x m
  Vector row_marginal;    // length n
  Vector col_marginal;    // length m
};

// Sinkhorn scaling vectors; plan = Diag(u) * K * Diag(v).
struct ScalingState {
  Vector u;
  Vector v;
  int iterations = 0;
};

// Plan in factored form P = source_factor * Diag(1/inner_weights) *
// target_factor^T. Both factors are couplings against the shared inner
// marginal: source_factor * 1 = a, target_factor * 1 = b, and the column
// sums of each factor equal inner_weights.
struct LowRankCoupling {
  Matrix source_factor;  // n x r
  Matrix target_factor;  // m x r
  Vector inner_weights;  // length r, >= alpha entrywise

  Index rows() const { return source_factor.rows(); }
  Index cols() const { return target_factor.rows(); }
  Index rank() const { return inner_weights.size(); }
};

// Positive kernels defining one KL-projection subproblem over the
// low-rank feasible set.
struct KernelTriple {
  Matrix source_kernel;  // n x r
  Matrix target_kernel;  // m x r
  Vector weight_kernel;  // length r
};

// Gradient blocks matching the LowRankCoupling layout.
struct GradientTriple {
  Matrix d_source;
  Matrix d_target;
  Vector d_weights;
};

enum class StopReason { none, loss_tolerance, delta_tolerance, iteration_budget };

inline const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::loss_tolerance: return "loss_tolerance";
    case StopReason::delta_tolerance: return "delta_tolerance";
    case StopReason::iteration_budget: return "iteration_budget";
    default: return "none";
  }
}

// Per-outer-iteration trace of a solve. `deltas` stays empty for solvers
// that do not evaluate the stationarity criterion.
struct SolveReport {
  std::vector<double> losses;
  std::vector<double> deltas;
  std::vector<int> inner_iterations;
  std::vector<double> elapsed_ms;
  double initial_gap = 0.0;  // loss at the initial iterate minus best loss seen
  StopReason stop_reason = StopReason::none;
  bool init_fallback = false;

  std::size_t iterations() const { return losses.size(); }
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw input_error(message);
}

inline void check_point_cloud(const PointCloud& cloud, const char* who) {
  require(cloud.points.rows() >= 1 && cloud.points.cols() >= 1,
          std::string(who) + ": point cloud must be nonempty");
  require(cloud.points.allFinite(),
          std::string(who) + ": point cloud has non-finite coordinates");
}

// Probability vector: nonnegative, sums to one within `tol`.
inline void check_probability(const Vector& p, const char* who,
                              double tol = 1e-12) {
  require(p.size() >= 1, std::string(who) + ": empty probability vector");
  require((p.array() >= 0.0).all(),
          std::string(who) + ": probability vector has negative entries");
  require(std::abs(p.sum() - 1.0) <= tol * std::max<double>(1.0, p.size()),
          std::string(who) + ": probability vector does not sum to 1");
}

inline Vector uniform_weights(Index n) {
  return Vector::Constant(n, 1.0 / static_cast<double>(n));
}

}  // namespace lrgw
