#pragma once

#include <chrono>
#include <cmath>
#include <sstream>

#include "lrgw/costs.hpp"
#include "lrgw/sinkhorn.hpp"
#include "lrgw/types.hpp"

namespace lrgw {

enum class InitScheme { product, lower_bound };

struct EntropicConfig {
  double epsilon = 1e-2;
  int outer_iter = 50;
  double inner_delta = 1e-6;
  int inner_max_iter = 10000;
  // The lower-bound initialization reuses this same epsilon for its inner
  // transport problem.
  InitScheme init = InitScheme::lower_bound;
  double stop_tol = 1e-7;  // relative loss change between outer iterations
};

namespace detail {

inline double elapsed_ms_since(
    const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace detail

// Distortion energy through the quadratic reformulation
//   <A^{.2} a, a> + <B^{.2} b, b> - 2 <A P B, P>
// with the marginals read off the plan itself. Factored inputs evaluate the
// cross term through the d x d' contractions G1 = A1^T P B2, G2 = A2^T P B1
// and the constant terms through the widened factors, so nothing of size
// n x m is formed beyond P.
inline double eval_gw_objective(const CostView& a_cost, const CostView& b_cost,
                                const Coupling& coupling) {
  const Index n = coupling.plan.rows();
  const Index m = coupling.plan.cols();
  require(a_cost.rows() == n && a_cost.cols() == n,
          "eval_gw_objective: source cost does not match the plan");
  require(b_cost.rows() == m && b_cost.cols() == m,
          "eval_gw_objective: target cost does not match the plan");

  const Vector row_marginal = coupling.plan.rowwise().sum();
  const Vector col_marginal = coupling.plan.colwise().sum();
  const double constant =
      a_cost.hadamard_square_apply(row_marginal).dot(row_marginal) +
      b_cost.hadamard_square_apply(col_marginal).dot(col_marginal);

  double cross;
  if (a_cost.factored() && b_cost.factored()) {
    // G1 and G2 live in d x d'; P is the only n x m object touched.
    const FactoredCost& af = a_cost.factored_cost();
    const FactoredCost& bf = b_cost.factored_cost();
    const Matrix g1 = af.left.transpose() * (coupling.plan * bf.right);
    const Matrix g2 = af.right.transpose() * (coupling.plan * bf.left);
    cross = g1.cwiseProduct(g2).sum();
  } else {
    note_buffer(static_cast<std::size_t>(n) * m, "eval_gw.cross");
    const Matrix plan_b =
        b_cost.apply_transpose(coupling.plan.transpose()).transpose();  // P B
    cross = a_cost.apply(plan_b).cwiseProduct(coupling.plan).sum();
  }
  return constant - 2.0 * cross;
}

// Entropic transport plan for the profile cost
// C[i][j] = (sqrt(x~_i) - sqrt(y~_j))^2, x~ = A^{.2} a, y~ = B^{.2} b.
// This adapts the classic first lower bound as a cheap starting plan.
inline Coupling init_lower_bound_entropic(const CostView& a_cost,
                                          const CostView& b_cost,
                                          const Vector& row_target,
                                          const Vector& col_target,
                                          double epsilon, double delta = 1e-6,
                                          int max_iter = 10000) {
  require(epsilon > 0.0, "init_lower_bound_entropic: epsilon must be > 0");
  const Vector x_profile =
      a_cost.hadamard_square_apply(row_target).cwiseMax(0.0);
  const Vector y_profile =
      b_cost.hadamard_square_apply(col_target).cwiseMax(0.0);
  const Vector s = x_profile.cwiseSqrt();
  const Vector t = y_profile.cwiseSqrt();

  const Index n = s.size();
  const Index m = t.size();
  note_buffer(static_cast<std::size_t>(n) * m, "init_lower_bound.cost");
  Matrix log_kernel(n, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) {
      const double gap = s(i) - t(j);
      log_kernel(i, j) = -(gap * gap) / epsilon;
    }
  // Row-max stabilization keeps the plain path usable; if the spread still
  // underflows, the log-domain projection takes over.
  Matrix kernel =
      (log_kernel.colwise() - log_kernel.rowwise().maxCoeff()).array().exp().matrix();
  if ((kernel.array() > 0.0).all())
    return kl_project(kernel, row_target, col_target, delta, max_iter).first;
  return kl_project_log(log_kernel, row_target, col_target, delta, max_iter)
      .first;
}

namespace detail {

// One KL projection of exp(scaled_cross) onto the polytope, choosing the
// plain path when the row-shifted kernel stays positive and the log-domain
// path otherwise. The row shift is absorbed by the row scaling, so both
// paths share the same fixed point.
inline std::pair<Coupling, int> project_gibbs(const Matrix& log_kernel,
                                              const Vector& row_target,
                                              const Vector& col_target,
                                              double delta, int max_iter) {
  Matrix kernel =
      (log_kernel.colwise() - log_kernel.rowwise().maxCoeff()).array().exp().matrix();
  if ((kernel.array() > 0.0).all()) {
    auto [coupling, scaling] =
        kl_project(kernel, row_target, col_target, delta, max_iter);
    return {std::move(coupling), scaling.iterations};
  }
  auto [coupling, scaling] =
      kl_project_log(log_kernel, row_target, col_target, delta, max_iter);
  return {std::move(coupling), scaling.iterations};
}

template <typename CrossFn>
std::pair<Coupling, SolveReport> run_entropic_loop(
    const CostView& a_cost, const CostView& b_cost, const Vector& row_target,
    const Vector& col_target, const EntropicConfig& cfg, CrossFn&& cross_term) {
  require(cfg.epsilon > 0.0, "entropic solve: epsilon must be > 0");
  check_probability(row_target, "entropic solve (row)");
  check_probability(col_target, "entropic solve (col)");

  Coupling plan =
      cfg.init == InitScheme::product
          ? Coupling{row_target * col_target.transpose(), row_target,
                     col_target}
          : init_lower_bound_entropic(a_cost, b_cost, row_target, col_target,
                                      cfg.epsilon, cfg.inner_delta,
                                      cfg.inner_max_iter);

  SolveReport report;
  const double initial_loss = eval_gw_objective(a_cost, b_cost, plan);
  double best_loss = initial_loss;
  double previous_loss = initial_loss;
  report.stop_reason = StopReason::iteration_budget;

  for (int iter = 0; iter < cfg.outer_iter; ++iter) {
    const auto tick = std::chrono::steady_clock::now();
    Matrix scaled_cross = cross_term(plan.plan);  // (4/eps) * A P B
    if (!scaled_cross.allFinite()) {
      std::ostringstream message;
      message << "entropic solve: non-finite synthetic cost at outer iteration "
              << iter;
      throw numerical_error(message.str());
    }
    std::pair<Coupling, int> projected;
    try {
      projected = project_gibbs(scaled_cross, row_target, col_target,
                                cfg.inner_delta, cfg.inner_max_iter);
    } catch (convergence_error& failure) {
      std::ostringstream message;
      message << failure.what() << " (outer iteration " << iter << ")";
      throw convergence_error(message.str(), failure.last_residual);
    }
    plan = std::move(projected.first);

    const double loss = eval_gw_objective(a_cost, b_cost, plan);
    report.losses.push_back(loss);
    report.inner_iterations.push_back(projected.second);
    report.elapsed_ms.push_back(elapsed_ms_since(tick));
    best_loss = std::min(best_loss, loss);

    const double scale = std::max({1.0, std::abs(loss), std::abs(previous_loss)});
    if (std::abs(previous_loss - loss) <= cfg.stop_tol * scale) {
      report.stop_reason = StopReason::loss_tolerance;
      break;
    }
    previous_loss = loss;
  }
  report.initial_gap = initial_loss - best_loss;
  return {std::move(plan), std::move(report)};
}

}  // namespace detail

// Cubic baseline: iterate C <- -4 A P B, K <- exp(-C/eps), P <- KL-project.
inline std::pair<Coupling, SolveReport> solve_entropic_gw(
    const DenseCost& a_cost, const DenseCost& b_cost, const Vector& row_target,
    const Vector& col_target, const EntropicConfig& cfg) {
  const double scale = 4.0 / cfg.epsilon;
  const Index n = a_cost.size();
  const Index m = b_cost.size();
  return detail::run_entropic_loop(
      a_cost, b_cost, row_target, col_target, cfg, [&](const Matrix& plan) {
        note_buffer(static_cast<std::size_t>(n) * m, "entropic.cross");
        return Matrix(scale * (a_cost.values * plan * b_cost.values));
      });
}

// Same iteration computed through the thin factors:
// G2 <- A2^T P B1, then C <- -4 A1 G2 B2^T.
inline std::pair<Coupling, SolveReport> solve_quad_entropic_gw(
    const FactoredCost& a_cost, const FactoredCost& b_cost,
    const Vector& row_target, const Vector& col_target,
    const EntropicConfig& cfg) {
  require(a_cost.rows() == a_cost.cols() && b_cost.rows() == b_cost.cols(),
          "solve_quad_entropic_gw: costs must be square");
  const double scale = 4.0 / cfg.epsilon;
  const Index n = a_cost.rows();
  const Index m = b_cost.rows();
  return detail::run_entropic_loop(
      a_cost, b_cost, row_target, col_target, cfg, [&](const Matrix& plan) {
        Matrix inner = a_cost.right.transpose() * plan;  // d x m
        Matrix small = inner * b_cost.left;              // d x d', = A2^T P B1
        note_buffer(static_cast<std::size_t>(n) * m, "quad_entropic.cross");
        return Matrix(scale * (a_cost.left * small * b_cost.right.transpose()));
      });
}

}  // namespace lrgw
