#pragma once

#include <cmath>
#include <sstream>
#include <vector>

#include "lrgw/alloc_stats.hpp"
#include "lrgw/oracle_metrics.hpp"
#include "lrgw/types.hpp"

namespace lrgw {

// KL projection of a positive kernel onto the transport polytope via
// alternating scalings. One sweep updates u then v, so column marginals are
// exact on exit and the stopping rule measures the l1 error of the row
// marginal after the full sweep. When `sweep_trace` is given, the plan after
// every sweep is recorded (test instrumentation; keep instances small).
inline std::pair<Coupling, ScalingState> kl_project(
    const Matrix& kernel, const Vector& row_target, const Vector& col_target,
    double delta, int max_iter, std::vector<Matrix>* sweep_trace = nullptr) {
  const Index n = kernel.rows();
  const Index m = kernel.cols();
  require(row_target.size() == n && col_target.size() == m,
          "kl_project: marginal sizes do not match the kernel");
  require((kernel.array() > 0.0).all(),
          "kl_project: kernel must be strictly positive");
  check_probability(row_target, "kl_project(row)");
  check_probability(col_target, "kl_project(col)");
  require(delta > 0.0 && max_iter >= 1, "kl_project: bad tolerance or budget");

  Vector u = Vector::Ones(n);
  Vector v = Vector::Ones(m);
  double row_error = std::numeric_limits<double>::infinity();
  int sweeps = 0;
  while (sweeps < max_iter) {
    ++sweeps;
    u = row_target.cwiseQuotient(kernel * v);
    v = col_target.cwiseQuotient(kernel.transpose() * u);
    if (!u.allFinite() || !v.allFinite())
      throw numerical_error(
          "kl_project: scaling overflow/underflow; use the log-domain variant");
    row_error = (u.cwiseProduct(kernel * v) - row_target).lpNorm<1>();
    if (sweep_trace) {
      note_buffer(static_cast<std::size_t>(n) * m, "kl_project.trace_plan");
      sweep_trace->push_back(u.asDiagonal() * kernel * v.asDiagonal());
    }
    if (row_error <= delta) break;
  }
  if (row_error > delta) {
    std::ostringstream message;
    message << "kl_project: marginal error " << row_error << " above " << delta
            << " after " << max_iter << " sweeps";
    throw convergence_error(message.str(), row_error);
  }

  note_buffer(static_cast<std::size_t>(n) * m, "kl_project.plan");
  Matrix plan = u.asDiagonal() * kernel * v.asDiagonal();
  return {Coupling{std::move(plan), row_target, col_target},
          ScalingState{std::move(u), std::move(v), sweeps}};
}

namespace detail {

inline Vector log_sum_exp_rows(const Matrix& values) {
  Vector shift = values.rowwise().maxCoeff();
  return (shift.array() +
          (values.colwise() - shift).array().exp().rowwise().sum().log())
      .matrix();
}

inline Vector log_sum_exp_cols(const Matrix& values) {
  Vector shift = values.colwise().maxCoeff().transpose();
  Vector sums = (values.rowwise() - shift.transpose())
                    .array()
                    .exp()
                    .colwise()
                    .sum()
                    .log()
                    .transpose()
                    .matrix();
  return shift + sums;
}

}  // namespace detail

// Log-domain variant of kl_project; same fixed point, computed with
// log-sum-exp updates so the kernel may span hundreds of orders of
// magnitude. Scalings are returned centered so they stay representable.
inline std::pair<Coupling, ScalingState> kl_project_log(
    const Matrix& log_kernel, const Vector& row_target,
    const Vector& col_target, double delta, int max_iter) {
  const Index n = log_kernel.rows();
  const Index m = log_kernel.cols();
  require(row_target.size() == n && col_target.size() == m,
          "kl_project_log: marginal sizes do not match the kernel");
  require(log_kernel.allFinite(), "kl_project_log: log kernel must be finite");
  check_probability(row_target, "kl_project_log(row)");
  check_probability(col_target, "kl_project_log(col)");
  require(delta > 0.0 && max_iter >= 1,
          "kl_project_log: bad tolerance or budget");

  const Vector log_row = row_target.array().log();
  const Vector log_col = col_target.array().log();
  Vector f = Vector::Zero(n);
  Vector g = Vector::Zero(m);
  double row_error = std::numeric_limits<double>::infinity();
  int sweeps = 0;
  note_buffer(static_cast<std::size_t>(n) * m, "kl_project_log.workspace");
  Matrix shifted(n, m);
  while (sweeps < max_iter) {
    ++sweeps;
    shifted = log_kernel.rowwise() + g.transpose();
    f = log_row - detail::log_sum_exp_rows(shifted);
    shifted = log_kernel.colwise() + f;
    g = log_col - detail::log_sum_exp_cols(shifted);
    shifted.rowwise() += g.transpose();
    row_error = (shifted.array().exp().rowwise().sum().matrix() - row_target)
                    .lpNorm<1>();
    if (row_error <= delta) break;
  }
  if (row_error > delta) {
    std::ostringstream message;
    message << "kl_project_log: marginal error " << row_error << " above "
            << delta << " after " << max_iter << " sweeps";
    throw convergence_error(message.str(), row_error);
  }

  note_buffer(static_cast<std::size_t>(n) * m, "kl_project_log.plan");
  Matrix plan = shifted.array().exp().matrix();
  // Any constant can migrate between the scalings without changing the plan;
  // centering keeps the common case exact. Potentials whose spread exceeds
  // the double exponent range are saturated: the plan is still valid, the
  // scalings then only bracket it.
  const double center = 0.5 * (f.maxCoeff() + f.minCoeff());
  Vector u =
      (f.array() - center).min(690.0).max(-690.0).exp().matrix();
  Vector v =
      (g.array() + center).min(690.0).max(-690.0).exp().matrix();
  return {Coupling{std::move(plan), row_target, col_target},
          ScalingState{std::move(u), std::move(v), sweeps}};
}

}  // namespace lrgw
