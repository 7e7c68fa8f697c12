#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <variant>
#include <vector>

#include "lrgw/alloc_stats.hpp"
#include "lrgw/rng.hpp"
#include "lrgw/types.hpp"

namespace lrgw {

// ---------------------------------------------------------------------------
// Dense and exactly factored costs
// ---------------------------------------------------------------------------

// Pairwise cost within one family: values[i][j] = ||x_i - x_j||^q.
inline DenseCost dense_cost(const PointCloud& cloud, double exponent) {
  check_point_cloud(cloud, "dense_cost");
  require(exponent > 0.0, "dense_cost: exponent must be positive");
  const Index n = cloud.size();
  note_buffer(static_cast<std::size_t>(n) * n, "dense_cost.values");
  Matrix values = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double dist = (cloud.points.row(i) - cloud.points.row(j)).norm();
      const double value = std::pow(dist, exponent);
      values(i, j) = value;
      values(j, i) = value;
    }
  }
  return DenseCost{std::move(values)};
}

// Exact rank-(d+2) factorization of the squared Euclidean distance matrix:
// A = z 1^T + 1 z^T - 2 X X^T with z the row-wise squared norms.
inline FactoredCost squared_euclidean_factors(const PointCloud& cloud) {
  check_point_cloud(cloud, "squared_euclidean_factors");
  const Index n = cloud.size();
  const Index d = cloud.dim();
  const Vector sq_norms = cloud.points.rowwise().squaredNorm();
  const double root2 = std::sqrt(2.0);

  note_buffer(static_cast<std::size_t>(n) * (d + 2) * 2, "sqeuclidean.factors");
  Matrix left(n, d + 2);
  left.col(0) = sq_norms;
  left.col(1).setOnes();
  left.rightCols(d) = -root2 * cloud.points;

  Matrix right(n, d + 2);
  right.col(0).setOnes();
  right.col(1) = sq_norms;
  right.rightCols(d) = root2 * cloud.points;

  return FactoredCost{std::move(left), std::move(right), d + 2};
}

// Factors of the elementwise square: with rows u_i of `left` and v_j of
// `right`, <u,v>^2 = <vec(u u^T), vec(v v^T)>, so widening each row to its
// flattened outer product squares the product matrix entrywise.
inline FactoredCost hadamard_square_factors(const FactoredCost& cost) {
  const Index k = cost.left.cols();
  require(k == cost.right.cols(),
          "hadamard_square_factors: factor widths differ");
  const Index n = cost.left.rows();
  const Index m = cost.right.rows();

  note_buffer(static_cast<std::size_t>((n + m)) * k * k, "hadamard.factors");
  Matrix wide_left(n, k * k);
  Matrix wide_right(m, k * k);
  for (Index i = 0; i < n; ++i)
    for (Index a = 0; a < k; ++a)
      for (Index b = 0; b < k; ++b)
        wide_left(i, a * k + b) = cost.left(i, a) * cost.left(i, b);
  for (Index j = 0; j < m; ++j)
    for (Index a = 0; a < k; ++a)
      for (Index b = 0; b < k; ++b)
        wide_right(j, a * k + b) = cost.right(j, a) * cost.right(j, b);
  return FactoredCost{std::move(wide_left), std::move(wide_right), k * k};
}

// ---------------------------------------------------------------------------
// Cost application without densifying
// ---------------------------------------------------------------------------

inline Matrix cost_apply(const DenseCost& cost, const Matrix& operand) {
  require(cost.values.cols() == operand.rows(),
          "cost_apply: inner dimensions do not agree");
  note_buffer(static_cast<std::size_t>(cost.values.rows()) * operand.cols(),
              "cost_apply.dense");
  return cost.values * operand;
}

inline Matrix cost_apply(const FactoredCost& cost, const Matrix& operand) {
  require(cost.right.rows() == operand.rows(),
          "cost_apply: inner dimensions do not agree");
  note_buffer(static_cast<std::size_t>(cost.right.cols()) * operand.cols(),
              "cost_apply.inner");
  Matrix inner = cost.right.transpose() * operand;  // k x cols
  note_buffer(static_cast<std::size_t>(cost.left.rows()) * operand.cols(),
              "cost_apply.outer");
  return cost.left * inner;
}

// Uniform view over the two cost representations, so solvers can be written
// once. Applying a factored cost never touches an n x m buffer.
class CostView {
 public:
  CostView(const DenseCost& dense) : ref_(&dense) {}        // NOLINT
  CostView(const FactoredCost& factored) : ref_(&factored) {}  // NOLINT

  bool factored() const { return std::holds_alternative<const FactoredCost*>(ref_); }

  const FactoredCost& factored_cost() const {
    return *std::get<const FactoredCost*>(ref_);
  }

  Index rows() const {
    if (auto* d = std::get_if<const DenseCost*>(&ref_)) return (*d)->values.rows();
    return std::get<const FactoredCost*>(ref_)->left.rows();
  }
  Index cols() const {
    if (auto* d = std::get_if<const DenseCost*>(&ref_)) return (*d)->values.cols();
    return std::get<const FactoredCost*>(ref_)->right.rows();
  }

  Matrix apply(const Matrix& operand) const {
    if (auto* d = std::get_if<const DenseCost*>(&ref_))
      return cost_apply(**d, operand);
    return cost_apply(*std::get<const FactoredCost*>(ref_), operand);
  }

  Matrix apply_transpose(const Matrix& operand) const {
    if (auto* d = std::get_if<const DenseCost*>(&ref_)) {
      require((*d)->values.rows() == operand.rows(),
              "cost_apply: inner dimensions do not agree");
      return (*d)->values.transpose() * operand;
    }
    const auto* f = std::get<const FactoredCost*>(ref_);
    require(f->left.rows() == operand.rows(),
            "cost_apply: inner dimensions do not agree");
    Matrix inner = f->left.transpose() * operand;
    return f->right * inner;
  }

  // (cost^{.2}) * vec, the elementwise-squared cost applied to a vector.
  // Dense representations square in place; factored ones go through the
  // flattened outer-product widening, in O(n k^2) without any n x n buffer.
  Vector hadamard_square_apply(const Vector& vec) const {
    if (auto* d = std::get_if<const DenseCost*>(&ref_)) {
      require((*d)->values.cols() == vec.size(),
              "hadamard_square_apply: dimension mismatch");
      note_buffer(
          static_cast<std::size_t>((*d)->values.rows()) * (*d)->values.cols(),
          "hadamard.dense_square");
      return ((*d)->values.array().square().matrix()) * vec;
    }
    const auto* f = std::get<const FactoredCost*>(ref_);
    require(f->right.rows() == vec.size(),
            "hadamard_square_apply: dimension mismatch");
    FactoredCost squared = hadamard_square_factors(*f);
    Vector inner = squared.right.transpose() * vec;
    Vector result = squared.left * inner;
    // Mathematically >= 0 entrywise; rounding may leave dust below zero.
    return result.cwiseMax(0.0);
  }

  Matrix densify() const {
    if (auto* d = std::get_if<const DenseCost*>(&ref_)) return (*d)->values;
    const auto* f = std::get<const FactoredCost*>(ref_);
    note_buffer(static_cast<std::size_t>(f->left.rows()) * f->right.rows(),
                "cost.densify");
    return f->left * f->right.transpose();
  }

 private:
  std::variant<const DenseCost*, const FactoredCost*> ref_;
};

// Largest singular value via power iteration on cost^T * cost, applied
// through the factored form when available.
inline double spectral_norm(const CostView& cost, double rel_tol = 1e-6,
                            int max_iter = 1000, std::uint64_t seed = 7) {
  const Index n = cost.cols();
  CounterRng rng(seed);
  Vector x(n);
  for (Index i = 0; i < n; ++i) x(i) = rng.normal();
  double norm = x.norm();
  if (norm == 0.0) x.setConstant(1.0);
  x /= x.norm();

  double sigma_sq = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector y = cost.apply_transpose(cost.apply(x));
    const double next = y.norm();
    if (next == 0.0) return 0.0;
    y /= next;
    if (std::abs(next - sigma_sq) <= rel_tol * next && it > 2) {
      sigma_sq = next;
      break;
    }
    sigma_sq = next;
    x.swap(y);
  }
  return std::sqrt(sigma_sq);
}

// ---------------------------------------------------------------------------
// Shortest-path cost on a k-NN graph
// ---------------------------------------------------------------------------

namespace detail {

// Rectangular cost slice between two families, entries ||x_i - y_j||^q.
inline Matrix pairwise_cost(const Matrix& xs, const Matrix& ys,
                            double exponent) {
  Matrix out(xs.rows(), ys.rows());
  for (Index i = 0; i < xs.rows(); ++i)
    for (Index j = 0; j < ys.rows(); ++j)
      out(i, j) = std::pow((xs.row(i) - ys.row(j)).norm(), exponent);
  return out;
}

}  // namespace detail

// All-pairs shortest-path distances over the union-symmetrized k-NN graph
// with Euclidean edge weights. Neighbor ties break toward the lower index.
inline DenseCost knn_shortest_path_cost(const PointCloud& cloud, int k) {
  check_point_cloud(cloud, "knn_shortest_path_cost");
  const Index n = cloud.size();
  require(k >= 1 && k < n, "knn_shortest_path_cost: need 1 <= k < n");

  std::vector<std::vector<std::pair<Index, double>>> adjacency(n);
  std::vector<std::pair<double, Index>> order(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j)
      order[j] = {(cloud.points.row(i) - cloud.points.row(j)).norm(), j};
    order[i].first = std::numeric_limits<double>::infinity();  // no self loop
    std::sort(order.begin(), order.end());
    for (int t = 0; t < k; ++t) {
      const auto [dist, j] = order[t];
      adjacency[i].emplace_back(j, dist);
      adjacency[j].emplace_back(i, dist);  // union symmetrization
    }
  }

  note_buffer(static_cast<std::size_t>(n) * n, "knn_sp.values");
  Matrix values = Matrix::Constant(n, n, std::numeric_limits<double>::infinity());
  using QueueEntry = std::pair<double, Index>;
  for (Index source = 0; source < n; ++source) {
    std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>> queue;
    values(source, source) = 0.0;
    queue.emplace(0.0, source);
    while (!queue.empty()) {
      const auto [dist, node] = queue.top();
      queue.pop();
      if (dist > values(source, node)) continue;
      for (const auto& [next, weight] : adjacency[node]) {
        const double candidate = dist + weight;
        if (candidate < values(source, next)) {
          values(source, next) = candidate;
          queue.emplace(candidate, next);
        }
      }
    }
  }

  if (!values.allFinite()) {
    // Name the components so the caller can see what fell apart.
    std::vector<int> component(n, -1);
    int count = 0;
    for (Index i = 0; i < n; ++i) {
      if (component[i] >= 0) continue;
      std::vector<Index> stack{i};
      component[i] = count;
      while (!stack.empty()) {
        Index node = stack.back();
        stack.pop_back();
        for (const auto& [next, weight] : adjacency[node]) {
          (void)weight;
          if (component[next] < 0) {
            component[next] = count;
            stack.push_back(next);
          }
        }
      }
      ++count;
    }
    std::vector<int> sizes(count, 0);
    for (Index i = 0; i < n; ++i) ++sizes[component[i]];
    std::ostringstream message;
    message << "knn_shortest_path_cost: graph is disconnected (" << count
            << " components, sizes";
    for (int s : sizes) message << ' ' << s;
    message << "); increase k";
    throw input_error(message.str());
  }
  return DenseCost{std::move(values)};
}

// ---------------------------------------------------------------------------
// Randomized low-rank sketch of a distance matrix
// ---------------------------------------------------------------------------

// Sub-quadratic sketch of the n x m matrix with entries ||x_i - y_j||^q:
// row sampling biased by a triangle-inequality surrogate of the row norms,
// column sampling by exact column norms of the row sketch, a small SVD, then
// a sampled least-squares fit of the left factor. Deterministic given the
// seed. `sample_count` of 0 means 10 * target_rank.
inline FactoredCost lr_distance_approx(const PointCloud& x_cloud,
                                       const PointCloud& y_cloud,
                                       Index target_rank, Index sample_count,
                                       std::uint64_t seed,
                                       double exponent = 2.0) {
  check_point_cloud(x_cloud, "lr_distance_approx");
  check_point_cloud(y_cloud, "lr_distance_approx");
  require(target_rank >= 1, "lr_distance_approx: target_rank must be >= 1");
  if (sample_count == 0) sample_count = 10 * target_rank;
  require(sample_count >= target_rank,
          "lr_distance_approx: sample_count must be >= target_rank");

  const Index n = x_cloud.size();
  const Index m = y_cloud.size();
  const Index t = sample_count;
  CounterRng rng(seed);

  const auto entry = [&](Index i, Index j) {
    return std::pow((x_cloud.points.row(i) - y_cloud.points.row(j)).norm(),
                    exponent);
  };

  // Row distribution: entry(i, j*)^2 + entry(i*, j*)^2 + mean_j entry(i*, j)^2,
  // smoothed so duplicated points cannot produce a zero distribution.
  const Index anchor_row = static_cast<Index>(rng.uniform_index(n));
  const Index anchor_col = static_cast<Index>(rng.uniform_index(m));
  double anchor_mean = 0.0;
  for (Index j = 0; j < m; ++j) {
    const double e = entry(anchor_row, j);
    anchor_mean += e * e;
  }
  anchor_mean /= static_cast<double>(m);
  const double anchor_term = [&] {
    const double e = entry(anchor_row, anchor_col);
    return e * e;
  }();

  std::vector<double> row_probs(n);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double e = entry(i, anchor_col);
    row_probs[i] = e * e + anchor_term + anchor_mean + 1e-12;
    total += row_probs[i];
  }
  if (!std::isfinite(total) || total <= 0.0)
    throw input_error("lr_distance_approx: degenerate sampling distribution");
  for (double& p : row_probs) p /= total;

  std::vector<Index> rows(t);
  for (Index s = 0; s < t; ++s)
    rows[s] = static_cast<Index>(rng.discrete(row_probs));

  // Row sketch, rescaled by sqrt(t * p_i).
  note_buffer(static_cast<std::size_t>(t) * m, "lr_distance.row_sketch");
  Matrix row_sketch(t, m);
  for (Index s = 0; s < t; ++s) {
    const double scale =
        1.0 / std::sqrt(static_cast<double>(t) * row_probs[rows[s]]);
    for (Index j = 0; j < m; ++j)
      row_sketch(s, j) = entry(rows[s], j) * scale;
  }

  const double sketch_norm_sq = row_sketch.squaredNorm();
  if (sketch_norm_sq == 0.0) {
    // The matrix itself is zero; its best factorization is zero.
    return FactoredCost{Matrix::Zero(n, target_rank),
                        Matrix::Zero(m, target_rank), target_rank};
  }

  // Column distribution from the sketch's exact column norms.
  std::vector<double> col_probs(m);
  double col_total = 0.0;
  for (Index j = 0; j < m; ++j) {
    col_probs[j] = row_sketch.col(j).squaredNorm() + 1e-12;
    col_total += col_probs[j];
  }
  for (double& p : col_probs) p /= col_total;

  Matrix core(t, t);
  for (Index s = 0; s < t; ++s) {
    const Index j = static_cast<Index>(rng.discrete(col_probs));
    const double scale =
        1.0 / std::sqrt(static_cast<double>(t) * col_probs[j]);
    core.col(s) = row_sketch.col(j) * scale;
  }

  Eigen::JacobiSVD<Matrix> svd(core, Eigen::ComputeThinU);
  Matrix basis = svd.matrixU().leftCols(std::min(target_rank, t));  // t x r

  // Right factor: lift the core basis through the row sketch. The scalar
  // normalization is absorbed by the regression below, it only conditions it.
  Matrix right = row_sketch.transpose() * basis;  // m x r
  const double basis_scale = (core.transpose() * basis).norm();
  if (basis_scale > 0.0) right /= basis_scale;

  // Left factor by least squares against t uniformly sampled columns,
  // written as the whitened normal equations of the pseudo-code.
  Eigen::SelfAdjointEigenSolver<Matrix> gram_eig(right.transpose() * right);
  const Vector gram_values = gram_eig.eigenvalues();
  const double gram_max = gram_values.maxCoeff();
  if (!(gram_max > 0.0) ||
      gram_values.minCoeff() <= gram_max * 1e-13) {
    std::ostringstream message;
    message << "lr_distance_approx: singular Gram matrix in the regression "
               "step (eigenvalue range ["
            << gram_values.minCoeff() << ", " << gram_max
            << "]); lower target_rank or raise sample_count";
    throw numerical_error(message.str());
  }
  Matrix whitener = gram_eig.eigenvectors();  // r x r
  for (Index c = 0; c < whitener.cols(); ++c)
    whitener.col(c) /= std::sqrt(gram_values(c));

  std::vector<Index> cols(t);
  for (Index s = 0; s < t; ++s)
    cols[s] = static_cast<Index>(rng.uniform_index(m));

  note_buffer(static_cast<std::size_t>(n) * t, "lr_distance.col_sample");
  Matrix sampled_cols(n, t);  // entries / sqrt(t)
  Matrix sampled_right(t, whitener.cols());
  const double inv_root_t = 1.0 / std::sqrt(static_cast<double>(t));
  for (Index s = 0; s < t; ++s) {
    for (Index i = 0; i < n; ++i)
      sampled_cols(i, s) = entry(i, cols[s]) * inv_root_t;
    sampled_right.row(s) = right.row(cols[s]) * inv_root_t;
  }

  Matrix projected = sampled_right * whitener;              // t x r
  Matrix small_gram = projected.transpose() * projected;    // r x r
  Eigen::LDLT<Matrix> small_solver(small_gram);
  if (small_solver.info() != Eigen::Success ||
      !small_gram.allFinite())
    throw numerical_error(
        "lr_distance_approx: singular sampled Gram matrix; raise sample_count");
  Matrix fitted =
      small_solver.solve(projected.transpose() * sampled_cols.transpose());
  Matrix left = (fitted.transpose() * whitener.transpose());  // n x r

  return FactoredCost{std::move(left), std::move(right), target_rank};
}

}  // namespace lrgw
