#pragma once

#include <Eigen/Cholesky>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "lrgw/lr_dykstra.hpp"
#include "lrgw/rng.hpp"
#include "lrgw/types.hpp"

namespace lrgw {

enum class DatasetKind {
  mixture,
  blobs,
  curve2d,
  curve3d,
  unit_square,
  isometric_pair
};

inline const char* to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::mixture: return "mixture";
    case DatasetKind::blobs: return "blobs";
    case DatasetKind::curve2d: return "curve2d";
    case DatasetKind::curve3d: return "curve3d";
    case DatasetKind::unit_square: return "unit_square";
    case DatasetKind::isometric_pair: return "isometric_pair";
  }
  return "unknown";
}

inline DatasetKind dataset_kind_from_string(const std::string& name) {
  if (name == "mixture") return DatasetKind::mixture;
  if (name == "blobs") return DatasetKind::blobs;
  if (name == "curve2d") return DatasetKind::curve2d;
  if (name == "curve3d") return DatasetKind::curve3d;
  if (name == "unit_square") return DatasetKind::unit_square;
  if (name == "isometric_pair") return DatasetKind::isometric_pair;
  throw input_error("unknown dataset kind '" + name + "'");
}

struct DatasetSpec {
  DatasetKind kind = DatasetKind::unit_square;
  Index n = 100;
  Index d = 2;
  int clusters = 1;
  double separation = 0.0;  // minimum pairwise centroid distance; 0 disables
  std::uint64_t seed = 0;
};

namespace detail {

// Cluster centers drawn at a fixed spatial scale; the separation constraint
// is met by rejection over whole center sets, never by rescaling, so an
// infeasible separation exhausts the budget instead of silently succeeding.
inline Matrix separated_centers(Index count, Index dim, double separation,
                                CounterRng& rng) {
  constexpr int kBudget = 1000;
  constexpr double kScale = 10.0;
  for (int attempt = 0; attempt < kBudget; ++attempt) {
    Matrix centers(count, dim);
    for (Index i = 0; i < count; ++i)
      for (Index j = 0; j < dim; ++j) centers(i, j) = kScale * rng.normal();
    bool ok = true;
    for (Index i = 0; ok && i < count; ++i)
      for (Index j = i + 1; ok && j < count; ++j)
        if ((centers.row(i) - centers.row(j)).norm() < separation) ok = false;
    if (ok) return centers;
  }
  std::ostringstream message;
  message << "dataset generation: could not place " << count
          << " centers with pairwise separation " << separation << " in "
          << kBudget << " attempts";
  throw input_error(message.str());
}

// Wishart draw with identity scale and dim+2 degrees of freedom.
inline Matrix wishart_covariance(Index dim, CounterRng& rng) {
  Matrix scatter = Matrix::Zero(dim, dim);
  for (Index draw = 0; draw < dim + 2; ++draw) {
    Vector z(dim);
    for (Index j = 0; j < dim; ++j) z(j) = rng.normal();
    scatter += z * z.transpose();
  }
  return scatter;
}

inline std::vector<Index> cluster_sizes(Index n, int clusters) {
  std::vector<Index> sizes(clusters, n / clusters);
  for (Index i = 0; i < n % clusters; ++i) ++sizes[static_cast<size_t>(i)];
  return sizes;
}

}  // namespace detail

inline PointCloud generate(const DatasetSpec& spec) {
  require(spec.n >= 1, "generate: n must be >= 1");
  CounterRng rng(spec.seed);

  switch (spec.kind) {
    case DatasetKind::unit_square: {
      Matrix points(spec.n, 2);
      for (Index i = 0; i < spec.n; ++i) {
        points(i, 0) = rng.uniform();
        points(i, 1) = rng.uniform();
      }
      return PointCloud{std::move(points)};
    }
    case DatasetKind::blobs: {
      require(spec.clusters >= 1 && spec.clusters <= spec.n,
              "generate(blobs): need 1 <= clusters <= n");
      require(spec.d >= 1, "generate(blobs): d must be >= 1");
      const Matrix centers = detail::separated_centers(
          spec.clusters, spec.d, spec.separation, rng);
      const auto sizes = detail::cluster_sizes(spec.n, spec.clusters);
      Matrix points(spec.n, spec.d);
      Index row = 0;
      for (int c = 0; c < spec.clusters; ++c)
        for (Index i = 0; i < sizes[c]; ++i, ++row)
          for (Index j = 0; j < spec.d; ++j)
            points(row, j) = centers(c, j) + rng.normal();
      return PointCloud{std::move(points)};
    }
    case DatasetKind::mixture: {
      require(spec.clusters >= 1 && spec.clusters <= spec.n,
              "generate(mixture): need 1 <= clusters <= n");
      require(spec.d >= 1, "generate(mixture): d must be >= 1");
      const Matrix centers = detail::separated_centers(
          spec.clusters, spec.d, spec.separation, rng);
      std::vector<Matrix> roots;
      roots.reserve(spec.clusters);
      for (int c = 0; c < spec.clusters; ++c) {
        Eigen::LLT<Matrix> chol(detail::wishart_covariance(spec.d, rng));
        if (chol.info() != Eigen::Success)
          throw numerical_error("generate(mixture): covariance not positive");
        roots.push_back(chol.matrixL());
      }
      const auto sizes = detail::cluster_sizes(spec.n, spec.clusters);
      Matrix points(spec.n, spec.d);
      Index row = 0;
      Vector z(spec.d);
      for (int c = 0; c < spec.clusters; ++c)
        for (Index i = 0; i < sizes[c]; ++i, ++row) {
          for (Index j = 0; j < spec.d; ++j) z(j) = rng.normal();
          points.row(row) = centers.row(c) + (roots[c] * z).transpose();
        }
      return PointCloud{std::move(points)};
    }
    case DatasetKind::curve2d: {
      // Planar spiral on an even parameter grid; the 3-D helix below uses
      // the same grid so the two curves are sampled in correspondence.
      Matrix points(spec.n, 2);
      for (Index i = 0; i < spec.n; ++i) {
        const double t =
            spec.n == 1 ? 0.0
                        : static_cast<double>(i) / static_cast<double>(spec.n - 1);
        const double radius = 0.25 + 0.75 * t;
        const double angle = 4.0 * std::numbers::pi * t;
        points(i, 0) = radius * std::cos(angle);
        points(i, 1) = radius * std::sin(angle);
      }
      return PointCloud{std::move(points)};
    }
    case DatasetKind::curve3d: {
      Matrix points(spec.n, 3);
      for (Index i = 0; i < spec.n; ++i) {
        const double t =
            spec.n == 1 ? 0.0
                        : static_cast<double>(i) / static_cast<double>(spec.n - 1);
        const double angle = 4.0 * std::numbers::pi * t;
        points(i, 0) = std::cos(angle);
        points(i, 1) = std::sin(angle);
        points(i, 2) = 2.0 * t;
      }
      return PointCloud{std::move(points)};
    }
    case DatasetKind::isometric_pair: {
      // Base shape for isometry experiments: a jittered planar spiral.
      DatasetSpec base = spec;
      base.kind = DatasetKind::curve2d;
      PointCloud cloud = generate(base);
      for (Index i = 0; i < spec.n; ++i) {
        cloud.points(i, 0) += 0.02 * rng.normal();
        cloud.points(i, 1) += 0.02 * rng.normal();
      }
      return cloud;
    }
  }
  throw input_error("generate: unhandled dataset kind");
}

struct IsometricPair {
  PointCloud source;
  PointCloud target;
  std::vector<Index> match;  // identity permutation
};

// Rigid copy of a planar cloud: rotation by `angle` plus a translation.
inline IsometricPair isometric_pair(const PointCloud& cloud, double angle,
                                    const Vector& translation) {
  check_point_cloud(cloud, "isometric_pair");
  require(cloud.dim() == 2,
          "isometric_pair: angle form requires d == 2; pass a rotation matrix "
          "for higher dimensions");
  require(translation.size() == 2, "isometric_pair: translation must be 2-D");
  Matrix rotation(2, 2);
  rotation << std::cos(angle), -std::sin(angle), std::sin(angle),
      std::cos(angle);
  IsometricPair out;
  out.source = cloud;
  out.target.points =
      (cloud.points * rotation.transpose()).rowwise() + translation.transpose();
  out.match.resize(cloud.size());
  for (Index i = 0; i < cloud.size(); ++i) out.match[i] = i;
  return out;
}

// General form: any supplied orthogonal matrix.
inline IsometricPair isometric_pair(const PointCloud& cloud,
                                    const Matrix& rotation,
                                    const Vector& translation) {
  check_point_cloud(cloud, "isometric_pair");
  const Index d = cloud.dim();
  require(rotation.rows() == d && rotation.cols() == d,
          "isometric_pair: rotation must be d x d");
  require(translation.size() == d,
          "isometric_pair: translation dimension mismatch");
  require((rotation.transpose() * rotation - Matrix::Identity(d, d))
                  .cwiseAbs()
                  .maxCoeff() <= 1e-10,
          "isometric_pair: supplied rotation is not orthogonal");
  IsometricPair out;
  out.source = cloud;
  out.target.points =
      (cloud.points * rotation.transpose()).rowwise() + translation.transpose();
  out.match.resize(cloud.size());
  for (Index i = 0; i < cloud.size(); ++i) out.match[i] = i;
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: headerless CSV, '.' radix, LF line endings, full precision
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

inline void write_matrix_csv(const std::string& path, const Matrix& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot open '" + path + "' for writing");
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j) out << ',';
      out << format_double(values(i, j));
    }
    out << '\n';
  }
  if (!out) throw input_error("write to '" + path + "' failed");
}

inline Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open '" + path + "' for reading");
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        std::ostringstream message;
        message << path << ": cannot parse '" << field << "' on line "
                << line_number;
        throw input_error(message.str());
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      std::ostringstream message;
      message << path << ": row width " << row.size() << " on line "
              << line_number << " does not match width "
              << rows.front().size();
      throw input_error(message.str());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw input_error(path + ": file holds no data");
  Matrix values(rows.size(), rows.front().size());
  for (Index i = 0; i < values.rows(); ++i)
    for (Index j = 0; j < values.cols(); ++j) values(i, j) = rows[i][j];
  return values;
}

}  // namespace detail

inline void save_point_cloud(const std::string& path, const PointCloud& cloud) {
  detail::write_matrix_csv(path, cloud.points);
}

inline PointCloud load_point_cloud(const std::string& path) {
  PointCloud cloud{detail::read_matrix_csv(path)};
  check_point_cloud(cloud, path.c_str());
  return cloud;
}

inline void save_coupling(const std::string& path, const Coupling& coupling) {
  detail::write_matrix_csv(path, coupling.plan);
}

inline Coupling load_coupling(const std::string& path) {
  Matrix plan = detail::read_matrix_csv(path);
  if ((plan.array() < 0.0).any())
    throw validation_error(path + ": coupling has negative entries");
  Vector row = plan.rowwise().sum();
  Vector col = plan.colwise().sum();
  return Coupling{std::move(plan), std::move(row), std::move(col)};
}

inline void save_low_rank(const std::string& prefix,
                          const LowRankCoupling& triple) {
  detail::write_matrix_csv(prefix + ".Q.csv", triple.source_factor);
  detail::write_matrix_csv(prefix + ".R.csv", triple.target_factor);
  detail::write_matrix_csv(prefix + ".g.csv", triple.inner_weights);
}

// Reload a factored plan and re-check its invariants against the floor and
// tolerance it was solved with.
inline LowRankCoupling load_low_rank(const std::string& prefix, double alpha,
                                     double tolerance) {
  LowRankCoupling triple;
  triple.source_factor = detail::read_matrix_csv(prefix + ".Q.csv");
  triple.target_factor = detail::read_matrix_csv(prefix + ".R.csv");
  Matrix weights = detail::read_matrix_csv(prefix + ".g.csv");
  require(weights.cols() == 1, prefix + ".g.csv: expected a single column");
  triple.inner_weights = weights.col(0);
  require(triple.source_factor.cols() == triple.inner_weights.size() &&
              triple.target_factor.cols() == triple.inner_weights.size(),
          prefix + ": factor ranks disagree with the weight vector");

  const Vector row = triple.source_factor.rowwise().sum();
  const Vector col = triple.target_factor.rowwise().sum();
  const FeasibilityResiduals residuals =
      feasibility_residuals(triple, row, col, alpha);
  // Row residuals vanish by construction here; the load-time check covers
  // the shared inner marginal, the weight floor, sum and signs.
  if (residuals.worst() > tolerance) {
    std::ostringstream message;
    message << prefix << ": loaded triple violates its invariants "
            << "(inner marginal residuals " << residuals.source_cols << ", "
            << residuals.target_cols << "; weight sum error "
            << residuals.weight_sum << "; floor violation "
            << residuals.weight_floor << "; negativity "
            << residuals.negativity << "; tolerance " << tolerance << ")";
    throw validation_error(message.str());
  }
  return triple;
}

// Report CSV: one row per outer iteration, `delta` left empty when the
// solver did not evaluate the criterion.
inline void save_report(const std::string& path, const SolveReport& report,
                        bool zero_elapsed = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot open '" + path + "' for writing");
  out << "iter,loss,delta,inner_iters,elapsed_ms\n";
  for (std::size_t i = 0; i < report.losses.size(); ++i) {
    out << i << ',' << detail::format_double(report.losses[i]) << ',';
    if (i < report.deltas.size())
      out << detail::format_double(report.deltas[i]);
    out << ',' << (i < report.inner_iterations.size()
                       ? report.inner_iterations[i]
                       : 0)
        << ',';
    const double elapsed =
        zero_elapsed ? 0.0
                     : (i < report.elapsed_ms.size() ? report.elapsed_ms[i]
                                                     : 0.0);
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.3f", elapsed);
    out << buffer << '\n';
  }
  if (!out) throw input_error("write to '" + path + "' failed");
}

}  // namespace lrgw
