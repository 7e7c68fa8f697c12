#include <catch2/catch_amalgamated.hpp>

#include "lrgw/costs.hpp"
#include "lrgw/rng.hpp"

using namespace lrgw;

namespace {

PointCloud random_cloud(Index n, Index d, std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix points(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) points(i, j) = rng.normal();
  return PointCloud{std::move(points)};
}

// Independent oracle: the O(n^2 d) double loop, no linear algebra tricks.
Matrix brute_force_cost(const PointCloud& cloud, double exponent) {
  const Index n = cloud.size();
  Matrix out(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      double sq = 0.0;
      for (Index k = 0; k < cloud.dim(); ++k) {
        const double gap = cloud.points(i, k) - cloud.points(j, k);
        sq += gap * gap;
      }
      out(i, j) = std::pow(std::sqrt(sq), exponent);
    }
  return out;
}

}  // namespace

TEST_CASE("dense_cost on the unit segment") {
  PointCloud cloud{(Matrix(2, 1) << 0.0, 1.0).finished()};
  const DenseCost cost = dense_cost(cloud, 2.0);
  CHECK(cost.values(0, 0) == 0.0);
  CHECK(cost.values(0, 1) == 1.0);
  CHECK(cost.values(1, 0) == 1.0);
  CHECK(cost.values(1, 1) == 0.0);
}

TEST_CASE("dense_cost on coincident points") {
  PointCloud cloud{Matrix::Zero(2, 1)};
  const DenseCost cost = dense_cost(cloud, 1.0);
  CHECK(cost.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dense_cost matches the brute-force pairwise loop") {
  const PointCloud cloud = random_cloud(5, 3, 11);
  const DenseCost cost = dense_cost(cloud, 2.0);
  const Matrix reference = brute_force_cost(cloud, 2.0);
  CHECK((cost.values - reference).cwiseAbs().maxCoeff() <=
        1e-12 * (1.0 + reference.cwiseAbs().maxCoeff()));
}

TEST_CASE("dense_cost rejects non-finite input") {
  Matrix points(2, 1);
  points << 0.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(dense_cost(PointCloud{points}, 2.0), input_error);
}

TEST_CASE("squared_euclidean_factors densifies to dense_cost") {
  SECTION("unit segment") {
    PointCloud cloud{(Matrix(2, 1) << 0.0, 1.0).finished()};
    const FactoredCost factors = squared_euclidean_factors(cloud);
    CHECK(factors.rank_hint == 3);
    const Matrix dense = factors.left * factors.right.transpose();
    CHECK(dense(0, 1) == Catch::Approx(1.0).margin(1e-12));
    CHECK(dense(0, 0) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("single point") {
    PointCloud cloud{(Matrix(1, 1) << 3.25).finished()};
    const FactoredCost factors = squared_euclidean_factors(cloud);
    const Matrix dense = factors.left * factors.right.transpose();
    CHECK(dense(0, 0) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("random clouds, entrywise to 1e-10 relative") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const PointCloud cloud = random_cloud(6, 2, seed);
      const FactoredCost factors = squared_euclidean_factors(cloud);
      const Matrix dense = factors.left * factors.right.transpose();
      const Matrix reference = dense_cost(cloud, 2.0).values;
      const double scale = 1.0 + reference.cwiseAbs().maxCoeff();
      CHECK((dense - reference).cwiseAbs().maxCoeff() <= 1e-10 * scale);
    }
  }
}

TEST_CASE("hadamard_square_factors squares the product entrywise") {
  SECTION("rank one is a scalar square") {
    Matrix column(2, 1);
    column << 1.0, 2.0;
    const FactoredCost squared =
        hadamard_square_factors(FactoredCost{column, column, 1});
    const Matrix dense = squared.left * squared.right.transpose();
    CHECK(dense(0, 0) == Catch::Approx(1.0));
    CHECK(dense(0, 1) == Catch::Approx(4.0));
    CHECK(dense(1, 1) == Catch::Approx(16.0));
  }
  SECTION("zero matrix stays zero") {
    const FactoredCost squared = hadamard_square_factors(
        FactoredCost{Matrix::Zero(3, 2), Matrix::Zero(3, 2), 2});
    CHECK((squared.left * squared.right.transpose()).cwiseAbs().maxCoeff() ==
          0.0);
  }
  SECTION("random factors against the elementwise-square oracle") {
    CounterRng rng(5);
    for (int rep = 0; rep < 4; ++rep) {
      Matrix left(5, 2), right(5, 2);
      for (Index i = 0; i < 5; ++i)
        for (Index j = 0; j < 2; ++j) {
          left(i, j) = rng.normal();
          right(i, j) = rng.normal();
        }
      const FactoredCost squared =
          hadamard_square_factors(FactoredCost{left, right, 2});
      const Matrix expected =
          (left * right.transpose()).array().square().matrix();
      const Matrix actual = squared.left * squared.right.transpose();
      const double scale = 1.0 + expected.cwiseAbs().maxCoeff();
      CHECK((actual - expected).cwiseAbs().maxCoeff() <= 1e-10 * scale);
    }
  }
}

TEST_CASE("hadamard square factor property over sizes") {
  CounterRng rng(17);
  for (Index k = 1; k <= 4; ++k) {
    const Index n = 4 + 4 * k;
    Matrix left(n, k), right(n, k);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < k; ++j) {
        left(i, j) = rng.uniform(-2.0, 2.0);
        right(i, j) = rng.uniform(-2.0, 2.0);
      }
    const FactoredCost squared =
        hadamard_square_factors(FactoredCost{left, right, k});
    const Matrix expected =
        (left * right.transpose()).array().square().matrix();
    const Matrix actual = squared.left * squared.right.transpose();
    CHECK((actual - expected).cwiseAbs().maxCoeff() <=
          1e-10 * (1.0 + expected.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("cost_apply") {
  SECTION("dense swap cost") {
    DenseCost cost{(Matrix(2, 2) << 0, 1, 1, 0).finished()};
    Matrix operand(2, 1);
    operand << 1.0, 0.0;
    const Matrix result = cost_apply(cost, operand);
    CHECK(result(0, 0) == 0.0);
    CHECK(result(1, 0) == 1.0);
  }
  SECTION("zero factored cost annihilates") {
    FactoredCost cost{Matrix::Zero(3, 2), Matrix::Zero(3, 2), 2};
    const Matrix result = cost_apply(cost, Matrix::Random(3, 4));
    CHECK(result.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("factored apply equals densify-then-multiply") {
    CounterRng rng(23);
    Matrix left(6, 3), right(6, 3), operand(6, 2);
    for (Index i = 0; i < 6; ++i) {
      for (Index j = 0; j < 3; ++j) {
        left(i, j) = rng.normal();
        right(i, j) = rng.normal();
      }
      operand(i, 0) = rng.normal();
      operand(i, 1) = rng.normal();
    }
    FactoredCost cost{left, right, 3};
    const Matrix expected = (left * right.transpose()) * operand;
    const Matrix actual = cost_apply(cost, operand);
    CHECK((actual - expected).cwiseAbs().maxCoeff() <= 1e-12 *
          (1.0 + expected.cwiseAbs().maxCoeff()));
  }
  SECTION("dimension mismatch is an input error") {
    DenseCost cost{Matrix::Zero(2, 2)};
    CHECK_THROWS_AS(cost_apply(cost, Matrix::Zero(3, 1)), input_error);
  }
}

TEST_CASE("factored cost_apply stays below the dense allocation scale") {
  const Index n = 1000;
  const PointCloud cloud = random_cloud(n, 2, 3);
  const FactoredCost factors = squared_euclidean_factors(cloud);
  const AllocationStats stats = allocation_scope([&] {
    Matrix operand = Matrix::Ones(n, 1);
    const Matrix result = cost_apply(factors, operand);
    CHECK(result.rows() == n);
  });
  CHECK(stats.peak_buffer_elements < 100000);
  CHECK(stats.peak_buffer_elements >= static_cast<std::size_t>(n));
}

TEST_CASE("knn shortest path cost") {
  SECTION("collinear chain") {
    PointCloud cloud{(Matrix(3, 1) << 0.0, 1.0, 2.0).finished()};
    const DenseCost cost = knn_shortest_path_cost(cloud, 2);
    CHECK(cost.values(0, 2) == Catch::Approx(2.0));
    CHECK(cost.values(0, 1) == Catch::Approx(1.0));
  }
  SECTION("two points, one edge") {
    PointCloud cloud{(Matrix(2, 2) << 0.0, 0.0, 3.0, 4.0).finished()};
    const DenseCost cost = knn_shortest_path_cost(cloud, 1);
    CHECK(cost.values(0, 1) == Catch::Approx(5.0));
  }
  SECTION("circle matches an independent Floyd-Warshall") {
    const Index n = 10;
    Matrix points(n, 2);
    for (Index i = 0; i < n; ++i) {
      const double angle = 2.0 * std::numbers::pi * i / n;
      points(i, 0) = std::cos(angle);
      points(i, 1) = std::sin(angle);
    }
    PointCloud cloud{points};
    const DenseCost cost = knn_shortest_path_cost(cloud, 2);

    // Oracle: rebuild the same symmetrized graph, then Floyd-Warshall.
    Matrix direct(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        direct(i, j) = (points.row(i) - points.row(j)).norm();
    Matrix graph =
        Matrix::Constant(n, n, std::numeric_limits<double>::infinity());
    for (Index i = 0; i < n; ++i) {
      graph(i, i) = 0.0;
      std::vector<std::pair<double, Index>> order;
      for (Index j = 0; j < n; ++j)
        if (j != i) order.emplace_back(direct(i, j), j);
      std::sort(order.begin(), order.end());
      for (int t = 0; t < 2; ++t) {
        graph(i, order[t].second) = order[t].first;
        graph(order[t].second, i) = order[t].first;
      }
    }
    for (Index k = 0; k < n; ++k)
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
          graph(i, j) = std::min(graph(i, j), graph(i, k) + graph(k, j));

    CHECK((cost.values - graph).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SECTION("triangle inequality on sampled triples") {
    const PointCloud cloud = random_cloud(20, 2, 9);
    const DenseCost cost = knn_shortest_path_cost(cloud, 3);
    CounterRng rng(2);
    for (int rep = 0; rep < 200; ++rep) {
      const Index i = static_cast<Index>(rng.uniform_index(20));
      const Index j = static_cast<Index>(rng.uniform_index(20));
      const Index k = static_cast<Index>(rng.uniform_index(20));
      CHECK(cost.values(i, j) <=
            cost.values(i, k) + cost.values(k, j) + 1e-12);
    }
  }
  SECTION("disconnected graph names the components") {
    Matrix points(4, 1);
    points << 0.0, 0.1, 100.0, 100.1;
    CHECK_THROWS_MATCHES(
        knn_shortest_path_cost(PointCloud{points}, 1), input_error,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("2 components")));
  }
}

TEST_CASE("lr_distance_approx") {
  SECTION("single point approximates the zero matrix") {
    PointCloud point{Matrix::Zero(1, 1)};
    const FactoredCost approx = lr_distance_approx(point, point, 1, 4, 0);
    CHECK((approx.left * approx.right.transpose()).cwiseAbs().maxCoeff() ==
          0.0);
  }
  SECTION("exact-rank grid recovers the squared-distance matrix") {
    Matrix points(60, 2);
    for (Index i = 0; i < 60; ++i) {
      points(i, 0) = static_cast<double>(i % 10);
      points(i, 1) = static_cast<double>(i / 10);
    }
    PointCloud cloud{points};
    const Matrix exact = dense_cost(cloud, 2.0).values;
    int good = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const FactoredCost approx = lr_distance_approx(cloud, cloud, 4, 40, seed);
      const double rel_error =
          (approx.left * approx.right.transpose() - exact).norm() /
          exact.norm();
      if (rel_error <= 0.1) ++good;
    }
    CHECK(good >= 9);
  }
  SECTION("two seeds complete and differ") {
    const PointCloud cloud = random_cloud(40, 3, 77);
    const Matrix exact = dense_cost(cloud, 2.0).values;
    const FactoredCost first = lr_distance_approx(cloud, cloud, 5, 50, 1);
    const FactoredCost second = lr_distance_approx(cloud, cloud, 5, 50, 2);
    const double err1 =
        (first.left * first.right.transpose() - exact).norm() / exact.norm();
    const double err2 =
        (second.left * second.right.transpose() - exact).norm() / exact.norm();
    CHECK(std::isfinite(err1));
    CHECK(std::isfinite(err2));
    CHECK(err1 != err2);
  }
  SECTION("deterministic given the seed") {
    const PointCloud cloud = random_cloud(20, 2, 5);
    const FactoredCost a = lr_distance_approx(cloud, cloud, 4, 30, 42);
    const FactoredCost b = lr_distance_approx(cloud, cloud, 4, 30, 42);
    CHECK((a.left - b.left).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.right - b.right).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("spectral norm via power iteration") {
  Matrix values(2, 2);
  values << 0.0, 3.0, 3.0, 0.0;
  DenseCost cost{values};
  CHECK(spectral_norm(cost) == Catch::Approx(3.0).epsilon(1e-5));
}
