#include <catch2/catch_amalgamated.hpp>

#include "lrgw/costs.hpp"
#include "lrgw/oracle_metrics.hpp"
#include "lrgw/rng.hpp"

using namespace lrgw;

namespace {

Coupling product_coupling(const Vector& a, const Vector& b) {
  return Coupling{a * b.transpose(), a, b};
}

Vector random_simplex(Index n, CounterRng& rng) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng.uniform(0.1, 1.0);
  return v / v.sum();
}

}  // namespace

TEST_CASE("gw_quadruple_sum vanishes on self-alignment") {
  CounterRng rng(3);
  const Vector a = random_simplex(4, rng);
  Matrix values(4, 4);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j)
      values(i, j) = i == j ? 0.0 : 1.0 + ((i + j) % 3);
  values = ((values + values.transpose()) / 2.0).eval();
  DenseCost cost{values};
  Coupling diag{Matrix(a.asDiagonal()), a, a};
  CHECK(gw_quadruple_sum(cost, cost, diag) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("gw_quadruple_sum on the hand-expanded 2x1 instance") {
  DenseCost a_cost{(Matrix(2, 2) << 0, 1, 1, 0).finished()};
  DenseCost b_cost{Matrix::Zero(1, 1)};
  Coupling plan{Matrix::Constant(2, 1, 0.5), Vector::Constant(2, 0.5),
                Vector::Constant(1, 1.0)};
  // Only the i != i' terms survive and each contributes (1-0)^2 * 1/4.
  CHECK(gw_quadruple_sum(a_cost, b_cost, plan) == Catch::Approx(0.5));
}

TEST_CASE("gw_quadruple_sum refuses past the scale cap") {
  DenseCost big{Matrix::Zero(101, 101)};
  Coupling plan{Matrix::Constant(101, 101, 1.0 / (101.0 * 101.0)),
                uniform_weights(101), uniform_weights(101)};
  CHECK_THROWS_AS(gw_quadruple_sum(big, big, plan), input_error);
}

TEST_CASE("gw_quadruple_sum is invariant under simultaneous relabeling") {
  CounterRng rng(11);
  const Index n = 5, m = 4;
  PointCloud cx{Matrix::Zero(n, 2)}, cy{Matrix::Zero(m, 2)};
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < 2; ++j) cx.points(i, j) = rng.normal();
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < 2; ++j) cy.points(i, j) = rng.normal();
  DenseCost a_cost = dense_cost(cx, 2.0);
  DenseCost b_cost = dense_cost(cy, 2.0);
  const Vector a = random_simplex(n, rng);
  const Vector b = random_simplex(m, rng);
  Coupling plan = product_coupling(a, b);
  const double base = gw_quadruple_sum(a_cost, b_cost, plan);

  // Relabel the source space with a fixed permutation.
  std::vector<Index> perm{2, 0, 4, 1, 3};
  Matrix pa(n, n);
  pa.setZero();
  for (Index i = 0; i < n; ++i) pa(i, perm[i]) = 1.0;
  DenseCost a_perm{pa * a_cost.values * pa.transpose()};
  Coupling plan_perm{pa * plan.plan, pa * a, b};
  CHECK(gw_quadruple_sum(a_perm, b_cost, plan_perm) ==
        Catch::Approx(base).epsilon(1e-12));
}

TEST_CASE("generalized_kl") {
  SECTION("x equals y gives minus the mass") {
    Vector x(3);
    x << 0.2, 0.5, 0.3;
    CHECK(generalized_kl(x, x) == Catch::Approx(-1.0));
  }
  SECTION("zero first argument gives zero") {
    Vector x = Vector::Zero(4);
    Vector y = Vector::Constant(4, 0.7);
    CHECK(generalized_kl(x, y) == 0.0);
  }
  SECTION("matches a compensated-summation oracle") {
    CounterRng rng(7);
    const Index n = 60;
    Vector x(n), y(n);
    for (Index i = 0; i < n; ++i) {
      x(i) = rng.uniform(0.0, 2.0);
      y(i) = rng.uniform(0.05, 2.0);
    }
    // Kahan summation of the same terms.
    double sum = 0.0, carry = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double term =
          x(i) > 0.0 ? x(i) * (std::log(x(i) / y(i)) - 1.0) : 0.0;
      const double adjusted = term - carry;
      const double next = sum + adjusted;
      carry = (next - sum) - adjusted;
      sum = next;
    }
    CHECK(generalized_kl(x, y) == Catch::Approx(sum).epsilon(1e-13));
  }
  SECTION("negative entries are rejected") {
    Vector x(1), y(1);
    x << -0.1;
    y << 1.0;
    CHECK_THROWS_AS(generalized_kl(x, y), input_error);
  }
  SECTION("Bregman lower bound with equality iff x == y") {
    CounterRng rng(9);
    for (int rep = 0; rep < 50; ++rep) {
      Vector x(5), y(5);
      for (Index i = 0; i < 5; ++i) {
        x(i) = rng.uniform(0.0, 3.0);
        y(i) = rng.uniform(0.01, 3.0);
      }
      CHECK(generalized_kl(x, y) >= -y.sum() - 1e-12);
    }
    Vector z = Vector::Constant(4, 0.4);
    CHECK(generalized_kl(z, z) == Catch::Approx(-z.sum()));
  }
}

TEST_CASE("finite_difference_gradient") {
  LowRankCoupling point;
  point.source_factor = Matrix::Constant(2, 2, 0.25);
  point.target_factor = Matrix::Constant(3, 2, 1.0 / 6.0);
  point.inner_weights = Vector::Constant(2, 0.5);

  SECTION("constant field has zero gradient") {
    const GradientTriple grad = finite_difference_gradient(
        [](const LowRankCoupling&) { return 3.5; }, point, 1e-5);
    CHECK(grad.d_source.cwiseAbs().maxCoeff() ==
          Catch::Approx(0.0).margin(1e-9));
    CHECK(grad.d_weights.cwiseAbs().maxCoeff() ==
          Catch::Approx(0.0).margin(1e-9));
  }
  SECTION("linear field is exact") {
    const GradientTriple grad = finite_difference_gradient(
        [](const LowRankCoupling& t) { return 2.0 * t.source_factor.sum(); },
        point, 1e-5);
    CHECK((grad.d_source.array() - 2.0).abs().maxCoeff() <= 1e-8);
    CHECK(grad.d_target.cwiseAbs().maxCoeff() <= 1e-8);
  }
  SECTION("step outside the sanctioned range is rejected") {
    CHECK_THROWS_AS(
        finite_difference_gradient(
            [](const LowRankCoupling&) { return 0.0; }, point, 1e-2),
        input_error);
  }
}

TEST_CASE("foscttm") {
  SECTION("identical clouds with identity match score zero") {
    Matrix points(4, 2);
    points << 0, 0, 1, 0, 0, 1, 1, 1;
    PointCloud cloud{points};
    std::vector<Index> identity{0, 1, 2, 3};
    CHECK(foscttm(cloud, cloud, identity) == 0.0);
  }
  SECTION("matching everyone to the farthest point scores one") {
    Matrix points(3, 1);
    points << 0.0, 1.0, 10.0;
    PointCloud cloud{points};
    std::vector<Index> farthest{2, 2, 0};
    CHECK(foscttm(cloud, cloud, farthest) == Catch::Approx(1.0));
  }
  SECTION("random instance matches the direct double loop") {
    CounterRng rng(15);
    const Index n = 10;
    Matrix xs(n, 3), ys(n, 3);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < 3; ++j) {
        xs(i, j) = rng.normal();
        ys(i, j) = rng.normal();
      }
    PointCloud cx{xs}, cy{ys};
    std::vector<Index> match(n);
    for (Index i = 0; i < n; ++i) match[i] = (i + 3) % n;

    double expected = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double own = (xs.row(i) - ys.row(match[i])).norm();
      int closer = 0;
      for (Index j = 0; j < n; ++j)
        if (j != match[i] && (xs.row(i) - ys.row(j)).norm() < own) ++closer;
      expected += static_cast<double>(closer) / (n - 1);
    }
    expected /= n;
    CHECK(foscttm(cx, cy, match) == Catch::Approx(expected));
  }
  SECTION("size mismatch is an input error") {
    PointCloud a{Matrix::Zero(3, 2)}, b{Matrix::Zero(4, 2)};
    std::vector<Index> match{0, 1, 2};
    CHECK_THROWS_AS(foscttm(a, b, match), input_error);
  }
}

TEST_CASE("allocation scope records peaks and large events") {
  SECTION("dense multiply peaks at the dense size") {
    const AllocationStats stats = allocation_scope([] {
      DenseCost cost{Matrix::Ones(100, 100)};
      Matrix operand = Matrix::Ones(100, 100);
      const Matrix result = cost_apply(cost, operand);
      CHECK(result(0, 0) == 100.0);
    });
    CHECK(stats.peak_buffer_elements >= 10000);
  }
  SECTION("events above the threshold are listed with tags") {
    const AllocationStats stats = allocation_scope(
        [] {
          note_buffer(5000, "small");
          note_buffer(20000, "big");
        },
        10000);
    REQUIRE(stats.large_buffer_events.size() == 1);
    CHECK(stats.large_buffer_events[0].first == 20000);
    CHECK(stats.large_buffer_events[0].second == "big");
    CHECK(stats.peak_buffer_elements == 20000);
  }
  SECTION("no recording outside a scope") {
    note_buffer(123456, "orphan");
    const AllocationStats stats = allocation_scope([] {});
    CHECK(stats.peak_buffer_elements == 0);
  }
}
