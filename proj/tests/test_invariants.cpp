#include "doctest.h"
#include "test_util.hpp"

#include "ntk_geom/invariants.hpp"
#include "ntk_geom/ntk.hpp"

#include <Eigen/Dense>

using namespace ntk_geom;
using namespace test_util;

namespace {

const Architecture kRunning = Architecture::one_dimensional({3, 2}, {2, 1});

// Root of prod (x + n_l) = C on (-min n, inf) by plain bisection.
double bisection_oracle(const std::vector<double>& n, double C) {
  auto f = [&](double x) {
    double p = 1.0;
    for (double o : n) p *= x + o;
    return p - C;
  };
  double lo = -*std::min_element(n.begin(), n.end()), hi = lo + 1.0;
  while (f(hi) < 0) hi = lo + 2 * (hi - lo);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("delta_invariants") {
  CHECK(delta_invariants(tuple({{1, 1}, {1, 1, 1}})) == std::vector<double>{1.0});
  CHECK(delta_invariants(tuple({{1, 2, 3}})).empty());
  CHECK(delta_invariants(rtuple({{1, 0, 2}, {2, 1}})) == std::vector<Rational>{0});
  const double q = std::pow(2.0, 0.25);
  CHECK(std::abs(delta_invariants(tuple({{0, q, 0}, {1 / q, 1 / q}}))[0]) <= 1e-15);

  SUBCASE("unchanged by norm-preserving symmetries") {
    std::mt19937_64 rng(1);
    const auto theta = random_params(kRunning, rng);
    auto flipped = theta;
    flipped[0] *= -1.0;
    flipped[1] *= -1.0;
    CHECK(delta_invariants(flipped) == delta_invariants(theta));
    auto permuted = theta;
    std::swap(permuted[0][0], permuted[0][2]);
    CHECK(delta_invariants(permuted) == delta_invariants(theta));
  }
}

TEST_CASE("solve_scaling") {
  SUBCASE("two layers: closed form") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-10, 10);
    for (int trial = 0; trial < 20; ++trial) {
      const auto theta = random_params(kRunning, rng);
      const double d = u(rng);
      const std::vector<double> target{d};
      const auto tuples = solve_scaling(theta, target);
      REQUIRE(tuples.size() == 2);
      const double na = theta[0].squared_norm(), nb = theta[1].squared_norm();
      const double lambda2 = (-d + std::sqrt(d * d + 4 * na * nb)) / (2 * na);
      CHECK(tuples[0][0] * tuples[0][0] == doctest::Approx(lambda2).epsilon(1e-12));
    }
  }
  SUBCASE("current invariants give the all-ones tuple") {
    std::mt19937_64 rng(3);
    const auto arch = Architecture::one_dimensional({3, 2, 2, 2}, {2, 2, 2, 1});
    const auto theta = random_params(arch, rng);
    const auto tuples = solve_scaling(theta, delta_invariants(theta));
    for (double x : tuples[0]) CHECK(x == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("three layers with squared norms (1, 2, 3)") {
    const auto theta = tuple({{1, 0}, {1, 1}, {1, 1, 1}});
    const std::vector<double> target{1, 1};
    const auto tuples = solve_scaling(theta, target);
    REQUIRE(tuples.size() == 4);
    for (const auto& t : tuples)
      for (double x : t) CHECK(std::abs(x) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("count, product, residual and sign structure") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-10, 10);
    for (int trial = 0; trial < 20; ++trial) {
      const auto arch = random_1d_architecture(rng, trial % 2 == 0, 10);
      const auto theta = random_params(arch, rng);
      std::vector<double> target(arch.depth() - 1);
      for (auto& d : target) d = u(rng);
      const auto tuples = solve_scaling(theta, target);
      CHECK(tuples.size() == (std::size_t{1} << (arch.depth() - 1)));
      for (const auto& lam : tuples) {
        double prod = 1.0;
        for (double x : lam) prod *= x;
        CHECK(prod == doctest::Approx(1.0).epsilon(1e-12));
        const auto got = delta_invariants(rescale<double>(theta, lam));
        CHECK(max_abs_diff(got, target) <= 1e-10 * (1 + norm(target)));
        for (std::size_t l = 0; l < lam.size(); ++l)
          CHECK(std::abs(lam[l]) == doctest::Approx(std::abs(tuples[0][l])).epsilon(1e-14));
      }
    }
  }
  SUBCASE("zero filter") {
    CHECK_THROWS_AS(solve_scaling(tuple({{0, 0, 0}, {1, 1}}), std::vector<double>{0.0}), ZeroFilter);
  }
}

TEST_CASE("solve_product_equation matches bisection") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> off(0, 5), rhs(0.1, 100);
  std::uniform_int_distribution<int> count(1, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> n(static_cast<std::size_t>(count(rng)));
    for (auto& x : n) x = off(rng);
    const double C = rhs(rng);
    const double x = solve_product_equation(n, C);
    CHECK(x == doctest::Approx(bisection_oracle(n, C)).epsilon(1e-12));
  }
  CHECK(solve_product_equation(std::vector<double>{0, 1, 2}, 6.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("rescale") {
  std::mt19937_64 rng(6);
  const auto theta = random_params(kRunning, rng);
  CHECK(rescale<double>(theta, std::vector<double>{1, 1}) == theta);
  for (int trial = 0; trial < 10; ++trial) {
    const auto arch = random_1d_architecture(rng, true, 10);
    const auto t = random_params(arch, rng);
    std::vector<double> lam(arch.depth());
    double prod = 1.0;
    std::uniform_real_distribution<double> u(0.3, 3);
    for (std::size_t l = 0; l + 1 < lam.size(); ++l) prod *= (lam[l] = u(rng));
    lam.back() = 1.0 / prod;
    CHECK(rel_diff(compose(arch, rescale<double>(t, lam)).entries(), compose(arch, t).entries()) <= 1e-12);
  }
}

TEST_CASE("tangent space of the constrained manifold") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 15; ++trial) {
    const auto arch = random_1d_architecture(rng, trial % 2 == 0, 10);
    const auto theta = random_params(arch, rng);
    const auto basis = tangent_basis_theta_delta(arch, theta);
    CHECK(basis.vectors.size() == arch.param_count() - (arch.depth() - 1));
    std::size_t sum_k = 0;
    for (std::size_t l = 0; l < arch.depth(); ++l) sum_k += arch.layer_size(l);
    CHECK(basis.vectors.size() == sum_k - (arch.depth() - 1));
    for (const auto& v : basis.vectors)
      for (double r : tangent_constraint_residuals(theta, v)) CHECK(std::abs(r) <= 1e-12);
    // the derivative does not annihilate any tangent direction
    const Eigen::MatrixXd J = to_eigen(jacobian_blocks(arch, theta).full());
    for (Eigen::Index c = 0; c < basis.as_columns.cols(); ++c) CHECK((J * basis.as_columns.col(c)).norm() > 1e-8);
  }
  CHECK_THROWS_AS(tangent_basis_theta_delta(kRunning, tuple({{1, 2, 3}, {0, 0}})), ZeroFilter);
}

TEST_CASE("submersion check") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto theta = random_params(kRunning, rng);
    const auto r = submersion_check(kRunning, theta);
    CHECK(r.bijective);
    CHECK(r.rank == 4);
    CHECK(r.expected_dim == 4);
  }
  const auto deep = Architecture::one_dimensional({3, 2, 3}, {2, 2, 1});
  const auto r = submersion_check(deep, random_params(deep, rng));
  CHECK(r.rank == (3 - 1) + (2 - 1) + (3 - 1) + 1);
  CHECK(r.bijective);
  CHECK_THROWS_AS(submersion_check(kRunning, tuple({{0, 0, 0}, {1, 2}})), ZeroFilter);
}

TEST_CASE("pushforward metric") {
  std::mt19937_64 rng(9);
  SUBCASE("g(Kx, Ky) = x^T K y") {
    const auto theta = random_params(kRunning, rng);
    const auto K = ntk(kRunning, theta);
    const auto x = normal_vector(rng, 5), y = normal_vector(rng, 5);
    const auto Kx = K.apply(std::span<const double>(x)), Ky = K.apply(std::span<const double>(y));
    double xKy = 0.0;
    for (std::size_t i = 0; i < 5; ++i) xKy += x[i] * Ky[i];
    CHECK(pushforward_metric(K, Kx, Ky) == doctest::Approx(xKy).epsilon(1e-8));
  }
  SUBCASE("equals the squared norm of the tangent preimage") {
    for (int trial = 0; trial < 10; ++trial) {
      const auto arch = random_1d_architecture(rng, true, 10);
      const auto theta = random_params(arch, rng);
      const auto basis = tangent_basis_theta_delta(arch, theta);
      const Eigen::MatrixXd JT = to_eigen(jacobian_blocks(arch, theta).full()) * basis.as_columns;
      const auto c = normal_vector(rng, static_cast<std::size_t>(JT.cols()));
      const Eigen::VectorXd cv = Eigen::Map<const Eigen::VectorXd>(c.data(), JT.cols());
      const Eigen::VectorXd vdot = JT * cv;
      const std::vector<double> vd(vdot.data(), vdot.data() + vdot.size());
      const double g = pushforward_metric(arch, compose(arch, theta), delta_invariants(theta), vd, vd);
      CHECK(g == doctest::Approx(cv.squaredNorm()).epsilon(1e-7));
      CHECK(g > 0.0);
    }
  }
  SUBCASE("vectors off the column space are rejected") {
    const auto theta = tuple({{1, 0, 2}, {2, 1}});
    // rank 4 kernel: the kernel direction of K is not tangent
    const auto K = ntk(kRunning, theta);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(to_eigen(K));
    const Eigen::VectorXd n = eig.eigenvectors().col(0);
    const std::vector<double> nv(n.data(), n.data() + 5);
    CHECK_THROWS_AS(pushforward_metric(K, nv, nv), PreconditionError);
  }
}

TEST_CASE("fully-connected invariants") {
  using M = DenseMatrix<Rational>;
  const Rational half(1, 2);
  const M expected = M::from_rows({{0, 0}, {0, Rational(15, 4)}});
  CHECK(fc_delta_matrices<Rational>({M::from_rows({{1, 0}, {0, half}}), M::from_rows({{1, 0}, {0, 2}})})[0] ==
        expected);
  CHECK(fc_delta_matrices<Rational>({M::from_rows({{0, 1}, {half, 0}}), M::from_rows({{0, 2}, {1, 0}})})[0] ==
        expected);
  const M rot = M::from_rows({{0, -1}, {1, 0}});
  for (const auto& D : fc_delta_matrices<Rational>({rot, rot, rot})) CHECK(D == M(2, 2));
  CHECK_THROWS_AS(fc_delta_matrices<Rational>({M(2, 3), M(2, 3)}), ShapeMismatch);
}
