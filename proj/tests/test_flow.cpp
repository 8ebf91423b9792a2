#include "doctest.h"
#include "test_util.hpp"

#include "ntk_geom/fiber.hpp"
#include "ntk_geom/flow.hpp"
#include "ntk_geom/invariants.hpp"
#include "ntk_geom/ode.hpp"

#include <Eigen/Dense>

using namespace ntk_geom;
using namespace test_util;

namespace {

const Architecture kRunning = Architecture::one_dimensional({3, 2}, {2, 1});

BasicQuadraticLoss<Rational> random_rational_loss(std::mt19937_64& rng, std::size_t k) {
  // A = M^T M + I is symmetric positive definite
  DenseMatrix<Rational> M(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) M(i, j) = rnd_rational(rng);
  BasicQuadraticLoss<Rational> L;
  L.A = M.transpose() * M + DenseMatrix<Rational>::identity(k);
  for (std::size_t i = 0; i < k; ++i) L.u.push_back(rnd_rational(rng));
  L.c = rnd_rational(rng);
  return L;
}

ParamTuple<Rational> random_rational_params(const Architecture& arch, std::mt19937_64& rng) {
  ParamTuple<Rational> t;
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    std::vector<Rational> w(arch.layer_size(l));
    for (auto& x : w) x = rnd_rational(rng);
    t.filters.emplace_back(arch.layer(l).filter_shape, std::move(w));
  }
  return t;
}

FlowOptions rk45(double t_max, double tol = 1e-10) {
  FlowOptions o;
  o.control.method = Integrator::RK45;
  o.control.atol = o.control.rtol = tol;
  o.t_max = t_max;
  return o;
}

}  // namespace

TEST_CASE("dataset reduction") {
  std::mt19937_64 rng(21);
  SUBCASE("quadratic form equals the dataset loss") {
    for (const auto& arch : {kRunning, Architecture::one_dimensional({2, 3, 2}, {3, 2, 1}),
                             Architecture({{{2, 2}, StrideVector({2, 1})}, {{2, 1}, StrideVector({1, 1})}})}) {
      const auto data = random_dataset(arch, 3 * arch.filter_size(), 5);
      const auto L = dataset_to_quadratic(arch, data);
      validate_loss(L);
      for (int trial = 0; trial < 20; ++trial) {
        const auto theta = random_params(arch, rng);
        const auto v = compose(arch, theta);
        const double direct = dataset_loss(arch, theta, data);
        CHECK(std::abs(loss_value(L, std::span<const double>(v.entries())) - direct) <= 1e-9 * (1 + direct));
        CHECK(std::abs(dataset_loss_of_filter(arch, v, data) - direct) <= 1e-9 * (1 + direct));
      }
    }
  }
  SUBCASE("orthonormal design gives the identity") {
    // single-output samples whose inputs are the basis filters
    const auto arch = Architecture::one_dimensional({2, 2}, {1, 1});
    Dataset data;
    for (std::size_t j = 0; j < 3; ++j) {
      std::vector<double> x(3, 0.0), y{static_cast<double>(j) + 1};
      x[j] = 1.0;
      data.inputs.emplace_back(x);
      data.outputs.emplace_back(y);
    }
    const auto L = dataset_to_quadratic(arch, data);
    CHECK((to_eigen(L.A) - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(max_abs_diff(L.u, {1, 2, 3}) <= 1e-14);
    CHECK(std::abs(L.c) <= 1e-12);
  }
  SUBCASE("too few samples") {
    const auto data = random_dataset(kRunning, 4, 1);
    CHECK_THROWS_AS(dataset_to_quadratic(kRunning, data), DegenerateData);
    CHECK_THROWS_AS(dataset_to_quadratic(kRunning, Dataset{}), DegenerateData);
  }
  SUBCASE("loss validation") {
    QuadraticLoss L;
    L.A = DenseMatrix<double>::from_rows({{1, 2}, {0, 1}});
    L.u = {0, 0};
    CHECK_THROWS_AS(validate_loss(L), DegenerateData);
    L.A = DenseMatrix<double>::from_rows({{1, 0}, {0, -1}});
    CHECK_THROWS_AS(validate_loss(L), DegenerateData);
  }
}

TEST_CASE("parameter gradient") {
  std::mt19937_64 rng(22);
  SUBCASE("finite differences") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto arch = random_1d_architecture(rng, trial % 2 == 0, 10);
      const auto L = random_quadratic_loss(arch.filter_size(), static_cast<std::uint64_t>(trial));
      const auto theta = random_params(arch, rng);
      const auto g = flatten(loss_grad_params(arch, theta, L));
      const auto fd = fd_gradient(
          [&](const std::vector<double>& x) {
            return param_loss(arch, unflatten<double>(arch, std::span<const double>(x)), L);
          },
          flatten(theta));
      CHECK(rel_diff(g, fd) <= 1e-6);
    }
  }
  SUBCASE("exact in rational arithmetic") {
    // the loss has degree two in each coordinate, so central differences are exact
    for (int trial = 0; trial < 10; ++trial) {
      const auto L = random_rational_loss(rng, 5);
      const auto theta = random_rational_params(kRunning, rng);
      const auto g = flatten(loss_grad_params(kRunning, theta, L));
      const auto x = flatten(theta);
      const Rational h(1, 3);
      for (std::size_t i = 0; i < x.size(); ++i) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const Rational fd = (param_loss(kRunning, unflatten<Rational>(kRunning, std::span<const Rational>(xp)), L) -
                             param_loss(kRunning, unflatten<Rational>(kRunning, std::span<const Rational>(xm)), L)) /
                            (2 * h);
        CHECK(g[i] == fd);
      }
    }
  }
}

TEST_CASE("parameter Hessian") {
  std::mt19937_64 rng(23);
  SUBCASE("exact second differences") {
    for (int trial = 0; trial < 5; ++trial) {
      const auto arch = trial % 2 == 0 ? kRunning : Architecture::one_dimensional({2, 2, 2}, {2, 1, 1});
      const auto L = random_rational_loss(rng, arch.filter_size());
      const auto theta = random_rational_params(arch, rng);
      const auto H = hessian_params(arch, theta, L);
      CHECK(H.is_symmetric());
      const auto x = flatten(theta);
      const Rational h(1, 2);
      auto f = [&](const std::vector<Rational>& y) {
        return param_loss(arch, unflatten<Rational>(arch, std::span<const Rational>(y)), L);
      };
      for (std::size_t p = 0; p < x.size(); ++p)
        for (std::size_t q = 0; q < x.size(); ++q) {
          Rational fd;
          if (p == q) {
            auto xp = x, xm = x;
            xp[p] += h;
            xm[p] -= h;
            fd = (f(xp) - 2 * f(x) + f(xm)) / (h * h);
          } else {
            auto pp = x, pm = x, mp = x, mm = x;
            pp[p] += h, pp[q] += h;
            pm[p] += h, pm[q] -= h;
            mp[p] -= h, mp[q] += h;
            mm[p] -= h, mm[q] -= h;
            fd = (f(pp) - f(pm) - f(mp) + f(mm)) / (4 * h * h);
          }
          CHECK(H(p, q) == fd);
        }
    }
  }
  SUBCASE("zero-layer critical point") {
    for (int trial = 0; trial < 10; ++trial) {
      const auto L = random_quadratic_loss(5, static_cast<std::uint64_t>(100 + trial));
      const auto theta = zero_layer_critical_point(kRunning, L);
      const auto rep = strict_saddle_check(kRunning, theta, L);
      CHECK(rep.grad_norm <= 1e-12);
      CHECK(rep.is_strict_saddle);
      CHECK(rep.min_eigenvalue < 0.0);
      // the first-layer block vanishes and the mixed block does not
      const auto H = hessian_params(kRunning, theta, L);
      double first = 0.0, mixed = 0.0;
      for (std::size_t p = 0; p < 3; ++p)
        for (std::size_t q = 0; q < 5; ++q) {
          double& slot = q < 3 ? first : mixed;
          slot = std::max(slot, std::abs(H(p, q)));
        }
      CHECK(first <= 1e-12);
      CHECK(mixed > 1e-6);
    }
  }
  SUBCASE("minimizers and regular points are not strict saddles") {
    for (int trial = 0; trial < 10; ++trial) {
      const auto theta = random_params(kRunning, rng);
      auto L = random_quadratic_loss(5, static_cast<std::uint64_t>(trial));
      CHECK_FALSE(strict_saddle_check(kRunning, theta, L).is_strict_saddle);
      L.u = compose(kRunning, theta).entries();
      const auto rep = strict_saddle_check(kRunning, theta, L);
      CHECK_FALSE(rep.is_strict_saddle);
      CHECK(rep.min_eigenvalue >= -1e-10);
    }
  }
}

TEST_CASE("parameter flow") {
  std::mt19937_64 rng(24);
  SUBCASE("invariants are conserved and the loss decreases") {
    for (int trial = 0; trial < 5; ++trial) {
      const auto arch = random_1d_architecture(rng, trial % 2 == 0, 8);
      const auto L = random_quadratic_loss(arch.filter_size(), static_cast<std::uint64_t>(trial));
      const auto theta = random_params(arch, rng);
      const auto traj = integrate_param_flow(arch, theta, L, rk45(5.0));
      CHECK(traj.max_delta_drift <= 1e-6);
      CHECK_FALSE(traj.drift_flagged);
      CHECK(traj.loss_monotone);
      CHECK(traj.losses.back() < traj.losses.front());
      CHECK(traj.times.front() == 0.0);
    }
  }
  SUBCASE("a global minimizer stays put") {
    const auto theta = random_params(kRunning, rng);
    auto L = random_quadratic_loss(5, 3);
    L.u = compose(kRunning, theta).entries();
    const auto traj = integrate_param_flow(kRunning, theta, L, rk45(1.0));
    CHECK(max_abs_diff(traj.final_state, flatten(theta)) <= 1e-12);
    CHECK(traj.converged);
  }
  SUBCASE("shape guard") {
    const auto L = random_quadratic_loss(4, 1);
    CHECK_THROWS_AS(integrate_param_flow(kRunning, random_params(kRunning, rng), L), ShapeMismatch);
  }
}

TEST_CASE("function flow") {
  std::mt19937_64 rng(25);
  SUBCASE("matches the pushed-forward parameter flow") {
    for (int trial = 0; trial < 2; ++trial) {
      const auto theta = trial == 0 ? random_params(kRunning, rng)
                                    : random_unbalanced_params(kRunning, rng, 5.0);
      const auto L = random_quadratic_loss(5, static_cast<std::uint64_t>(trial));
      const auto cmp = compare_flows(kRunning, theta, L, 0.5, 1e-3);
      CHECK(cmp.max_deviation <= 1e-6);
      CHECK(cmp.function.max_tracking_residual <= 1e-4);
      CHECK(cmp.function.max_delta_drift <= 1e-6);
    }
  }
  SUBCASE("starting at the minimizer") {
    const auto theta = random_params(kRunning, rng);
    auto L = random_quadratic_loss(5, 4);
    const auto v = compose(kRunning, theta);
    L.u = v.entries();
    FlowOptions o;
    o.t_max = 0.1;
    o.control.step = 1e-2;
    const auto traj = integrate_function_flow(kRunning, v, delta_invariants(theta), L, o);
    CHECK(max_abs_diff(traj.final_state, v.entries()) <= 1e-12);
  }
}

TEST_CASE("zero avoidance") {
  const auto L = random_quadratic_loss(5, 7);
  const auto empty = zero_avoidance_experiment(kRunning, L, 0, 1, zero_avoidance_options());
  CHECK(empty.runs.empty());
  CHECK(empty.nonzero_fraction == 0.0);

  const auto rep = zero_avoidance_experiment(kRunning, L, 2, 1, zero_avoidance_options());
  REQUIRE(rep.runs.size() == 2);
  CHECK(rep.nonzero_fraction == 1.0);
  for (const auto& r : rep.runs) {
    CHECK(r.converged);
    CHECK(r.final_function_norm > 1e-4);
    CHECK(r.max_delta_drift <= 1e-6);
  }
}

TEST_CASE("integrators") {
  const RightHandSide decay = [](double, const State& y, State& dy) { dy = {-y[0], y[0] - y[1]}; };
  auto exact = [](double t) { return std::vector<double>{std::exp(-t), t * std::exp(-t)}; };
  SUBCASE("RK4") {
    StepControl c;
    c.step = 1e-2;
    State y{1, 0};
    const auto stats = integrate(decay, y, 0.0, 1.005, c);
    CHECK(stats.t_end == doctest::Approx(1.005).epsilon(1e-15));
    CHECK(max_abs_diff(y, exact(1.005)) <= 1e-9);
  }
  SUBCASE("RK45") {
    StepControl c;
    c.method = Integrator::RK45;
    c.atol = c.rtol = 1e-11;
    State y{1, 0};
    integrate(decay, y, 0.0, 3.0, c);
    CHECK(max_abs_diff(y, exact(3.0)) <= 1e-9);
  }
  SUBCASE("observer stops the run") {
    StepControl c;
    State y{1, 0};
    const auto stats = integrate(decay, y, 0.0, 10.0, c, [](double t, const State&) { return t < 0.5; });
    CHECK(stats.stopped_by_observer);
    CHECK(stats.t_end < 0.51);
  }
  SUBCASE("blow-up underflows the step") {
    StepControl c;
    c.method = Integrator::RK45;
    State y{1};
    const RightHandSide blow = [](double, const State& s, State& dy) { dy = {s[0] * s[0]}; };
    CHECK_THROWS_AS(integrate(blow, y, 0.0, 2.0, c), StepSizeUnderflow);
  }
  CHECK(parse_integrator("rk45") == Integrator::RK45);
  CHECK(integrator_name(Integrator::RK4) == "rk4");
  CHECK_THROWS(parse_integrator("euler"));
}
