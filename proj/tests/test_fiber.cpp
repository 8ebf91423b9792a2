#include "doctest.h"
#include "test_util.hpp"

#include "ntk_geom/fiber.hpp"

using namespace ntk_geom;
using namespace test_util;

namespace {

const Architecture kRunning = Architecture::one_dimensional({3, 2}, {2, 1});
const Architecture kStrideOne = Architecture::one_dimensional({3, 2}, {1, 1});

EndToEndFilter<double> filter(std::vector<double> v) { return EndToEndFilter<double>(std::move(v)); }

bool contains_class(const FiberResult& r, const ParamTuple<double>& theta) {
  for (const auto& rep : r.representatives)
    if (same_scaling_class(rep, theta)) return true;
  return false;
}

}  // namespace

TEST_CASE("homogeneous roots") {
  SUBCASE("repeated roots") {
    const std::vector<double> v{0, 0, 1, -2, 1};  // z^2 (1 - z)^2
    const auto set = homogeneous_roots(v);
    CHECK(set.at_infinity == 0);
    CHECK(set.total_multiplicity() == 4);
    REQUIRE(set.finite.size() == 2);
    for (const auto& c : set.finite) {
      CHECK(c.multiplicity == 2);
      CHECK((std::abs(c.z) <= 1e-9 || std::abs(c.z - 1.0) <= 1e-6));
    }
  }
  SUBCASE("degree drop gives roots at infinity") {
    const std::vector<double> v{1, 1, 0, 0};
    const auto set = homogeneous_roots(v);
    CHECK(set.at_infinity == 2);
    REQUIRE(set.finite.size() == 1);
    CHECK(std::abs(set.finite[0].z + 1.0) <= 1e-12);
    CHECK(set.total_multiplicity() == 3);
  }
  SUBCASE("complex pair") {
    const std::vector<double> v{1, 0, 1};
    const auto set = homogeneous_roots(v);
    REQUIRE(set.finite.size() == 2);
    for (const auto& c : set.finite) CHECK(std::abs(std::abs(c.z.imag()) - 1.0) <= 1e-12);
  }
}

TEST_CASE("canonical representatives") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto arch = random_1d_architecture(rng, trial % 2 == 0, 10);
    const auto theta = random_params(arch, rng);
    const auto c = canonical_representative(theta);
    CHECK(rel_diff(compose(arch, c).entries(), compose(arch, theta).entries()) <= 1e-12);
    for (std::size_t l = 0; l + 1 < arch.depth(); ++l) {
      CHECK(std::sqrt(c[l].squared_norm()) == doctest::Approx(1.0).epsilon(1e-12));
      for (double x : c[l].entries())
        if (x != 0.0) {
          CHECK(x > 0.0);
          break;
        }
    }
    CHECK(same_scaling_class(theta, c));
    auto flipped = theta;
    flipped[0] *= -2.0;
    flipped[arch.depth() - 1] *= -0.5;
    CHECK(same_scaling_class(theta, flipped));
    auto other = theta;
    other[0][0] += 0.5;
    CHECK_FALSE(same_scaling_class(theta, other));
  }
}

TEST_CASE("two-layer closed form") {
  SUBCASE("round trip") {
    const auto theta = tuple({{1, 2, 3}, {4, 5}});
    const auto r = recover_two_layer(kRunning, compose(kRunning, theta));
    CHECK(r.unique);
    REQUIRE(r.class_count() == 1);
    CHECK(same_scaling_class(r.representatives[0], theta));
    CHECK(r.residuals[0] <= 1e-12);
    CHECK(r.ranks[0] == 4);
  }
  SUBCASE("exact preimage and defining equation") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
      const auto theta = rtuple({{rnd_rational(rng), rnd_rational(rng), rnd_rational(rng)},
                                 {rnd_rational(rng), rnd_rational(rng)}});
      const auto v = compose(kRunning, theta);
      CHECK(two_layer_equation(v) == 0);
      const auto pre = two_layer_preimage(v);
      if (v[1] == 0 && v[3] == 0) {
        CHECK_FALSE(pre.has_value());
        continue;
      }
      REQUIRE(pre.has_value());
      CHECK(compose(kRunning, *pre) == v);
    }
  }
  SUBCASE("v1 = 0 branch") {
    const auto theta = tuple({{1, 2, 3}, {0, 5}});
    const auto v = compose(kRunning, theta);
    CHECK(v[1] == 0.0);
    const auto r = recover_two_layer(kRunning, v);
    CHECK(r.unique);
    REQUIRE(r.class_count() == 1);
    CHECK(same_scaling_class(r.representatives[0], theta));
  }
  SUBCASE("singular point") {
    const auto r = recover_two_layer(kRunning, filter({0, 0, 1, 0, 0}));
    CHECK_FALSE(r.unique);
    CHECK(r.class_count() == 2);
    CHECK(contains_class(r, tuple({{1, 0, 0}, {0, 1}})));
    CHECK(contains_class(r, tuple({{0, 0, 1}, {1, 0}})));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(recover_two_layer(kRunning, filter({1, 1, 1, 1, 1})), NotOnManifold);
    CHECK_THROWS_AS(recover_two_layer(kStrideOne, filter({1, 1, 1, 1})), PreconditionError);
    CHECK_THROWS_AS(recover_two_layer(kRunning, filter({1, 1, 1, 1})), ShapeMismatch);
  }
}

TEST_CASE("root grouping") {
  SUBCASE("strided round trip is unique") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
      const auto arch = random_1d_architecture(rng, true, 10);
      const auto theta = random_params(arch, rng);
      const auto r = enumerate_factorizations(arch, compose(arch, theta));
      CHECK(r.unique);
      REQUIRE(r.class_count() == 1);
      CHECK(same_scaling_class(r.representatives[0], theta));
      CHECK(r.residuals[0] <= 1e-8);
    }
  }
  SUBCASE("stride one: every class reproduces the filter") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 20; ++trial) {
      const auto arch = random_1d_architecture(rng, false, 10);
      const auto theta = random_params(arch, rng);
      const auto v = compose(arch, theta);
      const auto r = enumerate_factorizations(arch, v);
      CHECK(contains_class(r, theta));
      for (std::size_t i = 0; i < r.class_count(); ++i) {
        CHECK(r.residuals[i] <= 1e-8);
        CHECK(rel_diff(compose(arch, r.representatives[i]).entries(), v.entries()) <= 1e-8);
      }
    }
  }
  SUBCASE("roots 0, -1 and infinity give three classes") {
    const auto r = enumerate_factorizations(kStrideOne, filter({0, 1, 1, 0}));
    CHECK(r.class_count() == 3);
    CHECK_FALSE(r.unique);
  }
  SUBCASE("complex pair must stay in one layer") {
    const auto r = enumerate_factorizations(kStrideOne, filter({1, 0, 1, 0}));
    REQUIRE(r.class_count() == 1);
    const double h = 1.0 / std::sqrt(2.0);
    CHECK(max_abs_diff(r.representatives[0][0].entries(), {h, 0, h}) <= 1e-10);
    CHECK(max_abs_diff(r.representatives[0][1].entries(), {std::sqrt(2.0), 0}) <= 1e-10);
  }
  SUBCASE("cubics") {
    // (1 + z)(2 + z)(3 + z) = 6 + 11 z + 6 z^2 + z^3
    CHECK(enumerate_factorizations(kStrideOne, filter({6, 11, 6, 1})).class_count() == 3);
    // (1 + z)(1 + z^2) = 1 + z + z^2 + z^3
    CHECK(enumerate_factorizations(kStrideOne, filter({1, 1, 1, 1})).class_count() == 1);
    // three stride-one layers of length 2 cannot split a complex pair
    const auto three = Architecture::one_dimensional({2, 2, 2}, {1, 1, 1});
    CHECK_THROWS_AS(enumerate_factorizations(three, filter({1, 1, 1, 1})), NoFactorization);
    CHECK(enumerate_factorizations(three, filter({6, 11, 6, 1})).class_count() == 6);
  }
  SUBCASE("guards") {
    CHECK_THROWS_AS(enumerate_factorizations(kRunning, filter({1, 2, 3})), ShapeMismatch);
    CHECK_THROWS(enumerate_factorizations(kRunning, filter({0, 0, 0, 0, 0})));
    const Architecture two_d({{{2, 2}, StrideVector({1, 1})}, {{2, 2}, StrideVector({1, 1})}});
    CHECK_THROWS_AS(enumerate_factorizations(two_d, EndToEndFilter<double>::zeros({3, 3})), PreconditionError);
  }
}

TEST_CASE("numerical inversion") {
  SUBCASE("agrees with root grouping") {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 12; ++trial) {
      const auto arch = random_1d_architecture(rng, trial % 2 == 0, 8);
      const auto theta = random_params(arch, rng);
      const auto v = compose(arch, theta);
      const auto rg = enumerate_factorizations(arch, v);
      InversionOptions opt;
      opt.seed = static_cast<std::uint64_t>(trial);
      const auto num = invert_numeric(arch, v, opt);
      CHECK(num.class_count() == rg.class_count());
      for (const auto& rep : num.representatives) CHECK(contains_class(rg, rep));
      for (double res : num.residuals) CHECK(res <= 1e-8);
    }
  }
  SUBCASE("two-dimensional filters") {
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 6; ++trial) {
      const auto arch = random_2d_two_layer(rng, trial % 2 == 0);
      const auto theta = random_params(arch, rng);
      const auto v = compose(arch, theta);
      const auto r = invert_numeric(arch, v);
      for (std::size_t i = 0; i < r.class_count(); ++i) {
        CHECK(r.residuals[i] <= 1e-8);
        CHECK(rel_diff(compose(arch, r.representatives[i]).entries(), v.entries()) <= 1e-8);
      }
      const auto perms = swap_group(arch);
      bool found = false;
      for (const auto& p : perms) {
        ParamTuple<double> q;
        for (std::size_t l : p) q.filters.push_back(theta[l]);
        found = found || contains_class(r, q);
      }
      CHECK(found);
    }
  }
  SUBCASE("swap group") {
    std::mt19937_64 rng(17);
    CHECK(swap_group(random_2d_two_layer(rng, true)).size() == 2);
    CHECK(swap_group(random_2d_two_layer(rng, false)).size() == 1);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(invert_numeric(kRunning, filter({0, 0, 0, 0, 0})), PreconditionError);
    CHECK_THROWS_AS(invert_numeric(kRunning, filter({1, 0})), ShapeMismatch);
  }
}
