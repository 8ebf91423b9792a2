#include "doctest.h"
#include "test_util.hpp"

#include "ntk_geom/conv_core.hpp"
#include "ntk_geom/invariants.hpp"

#include <map>

using namespace ntk_geom;
using namespace test_util;

TEST_CASE("end_to_end_shape") {
  CHECK(Architecture::one_dimensional({3, 2}, {2, 1}).end_to_end_shape() == Shape{5});
  CHECK(Architecture::one_dimensional({7}, {3}).end_to_end_shape() == Shape{7});
  CHECK(Architecture::one_dimensional({2, 2, 2}, {2, 2, 1}).end_to_end_shape() == Shape{8});
  const Architecture two_d({{{3, 2}, StrideVector({2, 1})}, {{2, 2}, StrideVector({1, 1})}});
  CHECK(two_d.end_to_end_shape() == Shape{5, 3});
}

TEST_CASE("architecture validation") {
  CHECK_THROWS_AS(Architecture::one_dimensional({1, 3}, {1, 1}), ShapeMismatch);
  CHECK_THROWS_AS(Architecture::one_dimensional({3, 2}, {0, 1}), ShapeMismatch);
  CHECK_THROWS_AS(Architecture({{{3, 2}, StrideVector({1})}}), ShapeMismatch);
  CHECK_THROWS_AS(Architecture(std::vector<LayerSpec>{}), ShapeMismatch);

  SUBCASE("last stride is normalized and remembered") {
    const auto arch = Architecture::one_dimensional({3, 2}, {2, 3});
    CHECK(arch.layer(1).stride == StrideVector::ones(1));
    CHECK(arch.output_stride() == StrideVector({3}));
    CHECK(arch.overall_stride() == StrideVector({6}));
    CHECK(arch.warnings().size() == 1);
    CHECK(Architecture::one_dimensional({3, 2}, {2, 1}).warnings().empty());
  }
}

TEST_CASE("apply_convolution") {
  const StrideVector one({1}), two({2});
  SUBCASE("shift-free pick") {
    const Tensor<double> w(std::vector<double>{1, 0});
    const Tensor<double> x(std::vector<double>{3, 5, 7});
    CHECK(apply_convolution(w, one, x).entries() == std::vector<double>{3, 5});
  }
  SUBCASE("stride two windows") {
    const Tensor<double> w(std::vector<double>{1, 2, 3});
    const Tensor<double> x(std::vector<double>{1, 10, 100, 1000, 10000});
    CHECK(apply_convolution(w, two, x).entries() == std::vector<double>{1 + 20 + 300, 100 + 2000 + 30000});
  }
  SUBCASE("2-D identity") {
    const Tensor<double> w({1, 1}, {1.0});
    std::mt19937_64 rng(1);
    const auto x = normal_tensor(rng, {3, 4});
    CHECK(apply_convolution(w, StrideVector({1, 1}), x) == x);
  }
  SUBCASE("input without a valid output format") {
    const Tensor<double> w(std::vector<double>{1, 2, 3});
    CHECK_THROWS_AS(apply_convolution(w, two, Tensor<double>(std::vector<double>{1, 2, 3, 4})), ShapeMismatch);
  }
}

TEST_CASE("compose: symbolic formulas at rational points") {
  std::mt19937_64 rng(7);
  const auto strided = Architecture::one_dimensional({3, 2}, {2, 1});
  const auto stride_one = Architecture::one_dimensional({3, 2}, {1, 1});
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<Rational> a{rnd_rational(rng), rnd_rational(rng), rnd_rational(rng)};
    std::vector<Rational> b{rnd_rational(rng), rnd_rational(rng)};
    const auto theta = rtuple({a, b});
    const std::vector<Rational> running{a[0] * b[0], a[1] * b[0], a[2] * b[0] + a[0] * b[1], a[1] * b[1], a[2] * b[1]};
    CHECK(compose(strided, theta).entries() == running);
    const std::vector<Rational> unit{a[0] * b[0], a[0] * b[1] + a[1] * b[0], a[1] * b[1] + a[2] * b[0], a[2] * b[1]};
    CHECK(compose(stride_one, theta).entries() == unit);
  }
  const auto v = compose(strided, rtuple({{1, 0, 2}, {2, 1}}));
  CHECK(v.entries() == std::vector<Rational>{2, 0, 5, 0, 2});
}

TEST_CASE("to_poly and from_poly") {
  const Tensor<double> w(std::vector<double>{4, -1, 2});
  const auto p = to_poly(w, {2});
  CHECK(p.degree(0) == 4);
  CHECK(from_poly(p) == w);
  CHECK(to_poly(Tensor<double>(std::vector<double>{1, 2}), {1}).degree(0) == 1);
  CHECK_THROWS_AS(to_poly(w, {0}), ShapeMismatch);

  SUBCASE("2-D coefficients follow the multi-index") {
    const Tensor<double> w2({2, 2}, {1, 2, 3, 4});
    const auto q = to_poly(w2, {1, 1});
    // coefficient of x_1^{1-i} y_1^i x_2^{1-j} y_2^j is entry (i, j)
    CHECK(q.coefficients.entries() == std::vector<double>{1, 2, 3, 4});
    CHECK(q.degree(0) == 1);
    CHECK(q.degree(1) == 1);
  }
  SUBCASE("linearity") {
    std::mt19937_64 rng(3);
    const auto x = normal_tensor(rng, {3});
    const auto y = normal_tensor(rng, {3});
    Tensor<double> sum = x;
    for (std::size_t i = 0; i < 3; ++i) sum[i] = 2 * x[i] - y[i];
    const auto ps = to_poly(sum, {3});
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(ps.coefficients[i] == doctest::Approx(2 * to_poly(x, {3}).coefficients[i] - to_poly(y, {3}).coefficients[i]));
  }
}

// Brute-force product: expand every pair of monomials and collect by the
// exponent of y in each direction.
std::map<std::vector<int>, Rational> expand(const SparsePoly<Rational>& p, const SparsePoly<Rational>& q) {
  std::map<std::vector<int>, Rational> terms;
  const std::size_t D = p.dim();
  std::vector<int> pi(D), qi(D);
  for (std::size_t a = 0; a < p.coefficients.size(); ++a) {
    unravel(a, p.coefficients.shape(), pi);
    for (std::size_t b = 0; b < q.coefficients.size(); ++b) {
      unravel(b, q.coefficients.shape(), qi);
      std::vector<int> y(D);
      for (std::size_t m = 0; m < D; ++m) y[m] = p.exponent[m] * pi[m] + q.exponent[m] * qi[m];
      terms[y] += p.coefficients[a] * q.coefficients[b];
    }
  }
  return terms;
}

TEST_CASE("poly_multiply") {
  SUBCASE("(x + y)^2") {
    const auto p = to_poly(Tensor<Rational>(std::vector<Rational>{1, 1}), {1});
    CHECK(poly_multiply(p, p).coefficients.entries() == std::vector<Rational>{1, 2, 1});
  }
  SUBCASE("running example product") {
    std::mt19937_64 rng(11);
    const std::vector<Rational> a{rnd_rational(rng), rnd_rational(rng), rnd_rational(rng)};
    const std::vector<Rational> b{rnd_rational(rng), rnd_rational(rng)};
    const auto prod = poly_multiply(to_poly(Tensor<Rational>(b), {2}), to_poly(Tensor<Rational>(a), {1}));
    CHECK(prod.exponent == std::vector<int>{1});
    CHECK(prod.coefficients.entries() ==
          std::vector<Rational>{a[0] * b[0], a[1] * b[0], a[2] * b[0] + a[0] * b[1], a[1] * b[1], a[2] * b[1]});
  }
  SUBCASE("random products match brute-force expansion") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> size(1, 5), t(1, 3), dim(1, 2);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t D = static_cast<std::size_t>(dim(rng));
      Shape ks(D), kq(D);
      std::vector<int> tp(D), tq(D);
      for (std::size_t m = 0; m < D; ++m) {
        ks[m] = size(rng);
        kq[m] = size(rng);
        tp[m] = t(rng);
        tq[m] = t(rng);
      }
      std::vector<Rational> cp(element_count(ks)), cq(element_count(kq));
      for (auto& x : cp) x = rnd_rational(rng);
      for (auto& x : cq) x = rnd_rational(rng);
      const auto p = to_poly(Tensor<Rational>(ks, cp), tp);
      const auto q = to_poly(Tensor<Rational>(kq, cq), tq);
      const auto r = poly_multiply(p, q);
      const auto terms = expand(p, q);
      std::vector<int> ri(D);
      bool ok = true;
      std::map<std::vector<int>, Rational> seen;
      for (std::size_t i = 0; i < r.coefficients.size(); ++i) {
        unravel(i, r.coefficients.shape(), ri);
        std::vector<int> y(D);
        for (std::size_t m = 0; m < D; ++m) y[m] = r.exponent[m] * ri[m];
        seen[y] = r.coefficients[i];
      }
      for (const auto& [y, c] : terms) ok = ok && seen.count(y) && seen[y] == c;
      for (const auto& [y, c] : seen) ok = ok && (c == 0 || terms.count(y));
      CHECK(ok);
    }
  }
}

TEST_CASE("end-to-end convolution equals the layer-by-layer network") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> out_len(1, 4);
  for (int trial = 0; trial < 30; ++trial) {
    const bool two_d = trial % 3 == 2;
    const Architecture arch = two_d ? random_2d_two_layer(rng, trial % 2 == 0)
                                    : random_1d_architecture(rng, trial % 2 == 0, 10);
    Shape out(arch.signal_dim());
    for (auto& n : out) n = out_len(rng);
    const Shape in = network_input_shape(arch, out);

    const auto theta = random_params(arch, rng);
    const auto x = normal_tensor(rng, in);
    const auto seq = apply_network(arch, theta, x);
    const auto once = apply_convolution(compose(arch, theta), arch.overall_stride(), x);
    REQUIRE(seq.shape() == once.shape());
    CHECK(rel_diff(seq.entries(), once.entries()) <= 1e-12);

    // exact in rational arithmetic
    ParamTuple<Rational> rt;
    for (const auto& w : theta.filters) {
      std::vector<Rational> e;
      for (std::size_t i = 0; i < w.size(); ++i) e.push_back(rnd_rational(rng));
      rt.filters.emplace_back(w.shape(), e);
    }
    std::vector<Rational> xr;
    for (std::size_t i = 0; i < x.size(); ++i) xr.push_back(rnd_rational(rng));
    const Tensor<Rational> X(in, xr);
    CHECK(apply_network(arch, rt, X) == apply_convolution(compose(arch, rt), arch.overall_stride(), X));
  }
}

TEST_CASE("output stride is kept for applying the network") {
  const auto arch = Architecture::one_dimensional({2, 2}, {2, 2});
  std::mt19937_64 rng(2);
  const auto theta = random_params(arch, rng);
  const Shape in = network_input_shape(arch, {3});
  const auto x = normal_tensor(rng, in);
  const auto seq = apply_network(arch, theta, x);
  CHECK(seq.shape() == Shape{3});
  CHECK(rel_diff(seq.entries(), apply_convolution(compose(arch, theta), arch.overall_stride(), x).entries()) <= 1e-12);
}

TEST_CASE("compose is multilinear and has the architecture's shape") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Architecture arch = trial % 2 ? random_1d_architecture(rng, true, 10) : random_2d_two_layer(rng, true);
    ParamTuple<Rational> theta;
    std::vector<Rational> lambda;
    Rational prod(1);
    for (std::size_t l = 0; l < arch.depth(); ++l) {
      std::vector<Rational> e(arch.layer_size(l));
      for (auto& x : e) x = rnd_rational(rng);
      theta.filters.emplace_back(arch.layer(l).filter_shape, e);
      lambda.push_back(rnd_rational(rng, true));
      prod *= lambda.back();
    }
    const auto v = compose(arch, theta);
    CHECK(v.shape() == arch.end_to_end_shape());
    const auto scaled = rescale<Rational>(theta, lambda);
    CHECK(compose(arch, scaled) == prod * v);

    // additivity in one layer
    auto other = theta;
    for (auto& x : other[0].entries()) x = rnd_rational(rng);
    auto sum = theta;
    for (std::size_t i = 0; i < sum[0].size(); ++i) sum[0][i] += other[0][i];
    const auto vo = compose(arch, other);
    auto expected = v;
    for (std::size_t i = 0; i < v.size(); ++i) expected[i] += vo[i];
    CHECK(compose(arch, sum) == expected);
  }
}

TEST_CASE("parameter shape mismatch") {
  const auto arch = Architecture::one_dimensional({3, 2}, {2, 1});
  CHECK_THROWS_AS(compose(arch, tuple({{1, 2}, {1, 2}})), ShapeMismatch);
  CHECK_THROWS_AS(compose(arch, tuple({{1, 2, 3}})), ShapeMismatch);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0, 2.0}), ShapeMismatch);
}
