#pragma once

#include "ntk_geom/conv_core.hpp"
#include "ntk_geom/dense.hpp"
#include "ntk_geom/experiments.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace test_util {

using namespace ntk_geom;

inline ParamTuple<double> tuple(std::vector<std::vector<double>> filters) {
  ParamTuple<double> t;
  for (auto& f : filters) t.filters.emplace_back(std::move(f));
  return t;
}

inline ParamTuple<Rational> rtuple(const std::vector<std::vector<Rational>>& filters) {
  ParamTuple<Rational> t;
  for (const auto& f : filters) t.filters.emplace_back(f);
  return t;
}

inline Rational rnd_rational(std::mt19937_64& rng, bool nonzero = false) {
  std::uniform_int_distribution<int> num(-9, 9), den(1, 6);
  for (;;) {
    Rational x(num(rng), den(rng));
    if (!nonzero || x != 0) return x;
  }
}

inline std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

inline Tensor<double> normal_tensor(std::mt19937_64& rng, const Shape& shape) {
  return Tensor<double>(shape, normal_vector(rng, element_count(shape)));
}

inline double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  return max_abs_diff(a, b) / std::max(1.0, std::max(norm(a), norm(b)));
}

/// Central-difference gradient of f at x.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

/// Random 2-D architecture with two layers of equal filter shape. With
/// `swap_condition` the first stride is one in every direction where the
/// filter is longer than one; otherwise it is 2 in at least one such direction.
inline Architecture random_2d_two_layer(std::mt19937_64& rng, bool swap_condition) {
  std::uniform_int_distribution<int> k(1, 3), s(1, 3), coin(0, 1);
  Shape shape{k(rng), k(rng)};
  while (shape[0] == 1 && shape[1] == 1) shape = {k(rng), k(rng)};
  std::vector<int> stride(2, 1);
  for (std::size_t m = 0; m < 2; ++m)
    if (shape[m] == 1) stride[m] = s(rng);
  if (!swap_condition) {
    std::vector<std::size_t> long_dims;
    for (std::size_t m = 0; m < 2; ++m)
      if (shape[m] > 1) long_dims.push_back(m);
    stride[long_dims[static_cast<std::size_t>(coin(rng)) % long_dims.size()]] = 2;
  }
  return Architecture({{shape, StrideVector(stride)}, {shape, StrideVector({1, 1})}});
}

}  // namespace test_util
