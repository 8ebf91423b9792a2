#pragma once

// Linear convolutions on D-dimensional signals, their composition into an
// end-to-end filter, and the equivalent sparse-polynomial multiplication.

#include "ntk_geom/errors.hpp"
#include "ntk_geom/scalar.hpp"

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace ntk_geom {

using Shape = std::vector<int>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Row-major flat index -> multi-index.
void unravel(std::size_t flat, const Shape& shape, std::span<int> index);

class StrideVector {
 public:
  StrideVector() = default;
  explicit StrideVector(std::vector<int> components);
  static StrideVector ones(std::size_t dim) { return StrideVector(std::vector<int>(dim, 1)); }

  std::size_t dim() const { return components_.size(); }
  int operator[](std::size_t m) const { return components_[m]; }
  const std::vector<int>& components() const { return components_; }
  bool all_ones() const;

  friend bool operator==(const StrideVector&, const StrideVector&) = default;

 private:
  std::vector<int> components_;
};

/// Dense tensor with an explicit shape; entries are stored row-major.
template <typename S>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<S> entries) : shape_(std::move(shape)), entries_(std::move(entries)) { validate(); }
  /// One-dimensional convenience constructor.
  explicit Tensor(std::vector<S> entries)
      : shape_{static_cast<int>(entries.size())}, entries_(std::move(entries)) {
    validate();
  }

  static Tensor zeros(Shape shape) {
    const std::size_t n = element_count(shape);
    return Tensor(std::move(shape), std::vector<S>(n, S(0)));
  }

 private:
  void validate() const {
    for (int n : shape_)
      if (n < 1) throw ShapeMismatch("tensor dimensions must be positive, got " + shape_string(shape_));
    if (entries_.size() != element_count(shape_)) {
      throw ShapeMismatch("tensor of shape " + shape_string(shape_) + " needs " +
                          std::to_string(element_count(shape_)) + " entries, got " + std::to_string(entries_.size()));
    }
  }

 public:
  const Shape& shape() const { return shape_; }
  std::size_t dim() const { return shape_.size(); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<S>& entries() const { return entries_; }
  std::vector<S>& entries() { return entries_; }
  const S& operator[](std::size_t i) const { return entries_[i]; }
  S& operator[](std::size_t i) { return entries_[i]; }

  bool is_zero() const {
    for (const auto& x : entries_)
      if (!ScalarTraits<S>::is_zero(x)) return false;
    return true;
  }

  S squared_norm() const {
    S acc(0);
    for (const auto& x : entries_) acc += x * x;
    return acc;
  }

  Tensor& operator*=(const S& s) {
    for (auto& x : entries_) x *= s;
    return *this;
  }
  friend Tensor operator*(const S& s, Tensor t) { return t *= s; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<S> entries_;
};

template <typename S>
using FilterTensor = Tensor<S>;
template <typename S>
using EndToEndFilter = Tensor<S>;

template <typename S>
Tensor<double> to_double(const Tensor<S>& t) {
  std::vector<double> d;
  d.reserve(t.size());
  for (const auto& x : t.entries()) d.push_back(to_double(x));
  return Tensor<double>(t.shape(), std::move(d));
}

struct LayerSpec {
  Shape filter_shape;
  StrideVector stride;
};

class Architecture {
 public:
  /// Validates the layers. The last stride does not influence the end-to-end
  /// filter and is normalized to all ones; a non-trivial value is remembered
  /// as the output stride and reported in warnings().
  explicit Architecture(std::vector<LayerSpec> layers);

  /// 1-D helper: filter sizes and strides.
  static Architecture one_dimensional(const std::vector<int>& sizes, const std::vector<int>& strides);

  std::size_t depth() const { return layers_.size(); }
  std::size_t signal_dim() const { return dim_; }
  const LayerSpec& layer(std::size_t l) const { return layers_.at(l); }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Stride the user supplied for the last layer before normalization.
  const StrideVector& output_stride() const { return output_stride_; }

  /// t_l = s_1 ... s_{l-1} per dimension (zero-based layer index).
  const std::vector<int>& sparse_exponent(std::size_t l) const { return exponents_.at(l); }

  Shape end_to_end_shape() const;
  /// Stride of the end-to-end convolution, including the output stride.
  StrideVector overall_stride() const;

  std::size_t layer_size(std::size_t l) const { return element_count(layers_.at(l).filter_shape); }
  std::size_t param_count() const;
  std::size_t filter_size() const { return element_count(end_to_end_shape()); }
  /// Generic dimension of the neuromanifold: sum of layer sizes minus (H - 1) scalings.
  std::size_t neuromanifold_dim() const { return param_count() - (depth() - 1); }

  /// D = 1 and s_1, ..., s_{H-1} all larger than one.
  bool strides_exceed_one() const;
  /// D > 1 and every layer has at least two filter sizes larger than one.
  bool higher_dim_condition() const;
  /// Hypotheses under which the kernel depends only on the function and delta.
  bool kernel_is_parameter_independent() const;
  /// Layers l < L produce the same polynomial space, so their filters may be swapped.
  bool swap_eligible(std::size_t l, std::size_t L) const;

  friend bool operator==(const Architecture& a, const Architecture& b);

 private:
  std::vector<LayerSpec> layers_;
  std::size_t dim_ = 0;
  StrideVector output_stride_;
  std::vector<std::vector<int>> exponents_;
  std::vector<std::string> warnings_;
};

Shape end_to_end_shape(const Architecture& arch);

template <typename S>
struct ParamTuple {
  std::vector<FilterTensor<S>> filters;

  std::size_t depth() const { return filters.size(); }
  FilterTensor<S>& operator[](std::size_t l) { return filters[l]; }
  const FilterTensor<S>& operator[](std::size_t l) const { return filters[l]; }
  friend bool operator==(const ParamTuple&, const ParamTuple&) = default;
};

template <typename S>
void check_params(const Architecture& arch, const ParamTuple<S>& theta) {
  if (theta.depth() != arch.depth()) {
    throw ShapeMismatch("parameter tuple has " + std::to_string(theta.depth()) + " filters, architecture has " +
                        std::to_string(arch.depth()) + " layers");
  }
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    if (theta[l].shape() != arch.layer(l).filter_shape) {
      throw ShapeMismatch("filter " + std::to_string(l + 1) + " has shape " + shape_string(theta[l].shape()) +
                          ", expected " + shape_string(arch.layer(l).filter_shape));
    }
  }
}

template <typename S>
std::vector<S> flatten(const ParamTuple<S>& theta) {
  std::vector<S> out;
  for (const auto& w : theta.filters) out.insert(out.end(), w.entries().begin(), w.entries().end());
  return out;
}

template <typename S>
ParamTuple<S> unflatten(const Architecture& arch, std::span<const S> flat) {
  if (flat.size() != arch.param_count()) throw ShapeMismatch("flat parameter vector has wrong length");
  ParamTuple<S> theta;
  std::size_t off = 0;
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    const std::size_t n = arch.layer_size(l);
    theta.filters.emplace_back(arch.layer(l).filter_shape, std::vector<S>(flat.begin() + off, flat.begin() + off + n));
    off += n;
  }
  return theta;
}

template <typename S>
ParamTuple<double> to_double(const ParamTuple<S>& theta) {
  ParamTuple<double> out;
  for (const auto& w : theta.filters) out.filters.push_back(to_double(w));
  return out;
}

/// Element of R[(x,y)^t]_{k-1}: coefficient i (multi-index) multiplies
/// prod_m x_m^{t_m (k_m - 1 - i_m)} y_m^{t_m i_m}.
template <typename S>
struct SparsePoly {
  std::vector<int> exponent;  // t, one per dimension
  Tensor<S> coefficients;     // shape k

  std::size_t dim() const { return exponent.size(); }
  /// Degree of homogeneity in the pair (x_m, y_m).
  int degree(std::size_t m) const { return exponent[m] * (coefficients.shape()[m] - 1); }
};

// ---------------------------------------------------------------------------
// Operations

/// Shape of an input tensor that yields an output of shape `out` under (shape, stride).
Shape input_shape_for(const Shape& filter_shape, const StrideVector& stride, const Shape& out);

/// Output shape when applying a filter of `filter_shape` with `stride` to an input of `in`;
/// throws ShapeMismatch if the input does not fit exactly.
Shape output_shape_for(const Shape& filter_shape, const StrideVector& stride, const Shape& in);

template <typename S>
Tensor<S> apply_convolution(const FilterTensor<S>& w, const StrideVector& s, const Tensor<S>& x) {
  if (w.dim() != s.dim() || x.dim() != s.dim()) throw ShapeMismatch("apply_convolution: dimension mismatch");
  const Shape out_shape = output_shape_for(w.shape(), s, x.shape());
  const std::size_t D = s.dim();
  Tensor<S> out = Tensor<S>::zeros(out_shape);

  // Row-major strides of the input.
  std::vector<std::size_t> in_step(D, 1);
  for (std::size_t m = D; m-- > 1;) in_step[m - 1] = in_step[m] * static_cast<std::size_t>(x.shape()[m]);

  std::vector<int> oi(D), wj(D);
  for (std::size_t o = 0; o < out.size(); ++o) {
    unravel(o, out_shape, oi);
    S acc(0);
    for (std::size_t j = 0; j < w.size(); ++j) {
      unravel(j, w.shape(), wj);
      std::size_t flat = 0;
      for (std::size_t m = 0; m < D; ++m) flat += static_cast<std::size_t>(oi[m] * s[m] + wj[m]) * in_step[m];
      acc += w[j] * x[flat];
    }
    out[o] = acc;
  }
  return out;
}

template <typename S>
SparsePoly<S> to_poly(const FilterTensor<S>& w, std::vector<int> t) {
  if (t.size() != w.dim()) throw ShapeMismatch("to_poly: exponent vector length differs from filter dimension");
  for (int x : t)
    if (x < 1) throw ShapeMismatch("to_poly: sparse exponents must be positive");
  return SparsePoly<S>{std::move(t), w};
}

template <typename S>
FilterTensor<S> from_poly(const SparsePoly<S>& p) {
  return p.coefficients;
}

/// Product of two sparse polynomials. The result lives in the ring generated by
/// (x^g, y^g) with g = gcd of the two exponents, per dimension.
template <typename S>
SparsePoly<S> poly_multiply(const SparsePoly<S>& p, const SparsePoly<S>& q) {
  const std::size_t D = p.dim();
  if (q.dim() != D) throw ShapeMismatch("poly_multiply: polynomials have different dimension");
  std::vector<int> g(D);
  Shape k(D);
  for (std::size_t m = 0; m < D; ++m) {
    g[m] = std::gcd(p.exponent[m], q.exponent[m]);
    k[m] = (p.degree(m) + q.degree(m)) / g[m] + 1;
  }
  Tensor<S> out = Tensor<S>::zeros(k);
  std::vector<std::size_t> step(D, 1);
  for (std::size_t m = D; m-- > 1;) step[m - 1] = step[m] * static_cast<std::size_t>(k[m]);

  const auto& pc = p.coefficients;
  const auto& qc = q.coefficients;
  std::vector<int> pi(D), qi(D);
  for (std::size_t a = 0; a < pc.size(); ++a) {
    if (ScalarTraits<S>::is_zero(pc[a])) continue;
    unravel(a, pc.shape(), pi);
    for (std::size_t b = 0; b < qc.size(); ++b) {
      unravel(b, qc.shape(), qi);
      std::size_t flat = 0;
      for (std::size_t m = 0; m < D; ++m) {
        const int y_exp = p.exponent[m] * pi[m] + q.exponent[m] * qi[m];
        flat += static_cast<std::size_t>(y_exp / g[m]) * step[m];
      }
      out[flat] += pc[a] * qc[b];
    }
  }
  return SparsePoly<S>{std::move(g), std::move(out)};
}

/// End-to-end filter mu(theta): the product of the layer polynomials.
template <typename S>
EndToEndFilter<S> compose(const Architecture& arch, const ParamTuple<S>& theta) {
  check_params(arch, theta);
  SparsePoly<S> acc = to_poly(theta[0], arch.sparse_exponent(0));
  for (std::size_t l = 1; l < arch.depth(); ++l) acc = poly_multiply(to_poly(theta[l], arch.sparse_exponent(l)), acc);
  return from_poly(acc);
}

/// Applies the layers one after another, using the output stride for the last layer.
template <typename S>
Tensor<S> apply_network(const Architecture& arch, const ParamTuple<S>& theta, const Tensor<S>& x) {
  check_params(arch, theta);
  Tensor<S> cur = x;
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    const StrideVector& s = (l + 1 == arch.depth()) ? arch.output_stride() : arch.layer(l).stride;
    cur = apply_convolution(theta[l], s, cur);
  }
  return cur;
}

/// Input shape of the network for a requested output shape.
Shape network_input_shape(const Architecture& arch, const Shape& output_shape);

}  // namespace ntk_geom
