#include "ntk_geom/conv_core.hpp"
#include "ntk_geom/dense.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

namespace ntk_geom {

std::string ScalarTraits<double>::to_string(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double ScalarTraits<double>::parse(std::string_view text) {
  const auto slash = text.find('/');
  if (slash != std::string_view::npos) {
    return ScalarTraits<Rational>::parse(text).convert_to<double>();
  }
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("cannot parse number '" + std::string(text) + "'");
  }
  return v;
}

namespace {

Rational parse_decimal(std::string_view text) {
  std::string s(text);
  if (s.empty()) throw std::invalid_argument("empty number");
  bool negative = false;
  std::size_t pos = 0;
  if (s[pos] == '+' || s[pos] == '-') {
    negative = s[pos] == '-';
    ++pos;
  }
  boost::multiprecision::cpp_int mantissa = 0;
  int scale = 0;
  bool seen_digit = false, seen_point = false;
  for (; pos < s.size(); ++pos) {
    const char c = s[pos];
    if (c >= '0' && c <= '9') {
      mantissa = mantissa * 10 + (c - '0');
      if (seen_point) --scale;
      seen_digit = true;
    } else if (c == '.' && !seen_point) {
      seen_point = true;
    } else {
      break;
    }
  }
  if (!seen_digit) throw std::invalid_argument("cannot parse number '" + s + "'");
  if (pos < s.size()) {
    if (s[pos] != 'e' && s[pos] != 'E') throw std::invalid_argument("cannot parse number '" + s + "'");
    int e = 0;
    const char* first = s.data() + pos + 1;
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), e);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("cannot parse number '" + s + "'");
    scale += e;
  }
  Rational r(mantissa);
  boost::multiprecision::cpp_int p = boost::multiprecision::pow(boost::multiprecision::cpp_int(10), std::abs(scale));
  if (scale >= 0) {
    r *= Rational(p);
  } else {
    r /= Rational(p);
  }
  return negative ? Rational(-r) : r;
}

}  // namespace

Rational ScalarTraits<Rational>::parse(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) return parse_decimal(text);
  const Rational num = parse_decimal(text.substr(0, slash));
  const Rational den = parse_decimal(text.substr(slash + 1));
  if (den == 0) throw std::invalid_argument("zero denominator in '" + std::string(text) + "'");
  return num / den;
}

int numerical_rank(const Eigen::MatrixXd& m, double rel_cutoff) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_cutoff * sv(0)) ++r;
  return r;
}

// ---------------------------------------------------------------------------

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (int x : shape) n *= static_cast<std::size_t>(x);
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

void unravel(std::size_t flat, const Shape& shape, std::span<int> index) {
  for (std::size_t m = shape.size(); m-- > 0;) {
    const auto n = static_cast<std::size_t>(shape[m]);
    index[m] = static_cast<int>(flat % n);
    flat /= n;
  }
}

StrideVector::StrideVector(std::vector<int> components) : components_(std::move(components)) {
  if (components_.empty()) throw ShapeMismatch("stride vector must have at least one component");
  for (int s : components_)
    if (s < 1) throw ShapeMismatch("stride components must be >= 1");
}

bool StrideVector::all_ones() const {
  for (int s : components_)
    if (s != 1) return false;
  return true;
}

Architecture::Architecture(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeMismatch("architecture needs at least one layer");
  dim_ = layers_.front().filter_shape.size();
  if (dim_ == 0) throw ShapeMismatch("filters must have at least one dimension");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    const std::string tag = "layer " + std::to_string(l + 1);
    if (L.filter_shape.size() != dim_ || L.stride.dim() != dim_) {
      throw ShapeMismatch(tag + ": filter shape and stride must both have dimension " + std::to_string(dim_));
    }
    bool nontrivial = false;
    for (int k : L.filter_shape) {
      if (k < 1) throw ShapeMismatch(tag + ": filter sizes must be positive");
      nontrivial = nontrivial || k > 1;
    }
    if (!nontrivial) throw ShapeMismatch(tag + ": layers whose filter sizes are all one are not allowed");
  }
  output_stride_ = layers_.back().stride;
  if (!output_stride_.all_ones()) {
    warnings_.push_back("last-layer stride " + shape_string(output_stride_.components()) +
                        " does not affect the end-to-end filter; normalized to ones");
    layers_.back().stride = StrideVector::ones(dim_);
  }
  std::vector<int> t(dim_, 1);
  for (const auto& L : layers_) {
    exponents_.push_back(t);
    for (std::size_t m = 0; m < dim_; ++m) t[m] *= L.stride[m];
  }
}

Architecture Architecture::one_dimensional(const std::vector<int>& sizes, const std::vector<int>& strides) {
  if (sizes.size() != strides.size()) throw ShapeMismatch("sizes and strides differ in length");
  std::vector<LayerSpec> layers;
  for (std::size_t l = 0; l < sizes.size(); ++l) layers.push_back({Shape{sizes[l]}, StrideVector({strides[l]})});
  return Architecture(std::move(layers));
}

Shape Architecture::end_to_end_shape() const {
  Shape k(dim_, 0);
  for (std::size_t m = 0; m < dim_; ++m) {
    k[m] = layers_[0].filter_shape[m];
    for (std::size_t l = 1; l < layers_.size(); ++l) k[m] += (layers_[l].filter_shape[m] - 1) * exponents_[l][m];
  }
  return k;
}

Shape end_to_end_shape(const Architecture& arch) { return arch.end_to_end_shape(); }

StrideVector Architecture::overall_stride() const {
  std::vector<int> s(dim_, 1);
  for (std::size_t m = 0; m < dim_; ++m) s[m] = exponents_.back()[m] * output_stride_[m];
  return StrideVector(std::move(s));
}

std::size_t Architecture::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < depth(); ++l) n += layer_size(l);
  return n;
}

bool Architecture::strides_exceed_one() const {
  if (dim_ != 1) return false;
  for (std::size_t l = 0; l + 1 < depth(); ++l)
    if (layers_[l].stride[0] <= 1) return false;
  return true;
}

bool Architecture::higher_dim_condition() const {
  if (dim_ < 2) return false;
  for (const auto& L : layers_) {
    int big = 0;
    for (int k : L.filter_shape) big += k > 1 ? 1 : 0;
    if (big < 2) return false;
  }
  return true;
}

bool Architecture::kernel_is_parameter_independent() const {
  return depth() == 1 || strides_exceed_one() || higher_dim_condition();
}

bool Architecture::swap_eligible(std::size_t l, std::size_t L) const {
  if (l == L || l >= depth() || L >= depth()) return false;
  const auto& a = layers_[l];
  const auto& b = layers_[L];
  if (a.filter_shape != b.filter_shape) return false;
  for (std::size_t m = 0; m < dim_; ++m)
    if (a.filter_shape[m] > 1 && exponents_[l][m] != exponents_[L][m]) return false;
  return true;
}

bool operator==(const Architecture& a, const Architecture& b) {
  if (a.depth() != b.depth() || !(a.output_stride_ == b.output_stride_)) return false;
  for (std::size_t l = 0; l < a.depth(); ++l)
    if (a.layers_[l].filter_shape != b.layers_[l].filter_shape || !(a.layers_[l].stride == b.layers_[l].stride))
      return false;
  return true;
}

Shape input_shape_for(const Shape& filter_shape, const StrideVector& stride, const Shape& out) {
  Shape in(out.size());
  for (std::size_t m = 0; m < out.size(); ++m) in[m] = stride[m] * (out[m] - 1) + filter_shape[m];
  return in;
}

Shape output_shape_for(const Shape& filter_shape, const StrideVector& stride, const Shape& in) {
  if (in.size() != filter_shape.size()) throw ShapeMismatch("input and filter dimensions differ");
  Shape out(in.size());
  for (std::size_t m = 0; m < in.size(); ++m) {
    const int excess = in[m] - filter_shape[m];
    if (excess < 0 || excess % stride[m] != 0) {
      throw ShapeMismatch("input extent " + std::to_string(in[m]) + " in dimension " + std::to_string(m) +
                          " is not of the form s(d-1)+k for filter size " + std::to_string(filter_shape[m]) +
                          " and stride " + std::to_string(stride[m]));
    }
    out[m] = excess / stride[m] + 1;
  }
  return out;
}

Shape network_input_shape(const Architecture& arch, const Shape& output_shape) {
  Shape cur = output_shape;
  for (std::size_t l = arch.depth(); l-- > 0;) {
    const StrideVector& s = (l + 1 == arch.depth()) ? arch.output_stride() : arch.layer(l).stride;
    cur = input_shape_for(arch.layer(l).filter_shape, s, cur);
  }
  return cur;
}

}  // namespace ntk_geom
