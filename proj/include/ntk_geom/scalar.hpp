#pragma once

// Scalar backends. Every algebraic routine in the library is a template over
// the scalar so that worked examples can be checked in exact arithmetic while
// the flows run in binary64.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <string>
#include <string_view>
#include <type_traits>

namespace ntk_geom {

using Rational = boost::multiprecision::number<boost::multiprecision::cpp_rational_backend,
                                               boost::multiprecision::et_off>;

template <typename S>
struct ScalarTraits;

template <>
struct ScalarTraits<double> {
  static constexpr bool exact = false;
  static double to_double(double x) { return x; }
  static double from_double(double x) { return x; }
  static bool is_zero(double x) { return x == 0.0; }
  static double abs(double x) { return std::abs(x); }
  static std::string to_string(double x);
  static double parse(std::string_view text);
};

template <>
struct ScalarTraits<Rational> {
  static constexpr bool exact = true;
  static double to_double(const Rational& x) { return x.convert_to<double>(); }
  // Exact: every finite double is a dyadic rational.
  static Rational from_double(double x) { return Rational(x); }
  static bool is_zero(const Rational& x) { return x == 0; }
  static Rational abs(const Rational& x) { return x < 0 ? Rational(-x) : x; }
  static std::string to_string(const Rational& x) { return x.str(); }
  // Accepts "p", "p/q" and finite decimals such as "-0.125" or "1e-3".
  static Rational parse(std::string_view text);
};

template <typename S>
double to_double(const S& x) {
  return ScalarTraits<S>::to_double(x);
}

template <typename S>
concept ExactScalar = ScalarTraits<S>::exact;

}  // namespace ntk_geom
