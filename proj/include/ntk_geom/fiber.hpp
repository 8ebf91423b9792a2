#pragma once

// Recovering filter tuples from an end-to-end filter.
//
// In one dimension the end-to-end filter is the polynomial
//   pi_1(v) = pi_{t_H}(w_H) ... pi_{t_1}(w_1),
// so a parametrization is a partition of the homogeneous roots of pi_1(v)
// into layer groups. Group l holds t_l (k_l - 1) roots, is closed under
// complex conjugation, and is a union of orbits under multiplication by the
// t_l-th roots of unity. In affine coordinate z = y/x each orbit {rho zeta^m}
// corresponds to one root u = rho^{t_l} of the layer polynomial
// sum_j w_{l,j} u^j. Roots at z = 0 and z = infinity come from vanishing
// trailing/leading coefficients and are fixed by every orbit map.

#include "ntk_geom/conv_core.hpp"

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ntk_geom {

struct ProjectiveRootSet {
  struct Cluster {
    std::complex<double> z;
    int multiplicity = 1;
  };
  std::vector<Cluster> finite;  // includes z = 0 when the constant term vanishes
  int at_infinity = 0;          // degree drop of the affine polynomial

  int total_multiplicity() const;
};

/// Roots of v_0 + v_1 z + ... + v_{k-1} z^{k-1} on the projective line, via
/// companion-matrix eigenvalues with Newton polishing and clustering of
/// repeated roots.
ProjectiveRootSet homogeneous_roots(std::span<const double> v, double cluster_tol = 1e-6);

struct FiberResult {
  std::vector<ParamTuple<double>> representatives;  // canonical form, one per scaling class
  bool unique = false;
  std::vector<int> ranks;        // rank of d(mu) at each representative
  std::vector<double> residuals;  // ||mu(theta) - v|| / ||v||
  std::string diagnostics;

  std::size_t class_count() const { return representatives.size(); }
};

/// Each w_l (l < H) scaled to unit norm with first nonzero entry positive;
/// w_H carries the remaining scale and sign so that mu is unchanged.
ParamTuple<double> canonical_representative(const ParamTuple<double>& theta);

/// Flips signs (products preserved) so that the first nonzero entry of each
/// w_l, l < H, is positive. Norms are unchanged.
ParamTuple<double> canonical_signs(const ParamTuple<double>& theta);

bool same_scaling_class(const ParamTuple<double>& a, const ParamTuple<double>& b, double tol = 1e-6);

/// Closed-form preimage for the architecture k = (3, 2), s = (2, 1) at points
/// with v_1 != 0 or v_3 != 0. Exact in rational arithmetic.
template <typename S>
std::optional<ParamTuple<S>> two_layer_preimage(const EndToEndFilter<S>& v) {
  if (v.size() != 5) throw ShapeMismatch("two_layer_preimage: filter must have 5 entries");
  const S zero(0);
  ParamTuple<S> theta;
  if (v[1] != zero && v[3] != zero) {
    theta.filters = {FilterTensor<S>(std::vector<S>{v[0] / v[1], S(1), v[4] / v[3]}),
                     FilterTensor<S>(std::vector<S>{v[1], v[3]})};
  } else if (v[1] == zero && v[3] != zero) {
    theta.filters = {FilterTensor<S>(std::vector<S>{v[2], v[3], v[4]}), FilterTensor<S>(std::vector<S>{S(0), S(1)})};
  } else if (v[3] == zero && v[1] != zero) {
    theta.filters = {FilterTensor<S>(std::vector<S>{v[0], v[1], v[2]}), FilterTensor<S>(std::vector<S>{S(1), S(0)})};
  } else {
    return std::nullopt;
  }
  return theta;
}

/// Defining polynomial v_0 v_3^2 + v_1^2 v_4 - v_1 v_2 v_3 of the k=(3,2), s=(2,1) neuromanifold.
template <typename S>
S two_layer_equation(const EndToEndFilter<S>& v) {
  return v[0] * v[3] * v[3] + v[1] * v[1] * v[4] - v[1] * v[2] * v[3];
}

bool is_two_layer_running_architecture(const Architecture& arch);

/// Fiber for the k = (3, 2), s = (2, 1) architecture. Points with v_1 = v_3 = 0
/// lie on the singular locus and are delegated to enumerate_factorizations
/// with the uniqueness flag cleared.
FiberResult recover_two_layer(const Architecture& arch, const EndToEndFilter<double>& v);

struct RootGroupOptions {
  double orbit_tol = 1e-7;
  double cluster_tol = 1e-6;
  double residual_tol = 1e-8;
  std::size_t max_groupings = 20000;
};

/// All scaling classes of 1-D parametrizations found by root grouping at one
/// orbit tolerance.
FiberResult recover_fiber_rootgroup(const Architecture& arch, const EndToEndFilter<double>& v,
                                    const RootGroupOptions& options = {});

/// Root grouping with orbit tolerance escalation (1e-7 up to 1e-4); returns
/// every scaling class.
FiberResult enumerate_factorizations(const Architecture& arch, const EndToEndFilter<double>& v);

struct InversionOptions {
  int attempts = 64;  // minimum number of random starts
  /// Past `attempts`, keep sampling until at least min_converged starts have
  /// converged and their count is `saturation` times the count at which the
  /// last new class appeared. Capped at max_attempts.
  bool adaptive = true;
  int saturation = 4;
  int min_converged = 512;
  int max_attempts = 65536;
  std::uint64_t seed = 0;
  int max_iterations = 400;
  double residual_tol = 1e-8;
};

/// Multi-start damped least squares on ||mu(theta) - v||^2. Classes are
/// deduplicated up to scaling, signs and (D >= 2) admissible layer swaps.
FiberResult invert_numeric(const Architecture& arch, const EndToEndFilter<double>& v,
                           const InversionOptions& options = {});

struct FiberFit {
  ParamTuple<double> theta;
  double residual = 0.0;  // ||mu(theta) - v|| / ||v||
  double delta_residual = 0.0;
  bool converged = false;
};

/// Gauss-Newton/Levenberg-Marquardt on [mu(theta) - v; delta(theta) - delta]
/// starting from `start`. With `delta` empty only the filter residual is fitted.
FiberFit fit_fiber_point(const Architecture& arch, const EndToEndFilter<double>& v, std::span<const double> delta,
                         const ParamTuple<double>& start, int max_iterations = 50, double tol = 1e-13);

/// Layer permutations generated by admissible swaps (includes the identity).
std::vector<std::vector<std::size_t>> swap_group(const Architecture& arch);

}  // namespace ntk_geom
