#pragma once

// Conserved quantities of gradient flow, the scaling that realizes prescribed
// invariants, the constrained parameter manifold and the induced metric.

#include "ntk_geom/conv_core.hpp"
#include "ntk_geom/dense.hpp"
#include "ntk_geom/ntk.hpp"

#include <span>
#include <vector>

namespace ntk_geom {

using DeltaVector = std::vector<double>;

/// delta_i = ||w_{i+1}||^2 - ||w_i||^2, i = 1..H-1. Empty for H = 1.
template <typename S>
std::vector<S> delta_invariants(const ParamTuple<S>& theta) {
  std::vector<S> d;
  for (std::size_t i = 0; i + 1 < theta.depth(); ++i) d.push_back(theta[i + 1].squared_norm() - theta[i].squared_norm());
  return d;
}

/// All 2^{H-1} scalar tuples with product one that move theta to the target
/// invariants. Tuples differ only by signs; the first one is all positive.
std::vector<std::vector<double>> solve_scaling(const ParamTuple<double>& theta, std::span<const double> delta_target);

/// Positive root of (x+n_1)...(x+n_H) = C on (-min n, inf) by bisection and Newton
/// polishing. Exposed for testing.
double solve_product_equation(std::span<const double> offsets, double C);

template <typename S>
ParamTuple<S> rescale(const ParamTuple<S>& theta, std::span<const S> lambda) {
  if (lambda.size() != theta.depth()) throw ShapeMismatch("rescale: one scalar per layer required");
  ParamTuple<S> out = theta;
  for (std::size_t l = 0; l < out.depth(); ++l) out[l] *= lambda[l];
  return out;
}

/// Scales theta (positive scalars, product one) so that its invariants equal delta.
ParamTuple<double> rescale_to(const ParamTuple<double>& theta, std::span<const double> delta);

/// Basis of T_theta Theta_delta: directions with <w_{i+1}, wdot_{i+1}> = <w_1, wdot_1>.
struct TangentBasis {
  std::vector<ParamTuple<double>> vectors;
  Eigen::MatrixXd as_columns;  // flattened, orthonormal columns
};

TangentBasis tangent_basis_theta_delta(const Architecture& arch, const ParamTuple<double>& theta);

/// Residuals of the tangent-space constraints for one direction.
std::vector<double> tangent_constraint_residuals(const ParamTuple<double>& theta, const ParamTuple<double>& direction);

struct SubmersionReport {
  bool bijective = false;
  int rank = 0;                 // rank of d(mu) restricted to the tangent space
  int expected_dim = 0;         // dimension of the neuromanifold
  bool kernel_intersection_trivial = false;
};

SubmersionReport submersion_check(const Architecture& arch, const ParamTuple<double>& theta);

/// g(vdot1, vdot2) = vdot1^T K^+ vdot2 with K = K^(delta)(v).
double pushforward_metric(const Architecture& arch, const EndToEndFilter<double>& v, std::span<const double> delta,
                          std::span<const double> vdot1, std::span<const double> vdot2);

/// Same form for an explicit kernel. Tangent vectors must lie in col(K) up to
/// a relative component of 1e-8.
double pushforward_metric(const NTKMatrix<double>& K, std::span<const double> vdot1, std::span<const double> vdot2);

/// Delta_i = W_{i+1}^T W_{i+1} - W_i W_i^T for the tuple (W_1, ..., W_H).
template <typename S>
std::vector<DenseMatrix<S>> fc_delta_matrices(const std::vector<DenseMatrix<S>>& W) {
  std::vector<DenseMatrix<S>> out;
  for (std::size_t i = 0; i + 1 < W.size(); ++i) {
    if (W[i + 1].cols() != W[i].rows()) {
      throw ShapeMismatch("fc_delta_matrices: W_" + std::to_string(i + 2) + " and W_" + std::to_string(i + 1) +
                          " are not conformable");
    }
    out.push_back(W[i + 1].transpose() * W[i + 1] - W[i] * W[i].transpose());
  }
  return out;
}

}  // namespace ntk_geom
