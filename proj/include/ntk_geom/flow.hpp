#pragma once

// Squared-error losses, gradient flow in parameter space and on the
// neuromanifold, and second-order analysis at critical points.

#include "ntk_geom/conv_core.hpp"
#include "ntk_geom/dense.hpp"
#include "ntk_geom/ntk.hpp"
#include "ntk_geom/ode.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ntk_geom {

struct Dataset {
  std::vector<Tensor<double>> inputs;
  std::vector<Tensor<double>> outputs;

  std::size_t size() const { return inputs.size(); }
};

/// (v - u)^T A (v - u) + c
template <typename S>
struct BasicQuadraticLoss {
  DenseMatrix<S> A;
  std::vector<S> u;
  S c = S(0);
};
using QuadraticLoss = BasicQuadraticLoss<double>;

/// Throws DegenerateData unless A is symmetric positive definite and sizes agree.
void validate_loss(const QuadraticLoss& L);

/// Random dataset with standard-normal inputs shaped so that each output is a
/// single entry (or `output_shape` when given).
Dataset random_dataset(const Architecture& arch, std::size_t n, std::uint64_t seed, Shape output_shape = {});

/// Sum of squared errors of the network theta on the data.
double dataset_loss(const Architecture& arch, const ParamTuple<double>& theta, const Dataset& data);

/// Same loss written through the end-to-end filter and the overall stride.
double dataset_loss_of_filter(const Architecture& arch, const EndToEndFilter<double>& v, const Dataset& data);

/// Reduction of the dataset loss to a quadratic form in the end-to-end filter.
QuadraticLoss dataset_to_quadratic(const Architecture& arch, const Dataset& data);

/// Random quadratic loss A = M M^T / k + I/2, u standard normal.
QuadraticLoss random_quadratic_loss(std::size_t k, std::uint64_t seed);

template <typename S>
S loss_value(const BasicQuadraticLoss<S>& L, std::span<const S> v) {
  if (v.size() != L.u.size()) throw ShapeMismatch("loss: filter has wrong length");
  std::vector<S> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i] - L.u[i];
  const auto Ar = L.A.apply(std::span<const S>(r));
  S acc = L.c;
  for (std::size_t i = 0; i < r.size(); ++i) acc += r[i] * Ar[i];
  return acc;
}

/// 2 A (v - u)
template <typename S>
std::vector<S> loss_grad_function(const BasicQuadraticLoss<S>& L, std::span<const S> v) {
  if (v.size() != L.u.size()) throw ShapeMismatch("loss gradient: filter has wrong length");
  std::vector<S> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i] - L.u[i];
  auto g = L.A.apply(std::span<const S>(r));
  for (auto& x : g) x *= S(2);
  return g;
}

/// J^T 2A(mu(theta) - u), as a parameter tuple.
template <typename S>
ParamTuple<S> loss_grad_params(const Architecture& arch, const ParamTuple<S>& theta, const BasicQuadraticLoss<S>& L) {
  const auto v = compose(arch, theta);
  const auto g = loss_grad_function(L, std::span<const S>(v.entries()));
  const auto J = jacobian_blocks(arch, theta).full();
  const auto grad = J.transpose().apply(std::span<const S>(g));
  return unflatten<S>(arch, std::span<const S>(grad));
}

template <typename S>
S param_loss(const Architecture& arch, const ParamTuple<S>& theta, const BasicQuadraticLoss<S>& L) {
  const auto v = compose(arch, theta);
  return loss_value(L, std::span<const S>(v.entries()));
}

/// Hessian of theta -> loss(mu(theta)):
///   2 ( d_p mu^T A d_q mu + d_p d_q mu^T A (mu - u) ),
/// where d_p d_q mu vanishes for two coordinates of the same layer.
template <typename S>
DenseMatrix<S> hessian_params(const Architecture& arch, const ParamTuple<S>& theta, const BasicQuadraticLoss<S>& L) {
  check_params(arch, theta);
  const auto J = jacobian_blocks(arch, theta).full();
  const auto v = compose(arch, theta);
  std::vector<S> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i] - L.u[i];
  const auto Ar = L.A.apply(std::span<const S>(r));
  DenseMatrix<S> Hm = J.transpose() * (L.A * J);

  const std::size_t n = arch.param_count();
  std::vector<std::size_t> layer_of(n), index_in(n);
  for (std::size_t l = 0, p = 0; l < arch.depth(); ++l)
    for (std::size_t j = 0; j < arch.layer_size(l); ++j, ++p) {
      layer_of[p] = l;
      index_in[p] = j;
    }
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      if (layer_of[p] == layer_of[q]) continue;
      ParamTuple<S> probe = theta;
      probe[layer_of[p]] = FilterTensor<S>::zeros(theta[layer_of[p]].shape());
      probe[layer_of[p]][index_in[p]] = S(1);
      probe[layer_of[q]] = FilterTensor<S>::zeros(theta[layer_of[q]].shape());
      probe[layer_of[q]][index_in[q]] = S(1);
      const auto second = compose(arch, probe);
      S acc(0);
      for (std::size_t i = 0; i < second.size(); ++i) acc += second[i] * Ar[i];
      Hm(p, q) += acc;
      Hm(q, p) += acc;
    }
  }
  Hm *= S(2);
  return Hm;
}

struct SaddleReport {
  bool is_strict_saddle = false;
  double min_eigenvalue = 0.0;
  double grad_norm = 0.0;
};

SaddleReport strict_saddle_check(const Architecture& arch, const ParamTuple<double>& theta, const QuadraticLoss& L);

/// Critical point (a, 0) for the architecture k = (3, 2), s = (2, 1): a is
/// orthogonal to both windows (g_0, g_1, g_2) and (g_2, g_3, g_4) of g = A u.
ParamTuple<double> zero_layer_critical_point(const Architecture& arch, const QuadraticLoss& L);

struct Trajectory {
  std::string space;   // "parameter" or "function"
  std::string method;  // integrator name
  std::vector<double> times;
  std::vector<double> losses;
  std::vector<double> grad_norms;
  std::vector<std::vector<double>> deltas;
  std::vector<std::vector<double>> functions;  // end-to-end filter at each logged time
  std::vector<double> final_state;             // flattened theta or v

  bool converged = false;        // gradient norm dropped below the threshold
  double max_delta_drift = 0.0;  // max_t max_i |delta_i(t) - delta_i(0)| / (1 + |delta_i(0)|)
  bool drift_flagged = false;
  bool loss_monotone = true;
  double max_loss_increase = 0.0;
  std::size_t steps = 0;
  std::size_t full_recoveries = 0;  // function flow only: fiber recoveries without warm start
  double max_tracking_residual = 0.0;  // function flow only: largest ||mu(theta_hat) - v|| / ||v||
};

struct FlowOptions {
  StepControl control;
  double t_max = 1e3;
  double grad_tol = 1e-8;
  bool stop_at_convergence = true;
  double drift_tol = 1e-6;
  double monotone_tol = 1e-10;
  std::size_t log_every = 1;  // keep every n-th step in the trajectory (always the first and last)
};

Trajectory integrate_param_flow(const Architecture& arch, const ParamTuple<double>& theta0, const QuadraticLoss& L,
                                const FlowOptions& options = {});

/// dv/dt = -K^(delta)(v) 2A(v - u). The fiber point is tracked from step to
/// step by Gauss-Newton on the invariants and the filter; a full recovery is
/// used when tracking fails.
Trajectory integrate_function_flow(const Architecture& arch, const EndToEndFilter<double>& v0,
                                   std::span<const double> delta, const QuadraticLoss& L,
                                   const FlowOptions& options = {});

struct FlowComparison {
  double max_deviation = 0.0;
  double deviation_time = 0.0;
  Trajectory parameter;
  Trajectory function;
};

/// Runs both flows on the same fixed grid (no early stopping) and reports
/// max_t ||mu(theta(t)) - v(t)||.
FlowComparison compare_flows(const Architecture& arch, const ParamTuple<double>& theta0, const QuadraticLoss& L,
                             double t_max = 1.0, double step = 1e-3);

struct ZeroAvoidanceRun {
  double final_function_norm = 0.0;
  double min_layer_norm = 0.0;
  std::size_t small_layers = 0;  // layers with norm below 1e-3
  double max_delta_drift = 0.0;
  double final_loss = 0.0;
  double final_grad_norm = 0.0;
  double t_end = 0.0;
  bool converged = false;
};

struct ZeroAvoidanceReport {
  std::uint64_t seed = 0;
  std::vector<ZeroAvoidanceRun> runs;
  double nonzero_fraction = 0.0;  // runs with ||mu|| > 1e-4; 0 for an empty report
  bool at_most_one_small_layer = true;
};

ZeroAvoidanceReport zero_avoidance_experiment(const Architecture& arch, const QuadraticLoss& L, std::size_t n_runs,
                                              std::uint64_t seed, const FlowOptions& options);

/// Default options for the zero-avoidance runs: RK45 at 1e-9, t_max 1e3,
/// stop once the parameter gradient norm is below 1e-6.
FlowOptions zero_avoidance_options();

}  // namespace ntk_geom
