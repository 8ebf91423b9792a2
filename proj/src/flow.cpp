#include "ntk_geom/flow.hpp"

#include "ntk_geom/fiber.hpp"
#include "ntk_geom/invariants.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ntk_geom {

namespace {

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double a : x) s += a * a;
  return std::sqrt(s);
}

Tensor<double> basis_filter(const Shape& shape, std::size_t j) {
  auto e = Tensor<double>::zeros(shape);
  e[j] = 1.0;
  return e;
}

// Bookkeeping shared by both flows.
struct Recorder {
  Recorder(Trajectory& t, const FlowOptions& o) : traj(t), opt(o) {}

  Trajectory& traj;
  const FlowOptions& opt;
  std::vector<double> delta0;
  double prev_loss = 0.0;
  std::size_t step = 0;
  bool last_logged = false;

  void record(double t, double loss, double grad_norm, const std::vector<double>& delta, const std::vector<double>& v) {
    if (step == 0) {
      delta0 = delta;
    } else {
      const double inc = loss - prev_loss;
      if (inc > opt.monotone_tol * std::max(1.0, std::abs(prev_loss))) traj.loss_monotone = false;
      traj.max_loss_increase = std::max(traj.max_loss_increase, inc);
    }
    for (std::size_t i = 0; i < delta.size(); ++i) {
      const double drift = std::abs(delta[i] - delta0[i]) / (1.0 + std::abs(delta0[i]));
      traj.max_delta_drift = std::max(traj.max_delta_drift, drift);
    }
    prev_loss = loss;
    const bool converged = grad_norm < opt.grad_tol;
    last_logged = step % std::max<std::size_t>(1, opt.log_every) == 0 || converged;
    if (last_logged) push(t, loss, grad_norm, delta, v);
    pending = {t, loss, grad_norm, delta, v};
    ++step;
    traj.steps = step - 1;
    traj.converged = converged;
  }

  void finish() {
    if (!last_logged && step > 0) push(pending.t, pending.loss, pending.grad, pending.delta, pending.v);
    traj.drift_flagged = traj.max_delta_drift > opt.drift_tol;
  }

  struct Pending {
    double t = 0, loss = 0, grad = 0;
    std::vector<double> delta, v;
  } pending;

  void push(double t, double loss, double grad_norm, const std::vector<double>& delta, const std::vector<double>& v) {
    traj.times.push_back(t);
    traj.losses.push_back(loss);
    traj.grad_norms.push_back(grad_norm);
    traj.deltas.push_back(delta);
    traj.functions.push_back(v);
  }
};

}  // namespace

void validate_loss(const QuadraticLoss& L) {
  const std::size_t k = L.u.size();
  if (L.A.rows() != k || L.A.cols() != k) throw ShapeMismatch("loss: A must be k x k with k = length of u");
  const Eigen::MatrixXd A = to_eigen(L.A);
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff())) {
    throw DegenerateData("loss: A is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
  const auto& ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff()))) {
    throw DegenerateData("loss: A is not positive definite (smallest eigenvalue " + std::to_string(ev.minCoeff()) + ")");
  }
}

Dataset random_dataset(const Architecture& arch, std::size_t n, std::uint64_t seed, Shape output_shape) {
  if (output_shape.empty()) output_shape.assign(arch.signal_dim(), 1);
  const Shape in_shape = network_input_shape(arch, output_shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    auto x = Tensor<double>::zeros(in_shape);
    for (auto& e : x.entries()) e = normal(rng);
    auto y = Tensor<double>::zeros(output_shape);
    for (auto& e : y.entries()) e = normal(rng);
    d.inputs.push_back(std::move(x));
    d.outputs.push_back(std::move(y));
  }
  return d;
}

double dataset_loss(const Architecture& arch, const ParamTuple<double>& theta, const Dataset& data) {
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto out = apply_network(arch, theta, data.inputs[i]);
    if (out.shape() != data.outputs[i].shape()) throw ShapeMismatch("dataset output shape does not match the network");
    for (std::size_t j = 0; j < out.size(); ++j) s += (out[j] - data.outputs[i][j]) * (out[j] - data.outputs[i][j]);
  }
  return s;
}

double dataset_loss_of_filter(const Architecture& arch, const EndToEndFilter<double>& v, const Dataset& data) {
  const StrideVector stride = arch.overall_stride();
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto out = apply_convolution(v, stride, data.inputs[i]);
    if (out.shape() != data.outputs[i].shape()) throw ShapeMismatch("dataset output shape does not match the network");
    for (std::size_t j = 0; j < out.size(); ++j) s += (out[j] - data.outputs[i][j]) * (out[j] - data.outputs[i][j]);
  }
  return s;
}

QuadraticLoss dataset_to_quadratic(const Architecture& arch, const Dataset& data) {
  if (data.size() == 0) throw DegenerateData("dataset is empty");
  if (data.outputs.size() != data.inputs.size()) throw ShapeMismatch("dataset: inputs and outputs differ in number");
  const Shape k_shape = arch.end_to_end_shape();
  const std::size_t k = element_count(k_shape);
  const StrideVector stride = arch.overall_stride();

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  double yy = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& X = data.inputs[i];
    const auto& Y = data.outputs[i];
    if (X.shape() != data.inputs.front().shape() || Y.shape() != data.outputs.front().shape()) {
      throw ShapeMismatch("dataset: samples must have uniform shapes");
    }
    const Shape out_shape = output_shape_for(k_shape, stride, X.shape());
    if (out_shape != Y.shape()) {
      throw ShapeMismatch("dataset: output of shape " + shape_string(Y.shape()) + " but the network produces " +
                          shape_string(out_shape));
    }
    Eigen::MatrixXd T(static_cast<Eigen::Index>(Y.size()), static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) {
      const auto col = apply_convolution(basis_filter(k_shape, j), stride, X);
      for (std::size_t r = 0; r < col.size(); ++r) T(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = col[r];
    }
    const Eigen::Map<const Eigen::VectorXd> y(Y.entries().data(), static_cast<Eigen::Index>(Y.size()));
    A += T.transpose() * T;
    b += T.transpose() * y;
    yy += y.squaredNorm();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (llt.info() != Eigen::Success || !(lo > 1e-12 * std::max(hi, 1e-300))) {
    throw DegenerateData("dataset does not determine the filter: A is singular (" + std::to_string(data.size()) +
                         " samples, filter size " + std::to_string(k) + ")");
  }
  const Eigen::VectorXd u = llt.solve(b);
  QuadraticLoss L;
  L.A = from_eigen(A);
  L.u.assign(u.data(), u.data() + u.size());
  L.c = yy - u.dot(A * u);
  return L;
}

QuadraticLoss random_quadratic_loss(std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd M(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) M(i, j) = normal(rng);
  Eigen::MatrixXd A = M * M.transpose() / static_cast<double>(k);
  A.diagonal().array() += 0.5;
  A = 0.5 * (A + A.transpose());
  QuadraticLoss L;
  L.A = from_eigen(A);
  L.u.resize(k);
  for (auto& x : L.u) x = normal(rng);
  return L;
}

SaddleReport strict_saddle_check(const Architecture& arch, const ParamTuple<double>& theta, const QuadraticLoss& L) {
  SaddleReport rep;
  const auto grad = flatten(loss_grad_params(arch, theta, L));
  rep.grad_norm = norm2(grad);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(to_eigen(hessian_params(arch, theta, L)));
  rep.min_eigenvalue = eig.eigenvalues().minCoeff();
  rep.is_strict_saddle = rep.grad_norm < 1e-8 && rep.min_eigenvalue < -1e-8;
  return rep;
}

ParamTuple<double> zero_layer_critical_point(const Architecture& arch, const QuadraticLoss& L) {
  if (!is_two_layer_running_architecture(arch)) {
    throw PreconditionError("zero_layer_critical_point: architecture must be k = (3, 2), s = (2, 1)");
  }
  const auto g = L.A.apply(std::span<const double>(L.u));
  const double p[3] = {g[0], g[1], g[2]};
  const double q[3] = {g[2], g[3], g[4]};
  std::vector<double> a = {p[1] * q[2] - p[2] * q[1], p[2] * q[0] - p[0] * q[2], p[0] * q[1] - p[1] * q[0]};
  if (norm2(a) == 0.0) throw DegenerateData("windows of A u are parallel; no critical point of this form");
  const double n = norm2(a);
  for (auto& x : a) x /= n;
  return ParamTuple<double>{{FilterTensor<double>(a), FilterTensor<double>(std::vector<double>{0.0, 0.0})}};
}

Trajectory integrate_param_flow(const Architecture& arch, const ParamTuple<double>& theta0, const QuadraticLoss& L,
                                const FlowOptions& options) {
  check_params(arch, theta0);
  if (L.u.size() != arch.filter_size()) throw ShapeMismatch("loss dimension does not match the end-to-end filter");
  Trajectory traj;
  traj.space = "parameter";
  traj.method = integrator_name(options.control.method);
  Recorder rec(traj, options);

  auto rhs = [&](double, const State& y, State& dy) {
    const auto theta = unflatten<double>(arch, y);
    const auto grad = flatten(loss_grad_params(arch, theta, L));
    dy.resize(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) dy[i] = -grad[i];
  };
  auto observer = [&](double t, const State& y) {
    const auto theta = unflatten<double>(arch, y);
    const auto v = compose(arch, theta);
    const double loss = loss_value(L, std::span<const double>(v.entries()));
    const double gn = norm2(flatten(loss_grad_params(arch, theta, L)));
    rec.record(t, loss, gn, delta_invariants(theta), v.entries());
    return !(options.stop_at_convergence && gn < options.grad_tol);
  };
  State y = flatten(theta0);
  integrate(rhs, y, 0.0, options.t_max, options.control, observer);
  rec.finish();
  traj.final_state = y;
  return traj;
}

Trajectory integrate_function_flow(const Architecture& arch, const EndToEndFilter<double>& v0,
                                   std::span<const double> delta, const QuadraticLoss& L,
                                   const FlowOptions& options) {
  if (L.u.size() != arch.filter_size()) throw ShapeMismatch("loss dimension does not match the end-to-end filter");
  const std::vector<double> target(delta.begin(), delta.end());
  Trajectory traj;
  traj.space = "function";
  traj.method = integrator_name(options.control.method);
  Recorder rec(traj, options);

  ParamTuple<double> cache = kernel_of_function(arch, v0, target).representative;
  const int full_dim = static_cast<int>(arch.neuromanifold_dim());

  auto kernel_at = [&](const State& v) {
    const EndToEndFilter<double> vt(arch.end_to_end_shape(), v);
    const FiberFit fit = fit_fiber_point(arch, vt, target, cache, 25, 1e-13);
    double scale = 1.0;
    for (double d : target) scale += std::abs(d);
    // Runge-Kutta stage points are off the neuromanifold by O(h^2), so the
    // projection is accepted at a looser residual than an exact fiber point.
    if (fit.residual <= 1e-4 && fit.delta_residual <= 1e-6 * scale) {
      cache = fit.theta;
      traj.max_tracking_residual = std::max(traj.max_tracking_residual, fit.residual);
    } else {
      cache = kernel_of_function(arch, vt, target).representative;
      ++traj.full_recoveries;
    }
    const int rank = numerical_rank(to_eigen(jacobian_blocks(arch, cache).full()));
    if (rank < full_dim) {
      throw SingularPoint("function flow reached a point where the Jacobian has rank " + std::to_string(rank) +
                          " < " + std::to_string(full_dim));
    }
    return ntk(arch, cache);
  };

  auto rhs = [&](double, const State& v, State& dv) {
    const auto K = kernel_at(v);
    const auto g = loss_grad_function(L, std::span<const double>(v));
    dv = K.apply(std::span<const double>(g));
    for (auto& x : dv) x = -x;
  };
  auto observer = [&](double t, const State& v) {
    const auto K = kernel_at(v);
    const auto g = loss_grad_function(L, std::span<const double>(v));
    const auto Kg = K.apply(std::span<const double>(g));
    double gKg = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) gKg += g[i] * Kg[i];
    const double gn = std::sqrt(std::max(0.0, gKg));
    const double loss = loss_value(L, std::span<const double>(v));
    rec.record(t, loss, gn, delta_invariants(cache), v);
    return !(options.stop_at_convergence && gn < options.grad_tol);
  };
  State v = v0.entries();
  integrate(rhs, v, 0.0, options.t_max, options.control, observer);
  rec.finish();
  traj.final_state = v;
  return traj;
}

FlowComparison compare_flows(const Architecture& arch, const ParamTuple<double>& theta0, const QuadraticLoss& L,
                             double t_max, double step) {
  FlowOptions opt;
  opt.control.method = Integrator::RK4;
  opt.control.step = step;
  opt.t_max = t_max;
  opt.stop_at_convergence = false;
  FlowComparison out;
  out.parameter = integrate_param_flow(arch, theta0, L, opt);
  const auto delta = delta_invariants(theta0);
  out.function = integrate_function_flow(arch, compose(arch, theta0), delta, L, opt);
  const std::size_t n = std::min(out.parameter.times.size(), out.function.times.size());
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < out.parameter.functions[i].size(); ++j) {
      const double d = out.parameter.functions[i][j] - out.function.functions[i][j];
      s += d * d;
    }
    if (std::sqrt(s) > out.max_deviation) {
      out.max_deviation = std::sqrt(s);
      out.deviation_time = out.parameter.times[i];
    }
  }
  return out;
}

FlowOptions zero_avoidance_options() {
  FlowOptions opt;
  opt.control.method = Integrator::RK45;
  opt.control.step = 1e-3;
  opt.control.atol = 1e-9;
  opt.control.rtol = 1e-9;
  opt.t_max = 1e3;
  opt.grad_tol = 1e-6;
  opt.log_every = 100;
  return opt;
}

ZeroAvoidanceReport zero_avoidance_experiment(const Architecture& arch, const QuadraticLoss& L, std::size_t n_runs,
                                              std::uint64_t seed, const FlowOptions& options) {
  ZeroAvoidanceReport rep;
  rep.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t nonzero = 0;
  for (std::size_t r = 0; r < n_runs; ++r) {
    ParamTuple<double> theta;
    for (std::size_t l = 0; l < arch.depth(); ++l) {
      auto w = FilterTensor<double>::zeros(arch.layer(l).filter_shape);
      for (auto& x : w.entries()) x = normal(rng);
      theta.filters.push_back(std::move(w));
    }
    const Trajectory traj = integrate_param_flow(arch, theta, L, options);
    const auto final_theta = unflatten<double>(arch, traj.final_state);
    ZeroAvoidanceRun run;
    run.final_function_norm = norm2(compose(arch, final_theta).entries());
    run.min_layer_norm = std::numeric_limits<double>::infinity();
    for (const auto& w : final_theta.filters) {
      const double n = std::sqrt(w.squared_norm());
      run.min_layer_norm = std::min(run.min_layer_norm, n);
      if (n < 1e-3) ++run.small_layers;
    }
    run.max_delta_drift = traj.max_delta_drift;
    run.final_loss = traj.losses.back();
    run.final_grad_norm = traj.grad_norms.back();
    run.t_end = traj.times.back();
    run.converged = traj.converged;
    if (run.final_function_norm > 1e-4) ++nonzero;
    if (run.small_layers > 1) rep.at_most_one_small_layer = false;
    rep.runs.push_back(run);
  }
  rep.nonzero_fraction = n_runs ? static_cast<double>(nonzero) / static_cast<double>(n_runs) : 0.0;
  return rep;
}

}  // namespace ntk_geom
