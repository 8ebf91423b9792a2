#include "ntk_geom/experiments.hpp"

#include "ntk_geom/fiber.hpp"
#include "ntk_geom/flow.hpp"
#include "ntk_geom/fully_connected.hpp"
#include "ntk_geom/invariants.hpp"
#include "ntk_geom/ntk.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace ntk_geom {

namespace {

using Clock = std::chrono::steady_clock;

ParamTuple<Rational> rational_params(const std::vector<std::vector<Rational>>& filters) {
  ParamTuple<Rational> theta;
  for (const auto& f : filters) theta.filters.emplace_back(f);
  return theta;
}

DenseMatrix<Rational> int_matrix(const std::vector<std::vector<int>>& rows) {
  std::vector<std::vector<Rational>> r;
  for (const auto& row : rows) r.emplace_back(row.begin(), row.end());
  return DenseMatrix<Rational>::from_rows(r);
}

DenseMatrix<double> int_matrix_d(const std::vector<std::vector<int>>& rows) {
  std::vector<std::vector<double>> r;
  for (const auto& row : rows) r.emplace_back(row.begin(), row.end());
  return DenseMatrix<double>::from_rows(r);
}

Rational random_rational(std::mt19937_64& rng, bool nonzero) {
  std::uniform_int_distribution<int> num(-9, 9), den(1, 5);
  for (;;) {
    Rational x(num(rng), den(rng));
    if (!nonzero || x != 0) return x;
  }
}

template <typename S>
std::vector<std::pair<std::size_t, std::size_t>> differing_positions(const DenseMatrix<S>& a, const DenseMatrix<S>& b) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (a(i, j) != b(i, j)) out.emplace_back(i, j);
  return out;
}

double max_abs_diff(const DenseMatrix<double>& a, const DenseMatrix<double>& b) {
  return max_abs(a - b);
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(3);
  os << x;
  return os.str();
}

// K_1 (derivative in the first filter, depends on b) and K_2 (depends on a)
// written out entrywise.
DenseMatrix<Rational> running_k1(const std::vector<Rational>& b) {
  const Rational z(0), b00 = b[0] * b[0], b01 = b[0] * b[1], b11 = b[1] * b[1];
  return DenseMatrix<Rational>::from_rows({{b00, z, b01, z, z},
                                           {z, b00, z, b01, z},
                                           {b01, z, b00 + b11, z, b01},
                                           {z, b01, z, b11, z},
                                           {z, z, b01, z, b11}});
}

DenseMatrix<Rational> running_k2(const std::vector<Rational>& a) {
  const Rational z(0);
  const Rational a00 = a[0] * a[0], a01 = a[0] * a[1], a02 = a[0] * a[2], a11 = a[1] * a[1], a12 = a[1] * a[2],
                 a22 = a[2] * a[2];
  return DenseMatrix<Rational>::from_rows({{a00, a01, a02, z, z},
                                           {a01, a11, a12, z, z},
                                           {a02, a12, a00 + a22, a01, a02},
                                           {z, z, a01, a11, a12},
                                           {z, z, a02, a12, a22}});
}

Architecture running_arch() { return Architecture::one_dimensional({3, 2}, {2, 1}); }

ExperimentReport running_k1k2(std::uint64_t seed) {
  ExperimentReport r;
  const auto arch = running_arch();
  std::mt19937_64 rng(seed);
  const int points = 20;
  r.inputs = {{"arch", arch_to_json(arch)}, {"points", points}};
  int structure_ok = 0, sum_ok = 0;
  Json samples = Json::array();
  for (int p = 0; p < points; ++p) {
    std::vector<Rational> a{random_rational(rng, false), random_rational(rng, false), random_rational(rng, false)};
    std::vector<Rational> b{random_rational(rng, false), random_rational(rng, false)};
    const auto theta = rational_params({a, b});
    const auto terms = layer_kernels(arch, theta);
    const auto K = ntk(arch, theta);
    const bool s = terms[0] == running_k1(b) && terms[1] == running_k2(a);
    structure_ok += s;
    sum_ok += (K == terms[0] + terms[1]);
    if (p < 3) {
      samples.push_back({{"params", params_to_json(theta)},
                         {"K_1", matrix_to_json(terms[0])},
                         {"K_2", matrix_to_json(terms[1])}});
    }
  }
  r.artifacts["samples"] = samples;
  r.check("K_1 and K_2 match the symbolic matrices", structure_ok == points,
          std::to_string(structure_ok) + "/" + std::to_string(points) + " points");
  r.check("K = K_1 + K_2", sum_ok == points, std::to_string(sum_ok) + "/" + std::to_string(points) + " points");
  return r;
}

ExperimentReport running_fiber(std::uint64_t seed) {
  ExperimentReport r;
  const auto arch = running_arch();
  std::mt19937_64 rng(seed);
  const int points = 20;
  r.inputs = {{"arch", arch_to_json(arch)}, {"points", points}};
  int exact_ok = 0, equation_ok = 0, unique_ok = 0;
  for (int p = 0; p < points; ++p) {
    std::vector<Rational> a{random_rational(rng, false), random_rational(rng, true), random_rational(rng, false)};
    std::vector<Rational> b{random_rational(rng, true), random_rational(rng, true)};
    const auto v = compose(arch, rational_params({a, b}));
    const auto pre = two_layer_preimage(v);
    exact_ok += pre && compose(arch, *pre) == v;
    equation_ok += two_layer_equation(v) == 0;
    const auto fib = recover_two_layer(arch, to_double(v));
    unique_ok += fib.unique && fib.class_count() == 1;
  }
  r.check("closed-form preimage reproduces v exactly", exact_ok == points, std::to_string(exact_ok));
  r.check("v satisfies the defining equation", equation_ok == points, std::to_string(equation_ok));
  r.check("fiber is a single scaling class", unique_ok == points, std::to_string(unique_ok));
  return r;
}

ExperimentReport singular_pair(std::uint64_t) {
  ExperimentReport r;
  const auto arch = running_arch();
  const auto t1 = rational_params({{1, 0, 2}, {2, 1}});
  const auto t2 = rational_params({{2, 0, 1}, {1, 2}});
  r.inputs = {{"arch", arch_to_json(arch)}, {"first", params_to_json(t1)}, {"second", params_to_json(t2)}};
  const auto K1 = ntk(arch, t1);
  const auto K2 = ntk(arch, t2);
  const auto E1 = int_matrix({{5, 0, 4, 0, 0}, {0, 4, 0, 2, 0}, {4, 0, 10, 0, 4}, {0, 2, 0, 1, 0}, {0, 0, 4, 0, 5}});
  const auto E2 = int_matrix({{5, 0, 4, 0, 0}, {0, 1, 0, 2, 0}, {4, 0, 10, 0, 4}, {0, 2, 0, 4, 0}, {0, 0, 4, 0, 5}});
  r.artifacts = {{"K_first", matrix_to_json(K1)}, {"K_second", matrix_to_json(K2)}};
  r.check("same end-to-end filter", compose(arch, t1) == compose(arch, t2));
  r.check("both balanced", delta_invariants(t1)[0] == 0 && delta_invariants(t2)[0] == 0);
  r.check("first kernel matches", K1 == E1);
  r.check("second kernel matches", K2 == E2);
  const auto diff = differing_positions(K1, K2);
  const std::vector<std::pair<std::size_t, std::size_t>> expected{{1, 1}, {3, 3}};
  Json pos = Json::array();
  for (auto [i, j] : diff) pos.push_back({i, j});
  r.artifacts["differing_positions"] = pos;
  r.check("kernels differ exactly at (1,1) and (3,3)", diff == expected, pos.dump());
  const int rank1 = numerical_rank(to_eigen(to_double(K1)));
  const int rank2 = numerical_rank(to_eigen(to_double(K2)));
  r.check("both kernels have rank 4", rank1 == 4 && rank2 == 4,
          std::to_string(rank1) + ", " + std::to_string(rank2));
  return r;
}

ExperimentReport stride_one(std::uint64_t) {
  ExperimentReport r;
  const auto arch = Architecture::one_dimensional({3, 2}, {1, 1});
  const EndToEndFilter<double> v(std::vector<double>{0, 1, 1, 0});
  r.inputs = {{"arch", arch_to_json(arch)}, {"filter", v.entries()}, {"delta", {0.0}}};
  const auto fib = enumerate_factorizations(arch, v);
  r.check("three scaling classes", fib.class_count() == 3, std::to_string(fib.class_count()));

  const double q = std::pow(2.0, 0.25);
  struct Expected {
    std::vector<double> a, b;
    DenseMatrix<double> M;
  };
  const std::vector<Expected> expected{
      {{0, q, 0}, {1 / q, 1 / q}, int_matrix_d({{1, 1, 0, 0}, {1, 4, 1, 0}, {0, 1, 4, 1}, {0, 0, 1, 1}})},
      {{1 / q, 1 / q, 0}, {0, q}, int_matrix_d({{1, 1, 0, 0}, {1, 4, 1, 0}, {0, 1, 3, 0}, {0, 0, 0, 2}})},
      {{0, 1 / q, 1 / q}, {q, 0}, int_matrix_d({{2, 0, 0, 0}, {0, 3, 1, 0}, {0, 1, 4, 1}, {0, 0, 1, 1}})}};

  const std::vector<double> zero{0.0};
  std::vector<bool> matched(expected.size(), false);
  double worst_kernel = 0.0, worst_param = 0.0;
  Json kernels = Json::array();
  for (const auto& rep : fib.representatives) {
    const auto fk = kernel_at_scaled(arch, rep, zero);
    kernels.push_back({{"params", params_to_json(fk.representative)}, {"K", matrix_to_json(fk.kernel)}});
    double best = std::numeric_limits<double>::infinity();
    std::size_t which = 0;
    for (std::size_t e = 0; e < expected.size(); ++e) {
      const double d = max_abs_diff(fk.kernel, expected[e].M * (1.0 / std::sqrt(2.0)));
      if (d < best) best = d, which = e;
    }
    matched[which] = true;
    worst_kernel = std::max(worst_kernel, best);
    // Parameters agree up to a simultaneous sign flip of both layers.
    double pd = std::numeric_limits<double>::infinity();
    for (double sign : {1.0, -1.0}) {
      double m = 0.0;
      for (std::size_t j = 0; j < 3; ++j) m = std::max(m, std::abs(sign * fk.representative[0][j] - expected[which].a[j]));
      for (std::size_t j = 0; j < 2; ++j) m = std::max(m, std::abs(sign * fk.representative[1][j] - expected[which].b[j]));
      pd = std::min(pd, m);
    }
    worst_param = std::max(worst_param, pd);
  }
  r.artifacts["factorizations"] = kernels;
  r.residuals = {{"kernel_max_abs", worst_kernel}, {"params_max_abs", worst_param}};
  r.check("each printed kernel is matched once",
          fib.class_count() == 3 && std::all_of(matched.begin(), matched.end(), [](bool b) { return b; }));
  r.check("kernels equal M_i / sqrt(2) within 1e-12", worst_kernel <= 1e-12, fmt(worst_kernel));
  r.check("balanced factorizations carry the 2^(+-1/4) scalings", worst_param <= 1e-12, fmt(worst_param));
  return r;
}

ExperimentReport fc_counterexample(std::uint64_t) {
  ExperimentReport r;
  using M = DenseMatrix<Rational>;
  const Rational half(1, 2);
  const MatrixTuple<Rational> V{M::from_rows({{1, 0}, {0, half}}), M::from_rows({{1, 0}, {0, 2}})};
  const MatrixTuple<Rational> U{M::from_rows({{0, 1}, {half, 0}}), M::from_rows({{0, 2}, {1, 0}})};
  const M I = M::identity(2);
  const M Delta = M::from_rows({{0, 0}, {0, Rational(15, 4)}});
  r.inputs = {{"V", {matrix_to_json(V[0]), matrix_to_json(V[1])}},
              {"U", {matrix_to_json(U[0]), matrix_to_json(U[1])}},
              {"probe", matrix_to_json(I)}};
  r.check("both products are the identity", fc_compose(V) == I && fc_compose(U) == I);
  r.check("both tuples have Delta_1 = diag(0, 15/4)",
          fc_delta_matrices(V)[0] == Delta && fc_delta_matrices(U)[0] == Delta);
  const M KV = fc_ntk_apply(V, I);
  const M KU = fc_ntk_apply(U, I);
  r.artifacts = {{"K_V(I)", matrix_to_json(KV)}, {"K_U(I)", matrix_to_json(KU)}};
  r.check("K_V(I) = diag(2, 17/4)", KV == M::from_rows({{2, 0}, {0, Rational(17, 4)}}));
  r.check("K_U(I) = diag(17/4, 2)", KU == M::from_rows({{Rational(17, 4), 0}, {0, 2}}));
  r.check("kernels differ", !(KV == KU));
  return r;
}

ExperimentReport varying_delta(std::uint64_t) {
  ExperimentReport r;
  const auto arch = running_arch();
  const std::vector<double> a{1, 2, 3}, b{4, 5};
  ParamTuple<double> theta;
  theta.filters = {FilterTensor<double>(a), FilterTensor<double>(b)};
  const auto v = compose(arch, theta);
  const std::vector<double> deltas{-8, -4, -1, 0, 1, 4, 8};
  r.inputs = {{"arch", arch_to_json(arch)}, {"filter", v.entries()}, {"deltas", deltas}};
  const double na = 14.0, nb = 41.0;
  std::vector<double> entries;
  double worst = 0.0;
  for (double d : deltas) {
    const std::vector<double> dv{d};
    const auto K = ntk_of_function(arch, v, dv);
    const double lambda2 = (-d + std::sqrt(d * d + 4 * na * nb)) / (2 * na);
    entries.push_back(K(1, 0));
    worst = std::max(worst, std::abs(K(1, 0) - lambda2 * a[0] * a[1]) / (1 + std::abs(K(1, 0))));
  }
  r.artifacts["entry_2_1"] = entries;
  r.residuals["closed_form_rel"] = worst;
  r.check("entry (2,1) equals lambda^2 a_0 a_1", worst <= 1e-12, fmt(worst));
  bool decreasing = true;
  for (std::size_t i = 1; i < entries.size(); ++i) decreasing = decreasing && entries[i] < entries[i - 1];
  r.check("entry (2,1) strictly decreasing in delta", decreasing);
  return r;
}

using Runner = std::function<ExperimentReport(std::uint64_t)>;

const std::vector<std::pair<std::string, std::pair<std::string, Runner>>>& registry() {
  static const std::vector<std::pair<std::string, std::pair<std::string, Runner>>> r{
      {"running-k1k2", {"running example: per-layer kernels", running_k1k2}},
      {"running-fiber", {"running example: closed-form preimage", running_fiber}},
      {"singular-ntk-pair", {"singular point with two parametrizations", singular_pair}},
      {"stride-one-three-factorizations", {"stride-one filter (0,1,1,0)", stride_one}},
      {"varying-delta", {"kernel depends on delta", varying_delta}},
      {"fc-counterexample", {"fully-connected Delta_1 = diag(0,15/4)", fc_counterexample}},
  };
  return r;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Property suites

double absolute_delta_drift(const Trajectory& traj) {
  double m = 0.0;
  for (const auto& d : traj.deltas)
    for (std::size_t i = 0; i < d.size(); ++i) m = std::max(m, std::abs(d[i] - traj.deltas.front()[i]));
  return m;
}

ExperimentReport suite_delta(const SuiteConfig& c) {
  ExperimentReport r;
  const auto arch = running_arch();
  std::mt19937_64 rng(c.seed);
  FlowOptions opt;
  opt.control.method = Integrator::RK45;
  opt.control.atol = opt.control.rtol = 1e-9;
  opt.t_max = 10.0;
  opt.stop_at_convergence = false;
  opt.log_every = 10;
  double worst = 0.0;
  for (int i = 0; i < c.delta_runs; ++i) {
    const auto L = random_quadratic_loss(arch.filter_size(), c.seed + static_cast<std::uint64_t>(i));
    const auto traj = integrate_param_flow(arch, random_params(arch, rng), L, opt);
    worst = std::max(worst, absolute_delta_drift(traj));
  }
  r.inputs = {{"runs", c.delta_runs}, {"t_max", opt.t_max}, {"tolerance", 1e-9}};
  r.residuals["max_delta_drift"] = worst;
  r.check("delta drift <= 1e-6", worst <= 1e-6, fmt(worst));
  return r;
}

ExperimentReport suite_fiber(const SuiteConfig& c) {
  ExperimentReport r;
  std::mt19937_64 rng(c.seed);
  int ok = 0;
  double worst = 0.0;
  std::string first_failure;
  for (int i = 0; i < c.fiber_trials; ++i) {
    const auto arch = random_1d_architecture(rng, true);
    const auto theta = random_params(arch, rng);
    const auto v = compose(arch, theta);
    bool pass = false;
    try {
      const auto fib = enumerate_factorizations(arch, v);
      pass = fib.class_count() == 1 && same_scaling_class(fib.representatives[0], theta);
      if (!fib.residuals.empty()) worst = std::max(worst, fib.residuals[0]);
    } catch (const Error& e) {
      if (first_failure.empty()) first_failure = e.what();
    }
    ok += pass;
  }
  r.inputs = {{"trials", c.fiber_trials}};
  r.residuals["max_residual"] = worst;
  r.check("round trip recovers the original class", ok == c.fiber_trials,
          std::to_string(ok) + "/" + std::to_string(c.fiber_trials) + (first_failure.empty() ? "" : "; " + first_failure));
  return r;
}

ExperimentReport suite_flow(const SuiteConfig& c) {
  ExperimentReport r;
  const auto arch = running_arch();
  std::mt19937_64 rng(c.seed);
  double worst = 0.0;
  for (int i = 0; i < c.flow_runs; ++i) {
    const auto theta = random_unbalanced_params(arch, rng, 10.0);
    const auto L = random_quadratic_loss(arch.filter_size(), c.seed + 1000 + static_cast<std::uint64_t>(i));
    worst = std::max(worst, compare_flows(arch, theta, L).max_deviation);
  }
  r.inputs = {{"runs", c.flow_runs}, {"t_max", 1.0}, {"step", 1e-3}};
  r.residuals["max_deviation"] = worst;
  r.check("parameter and function flows agree within 1e-4", worst <= 1e-4, fmt(worst));
  return r;
}

ExperimentReport suite_zero(const SuiteConfig& c) {
  ExperimentReport r;
  const auto arch = running_arch();
  const auto data = random_dataset(arch, 2 * arch.filter_size(), c.seed);
  const auto L = dataset_to_quadratic(arch, data);
  const auto rep = zero_avoidance_experiment(arch, L, static_cast<std::size_t>(c.zero_runs), c.seed,
                                             zero_avoidance_options());
  double min_norm = std::numeric_limits<double>::infinity();
  int converged = 0;
  for (const auto& run : rep.runs) {
    min_norm = std::min(min_norm, run.final_function_norm);
    converged += run.converged;
  }
  r.inputs = {{"runs", c.zero_runs}, {"samples", data.size()}};
  r.residuals = {{"min_final_function_norm", rep.runs.empty() ? 0.0 : min_norm},
                 {"nonzero_fraction", rep.nonzero_fraction}};
  r.check("all runs converge", converged == c.zero_runs, std::to_string(converged));
  r.check("all limits have ||mu|| > 1e-4", rep.runs.empty() || rep.nonzero_fraction == 1.0,
          fmt(rep.nonzero_fraction));
  return r;
}

}  // namespace

bool ExperimentReport::passed() const {
  return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.passed; });
}

void ExperimentReport::check(const std::string& name, bool ok, const std::string& detail) {
  assertions.push_back({name, ok, detail});
}

Json ExperimentReport::to_json() const {
  Json as = Json::array();
  for (const auto& a : assertions) as.push_back({{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
  return Json{{"id", id},       {"source", source},       {"seed", seed},   {"inputs", inputs},
              {"artifacts", artifacts}, {"residuals", residuals}, {"assertions", as}, {"passed", passed()},
              {"wall_time", wall_time}};
}

std::string ExperimentReport::summary() const {
  std::ostringstream os;
  os << (passed() ? "PASS " : "FAIL ") << id << " (" << source << ", " << fmt(wall_time) << " s)\n";
  for (const auto& a : assertions) {
    os << "  [" << (a.passed ? "ok" : "FAILED") << "] " << a.name;
    if (!a.detail.empty()) os << ": " << a.detail;
    os << '\n';
  }
  return os.str();
}

std::vector<std::string> experiment_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, entry] : registry()) ids.push_back(id);
  return ids;
}

ExperimentReport reproduce(const std::string& id, std::uint64_t seed) {
  for (const auto& [key, entry] : registry()) {
    if (key != id) continue;
    const auto t0 = Clock::now();
    ExperimentReport r = entry.second(seed);
    r.id = id;
    r.source = entry.first;
    r.seed = seed;
    r.wall_time = seconds_since(t0);
    return r;
  }
  std::string known;
  for (const auto& k : experiment_ids()) known += (known.empty() ? "" : ", ") + k;
  throw UnknownExample("unknown example '" + id + "' (known: " + known + ")");
}

SuiteConfig suite_config_from_json(const Json& j) {
  SuiteConfig c;
  if (!j.is_object()) throw ConfigError("suite config must be a JSON object");
  try {
    if (j.contains("suites")) c.suites = j.at("suites").get<std::vector<std::string>>();
    c.seed = j.value("seed", c.seed);
    const Json sizes = j.value("sizes", Json::object());
    c.delta_runs = sizes.value("delta-conservation", c.delta_runs);
    c.fiber_trials = sizes.value("fiber-roundtrip", c.fiber_trials);
    c.flow_runs = sizes.value("flow-comparison", c.flow_runs);
    c.zero_runs = sizes.value("zero-avoidance", c.zero_runs);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("suite config: ") + e.what());
  }
  for (int n : {c.delta_runs, c.fiber_trials, c.flow_runs, c.zero_runs})
    if (n < 0) throw ConfigError("suite sizes must be non-negative");
  return c;
}

bool SuiteReport::passed() const {
  return std::all_of(suites.begin(), suites.end(), [](const ExperimentReport& r) { return r.passed(); });
}

Json SuiteReport::to_json() const {
  Json s = Json::array();
  for (const auto& r : suites) s.push_back(r.to_json());
  return Json{{"passed", passed()}, {"suites", s}};
}

SuiteReport run_suite(const SuiteConfig& config) {
  static const std::map<std::string, std::pair<std::string, std::function<ExperimentReport(const SuiteConfig&)>>>
      suites{{"delta-conservation", {"invariants along parameter flow", suite_delta}},
             {"fiber-roundtrip", {"root-grouping recovery, strides > 1", suite_fiber}},
             {"flow-comparison", {"parameter flow vs function flow", suite_flow}},
             {"zero-avoidance", {"limits of gradient flow are nonzero", suite_zero}}};
  SuiteReport out;
  for (const auto& name : config.suites) {
    const auto it = suites.find(name);
    if (it == suites.end()) throw ConfigError("unknown suite '" + name + "'");
    const auto t0 = Clock::now();
    ExperimentReport r = it->second.second(config);
    r.id = name;
    r.source = it->second.first;
    r.seed = config.seed;
    r.wall_time = seconds_since(t0);
    out.suites.push_back(std::move(r));
  }
  return out;
}

std::uint64_t seed_from_env() {
  const char* s = std::getenv("NTK_GEOM_SEED");
  if (!s || !*s) return 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw ConfigError(std::string("NTK_GEOM_SEED is not an unsigned integer: ") + s);
  return v;
}

Architecture random_1d_architecture(std::mt19937_64& rng, bool strides_exceed_one, int max_degree) {
  std::uniform_int_distribution<int> depth(2, 3), size(2, 4), stride(2, 3);
  for (;;) {
    const int H = depth(rng);
    std::vector<int> k(H), s(H, 1);
    for (auto& x : k) x = size(rng);
    if (strides_exceed_one)
      for (int l = 0; l + 1 < H; ++l) s[l] = stride(rng);
    int degree = 0, t = 1;
    for (int l = 0; l < H; ++l) {
      degree += t * (k[l] - 1);
      t *= s[l];
    }
    if (degree <= max_degree) return Architecture::one_dimensional(k, s);
  }
}

ParamTuple<double> random_params(const Architecture& arch, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ParamTuple<double> theta;
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    std::vector<double> w(arch.layer_size(l));
    for (auto& x : w) x = n(rng);
    theta.filters.emplace_back(arch.layer(l).filter_shape, std::move(w));
  }
  return theta;
}

ParamTuple<double> random_unbalanced_params(const Architecture& arch, std::mt19937_64& rng, double spread) {
  const auto theta = random_params(arch, rng);
  std::uniform_real_distribution<double> u(-spread, spread);
  std::vector<double> delta(arch.depth() - 1);
  for (auto& d : delta) d = u(rng);
  return rescale_to(theta, delta);
}

}  // namespace ntk_geom
