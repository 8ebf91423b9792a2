// ntk-geom: command-line driver for kernels, fibers, flows and the example registry.

#include "ntk_geom/experiments.hpp"
#include "ntk_geom/fiber.hpp"
#include "ntk_geom/flow.hpp"
#include "ntk_geom/fully_connected.hpp"
#include "ntk_geom/invariants.hpp"
#include "ntk_geom/ntk.hpp"
#include "ntk_geom/serialize.hpp"
#include "ntk_geom/svg.hpp"

#include "CLI11.hpp"

#include <Eigen/QR>

#include <iostream>
#include <optional>
#include <random>

using namespace ntk_geom;

namespace {

constexpr int kOk = 0, kAssertion = 1, kUsage = 2, kNumerical = 3;

// Inline JSON when the argument starts with '{' or '[', otherwise a file path.
Json load(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\n");
  if (first != std::string::npos && (arg[first] == '{' || arg[first] == '[')) return parse_json(arg, "<argument>");
  return read_json_file(arg);
}

void emit(const Json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_text_file(path, j.dump(2) + "\n");
  }
}

int report_exit(bool passed) { return passed ? kOk : kAssertion; }

MatrixTuple<double> random_tuple(std::mt19937_64& rng, const std::vector<std::size_t>& dims) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixTuple<double> W;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseMatrix<double> M(dims[l + 1], dims[l]);
    for (std::size_t i = 0; i < M.rows(); ++i)
      for (std::size_t j = 0; j < M.cols(); ++j) M(i, j) = n(rng);
    W.push_back(M);
  }
  return W;
}

DenseMatrix<double> random_orthogonal(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd M(n, n);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = g(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
  return from_eigen(qr.householderQ() * Eigen::MatrixXd::Identity(n, n));
}

FcLoss random_fc_loss(std::mt19937_64& rng, std::size_t d_out, std::size_t d_in, std::size_t samples) {
  std::normal_distribution<double> n(0.0, 1.0);
  FcLoss L{DenseMatrix<double>(d_in, samples), DenseMatrix<double>(d_out, samples)};
  for (std::size_t j = 0; j < samples; ++j) {
    for (std::size_t i = 0; i < d_in; ++i) L.X(i, j) = n(rng);
    for (std::size_t i = 0; i < d_out; ++i) L.Y(i, j) = n(rng);
  }
  return L;
}

int run_fc(const std::string& check, std::uint64_t seed, const std::string& out) {
  if (check == "counterexample") {
    const auto r = reproduce("fc-counterexample", seed);
    std::cout << r.summary();
    if (!out.empty()) emit(r.to_json(), out);
    return report_exit(r.passed());
  }
  std::mt19937_64 rng(seed);
  if (check == "balanced-flow") {
    const auto W = random_tuple(rng, {2, 2})[0];
    const auto theta = fc_balance(W, 3);
    const auto L = random_fc_loss(rng, 2, 2, 4);
    const auto rep = fc_compare_flows(theta, L, 1.0, 1e-3);
    const bool ok = rep.max_deviation <= 1e-4;
    Json j{{"check", check}, {"seed", seed}, {"max_deviation", rep.max_deviation},
           {"max_delta_drift", rep.max_delta_drift}, {"passed", ok}};
    emit(j, out);
    return report_exit(ok);
  }
  if (check == "orthogonal-fiber") {
    const auto theta = fc_balance(random_tuple(rng, {3, 3})[0], 3);
    const MatrixTuple<double> G{random_orthogonal(rng, 3), random_orthogonal(rng, 3)};
    const auto rep = fc_orthogonal_fiber_check(theta, G);
    const MatrixTuple<double> scaled{DenseMatrix<double>::identity(3) * 2.0, DenseMatrix<double>::identity(3) * 2.0};
    const auto bad = fc_orthogonal_fiber_check(theta, scaled);
    const bool ok = rep.product_preserved && rep.balance_preserved && rep.ntk_preserved && bad.product_preserved &&
                    !bad.balance_preserved;
    Json j{{"check", check},
           {"seed", seed},
           {"orthogonal", {{"product", rep.product_preserved}, {"balance", rep.balance_preserved},
                           {"ntk", rep.ntk_preserved}, {"ntk_error", rep.ntk_error}}},
           {"scaled_identity", {{"product", bad.product_preserved}, {"balance", bad.balance_preserved},
                                {"ntk", bad.ntk_preserved}, {"balance_error", bad.balance_error}}},
           {"passed", ok}};
    emit(j, out);
    return report_exit(ok);
  }
  throw CLI::ValidationError("--check", "expected counterexample, balanced-flow or orthogonal-fiber");
}

// Module checks on the running-example architecture at a random point.
int run_verify(const std::string& check, std::uint64_t seed, const std::string& out) {
  const auto arch = Architecture::one_dimensional({3, 2}, {2, 1});
  std::mt19937_64 rng(seed);
  const auto theta = random_unbalanced_params(arch, rng, 5.0);
  Json j{{"check", check}, {"seed", seed}, {"params", params_to_json(theta)}};
  bool ok = false;
  if (check == "delta-conservation") {
    FlowOptions o;
    o.control.method = Integrator::RK45;
    o.t_max = 10.0;
    const auto traj = integrate_param_flow(arch, theta, random_quadratic_loss(arch.filter_size(), seed), o);
    j["max_delta_drift"] = traj.max_delta_drift;
    ok = !traj.drift_flagged;
  } else if (check == "submersion") {
    const auto r = submersion_check(arch, theta);
    j["rank"] = r.rank;
    j["expected_dim"] = r.expected_dim;
    j["kernel_intersection_trivial"] = r.kernel_intersection_trivial;
    ok = r.bijective;
  } else {
    // g(vdot, vdot) against the squared norm of the tangent preimage of vdot.
    const auto basis = tangent_basis_theta_delta(arch, theta);
    const Eigen::MatrixXd JT = to_eigen(jacobian_blocks(arch, theta).full()) * basis.as_columns;
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::VectorXd c(JT.cols());
    for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = n(rng);
    const Eigen::VectorXd vdot = JT * c;
    const std::vector<double> vd(vdot.data(), vdot.data() + vdot.size());
    const double g = pushforward_metric(arch, compose(arch, theta), delta_invariants(theta), vd, vd);
    const double expected = c.squaredNorm();
    const double rel = std::abs(g - expected) / expected;
    j["metric"] = g;
    j["preimage_norm_squared"] = expected;
    j["relative_error"] = rel;
    ok = rel <= 1e-8;
  }
  j["passed"] = ok;
  emit(j, out);
  return report_exit(ok);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernels, fibers and gradient flows of linear convolutional networks"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  std::string out;

  auto* rep = app.add_subcommand("reproduce", "Run a registered worked example");
  std::string example_id;
  bool list_ids = false;
  rep->add_option("id", example_id, "Example id");
  rep->add_flag("--list", list_ids, "List example ids");
  rep->add_option("--json", out, "Write the report as JSON");

  auto* suite = app.add_subcommand("suite", "Run the property suites");
  std::string config_path;
  suite->add_option("--config", config_path, "Suite configuration (JSON)");
  suite->add_option("--json", out, "Write the report as JSON");

  auto* ntk_cmd = app.add_subcommand("ntk", "Kernel at parameters or of an end-to-end filter");
  std::string arch_arg, params_arg, filter_arg, csv_path;
  std::vector<double> delta;
  bool exact = false;
  ntk_cmd->add_option("--arch", arch_arg, "Architecture (JSON file or inline)")->required();
  auto* params_opt = ntk_cmd->add_option("--params", params_arg, "Filters (JSON file or inline)");
  ntk_cmd->add_option("--filter", filter_arg, "End-to-end filter (JSON file or inline)")->excludes(params_opt);
  ntk_cmd->add_option("--delta", delta, "Invariants delta_1..delta_{H-1}");
  ntk_cmd->add_flag("--exact", exact, "Rational arithmetic (parameters only, no --delta)");
  ntk_cmd->add_option("--csv", csv_path, "Write the kernel as CSV");
  ntk_cmd->add_option("--out,--json", out, "Write the result as JSON");

  auto* fib_cmd = app.add_subcommand("fiber", "Parametrizations of an end-to-end filter");
  std::string method = "auto";
  int attempts = 64;
  fib_cmd->add_option("--arch", arch_arg, "Architecture")->required();
  fib_cmd->add_option("--filter", filter_arg, "End-to-end filter")->required();
  fib_cmd->add_option("--method", method, "rootgroup, numeric or auto")
      ->check(CLI::IsMember({"rootgroup", "numeric", "auto"}));
  fib_cmd->add_option("--attempts", attempts, "Random starts for numeric inversion")->check(CLI::PositiveNumber);
  fib_cmd->add_option("--json", out, "Write the result as JSON");

  auto* flow_cmd = app.add_subcommand("flow", "Gradient flow in parameter or function space");
  std::string init_arg, loss_arg, plot_path, space = "parameter", integrator = "rk45";
  double t_max = 10.0, step = 1e-3, tol = 1e-9;
  bool compare = false;
  flow_cmd->add_option("--arch", arch_arg, "Architecture")->required();
  flow_cmd->add_option("--init", init_arg, "Initial filters")->required();
  flow_cmd->add_option("--loss", loss_arg, "Loss: {A,u,c}, {dataset} or {random}")->required();
  flow_cmd->add_option("--space", space, "parameter or function")->check(CLI::IsMember({"parameter", "function"}));
  flow_cmd->add_option("--method", integrator, "rk4 or rk45")->check(CLI::IsMember({"rk4", "rk45"}));
  flow_cmd->add_option("--t-max", t_max, "Final time")->check(CLI::PositiveNumber);
  flow_cmd->add_option("--step", step, "Step (rk4) or initial step (rk45)")->check(CLI::PositiveNumber);
  flow_cmd->add_option("--tol", tol, "Absolute and relative tolerance (rk45)")->check(CLI::PositiveNumber);
  flow_cmd->add_flag("--compare", compare, "Run both flows on a fixed rk4 grid and report the deviation");
  flow_cmd->add_option("--out", csv_path, "Write the trajectory as CSV");
  flow_cmd->add_option("--plot", plot_path, "Write loss and invariant drift as SVG");
  flow_cmd->add_option("--json", out, "Write the summary as JSON");

  auto* fc_cmd = app.add_subcommand("fc", "Fully-connected checks");
  std::string fc_check;
  fc_cmd->add_option("--check", fc_check, "counterexample, balanced-flow or orthogonal-fiber")
      ->required()
      ->check(CLI::IsMember({"counterexample", "balanced-flow", "orthogonal-fiber"}));
  fc_cmd->add_option("--json", out, "Write the result as JSON");

  auto* verify = app.add_subcommand("verify", "Run every registered example, or one module check");
  std::string verify_check;
  verify->add_option("--check", verify_check, "delta-conservation, submersion or pushforward")
      ->check(CLI::IsMember({"delta-conservation", "submersion", "pushforward"}));
  verify->add_option("--json", out, "Write the result as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    seed = seed_from_env();

    if (*rep) {
      if (list_ids) {
        for (const auto& id : experiment_ids()) std::cout << id << '\n';
        return kOk;
      }
      if (example_id.empty()) throw CLI::RequiredError("id");
      const auto r = reproduce(example_id, seed);
      std::cout << r.summary();
      if (!out.empty()) emit(r.to_json(), out);
      return report_exit(r.passed());
    }

    if (*suite) {
      SuiteConfig c = config_path.empty() ? SuiteConfig{} : suite_config_from_json(read_json_file(config_path));
      if (config_path.empty()) c.seed = seed;
      const auto r = run_suite(c);
      for (const auto& s : r.suites) std::cout << s.summary();
      std::cout << (r.passed() ? "suite passed" : "suite FAILED") << '\n';
      if (!out.empty()) emit(r.to_json(), out);
      return report_exit(r.passed());
    }

    if (*ntk_cmd) {
      const auto arch = arch_from_json(load(arch_arg));
      for (const auto& w : arch.warnings()) std::cerr << "warning: " << w << '\n';
      Json j{{"arch", arch_to_json(arch)}};
      if (exact) {
        if (params_arg.empty() || !delta.empty()) throw ConfigError("--exact needs --params and no --delta");
        const auto theta = params_from_json<Rational>(load(params_arg), arch);
        const auto K = ntk(arch, theta);
        j["kernel"] = matrix_to_json(K);
        if (!csv_path.empty()) write_text_file(csv_path, matrix_to_csv(K));
      } else {
        FunctionKernel fk;
        if (!filter_arg.empty()) {
          if (delta.size() != arch.depth() - 1) throw ConfigError("--filter needs one --delta value per layer pair");
          fk = kernel_of_function(arch, filter_from_json<double>(load(filter_arg), arch), delta);
        } else if (!params_arg.empty()) {
          const auto theta = params_from_json<double>(load(params_arg), arch);
          if (delta.empty()) {
            fk.kernel = ntk(arch, theta);
            fk.representative = theta;
          } else {
            fk = kernel_at_scaled(arch, theta, delta);
          }
        } else {
          throw ConfigError("ntk needs --params or --filter");
        }
        j["kernel"] = matrix_to_json(fk.kernel);
        j["params"] = params_to_json(fk.representative);
        j["delta"] = delta_invariants(fk.representative);
        if (!csv_path.empty()) write_text_file(csv_path, matrix_to_csv(fk.kernel));
      }
      emit(j, out);
      return kOk;
    }

    if (*fib_cmd) {
      const auto arch = arch_from_json(load(arch_arg));
      const auto v = filter_from_json<double>(load(filter_arg), arch);
      FiberResult r;
      const bool numeric = method == "numeric" || (method == "auto" && arch.signal_dim() > 1);
      if (numeric) {
        InversionOptions o;
        o.attempts = attempts;
        o.seed = seed;
        r = invert_numeric(arch, v, o);
      } else if (method == "auto" && is_two_layer_running_architecture(arch)) {
        r = recover_two_layer(arch, v);
      } else {
        r = enumerate_factorizations(arch, v);
      }
      emit(fiber_to_json(r), out);
      return kOk;
    }

    if (*flow_cmd) {
      const auto arch = arch_from_json(load(arch_arg));
      const auto theta0 = params_from_json<double>(load(init_arg), arch);
      const auto L = loss_from_json(load(loss_arg), arch);
      if (compare) {
        const auto c = compare_flows(arch, theta0, L, t_max, step);
        Json j{{"max_deviation", c.max_deviation},
               {"deviation_time", c.deviation_time},
               {"parameter", trajectory_summary(c.parameter)},
               {"function", trajectory_summary(c.function)}};
        if (!csv_path.empty()) write_text_file(csv_path, trajectory_csv(c.parameter));
        if (!plot_path.empty()) write_text_file(plot_path, trajectory_svg(c.parameter));
        emit(j, out);
        return kOk;
      }
      FlowOptions o;
      o.control.method = parse_integrator(integrator);
      o.control.step = step;
      o.control.atol = o.control.rtol = tol;
      o.t_max = t_max;
      const Trajectory traj =
          space == "parameter"
              ? integrate_param_flow(arch, theta0, L, o)
              : integrate_function_flow(arch, compose(arch, theta0),
                                        delta_invariants(theta0), L, o);
      if (!csv_path.empty()) write_text_file(csv_path, trajectory_csv(traj));
      if (!plot_path.empty()) write_text_file(plot_path, trajectory_svg(traj));
      emit(trajectory_summary(traj), out);
      if (traj.drift_flagged) std::cerr << "warning: invariant drift " << traj.max_delta_drift << '\n';
      return kOk;
    }

    if (*fc_cmd) return run_fc(fc_check, seed, out);

    if (*verify) {
      if (!verify_check.empty()) return run_verify(verify_check, seed, out);
      bool all = true;
      for (const auto& id : experiment_ids()) {
        const auto r = reproduce(id, seed);
        std::cout << r.summary();
        all = all && r.passed();
      }
      return report_exit(all);
    }
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const FiberNotFound& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const StepSizeUnderflow& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const SingularPoint& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const NoFactorization& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const AmbiguousGrouping& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
