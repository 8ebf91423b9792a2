#pragma once

// Registry of worked examples and the randomized property suites.

#include "ntk_geom/conv_core.hpp"
#include "ntk_geom/serialize.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace ntk_geom {

struct Assertion {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentReport {
  std::string id;
  std::string source;  // which worked example this reproduces
  std::uint64_t seed = 0;
  Json inputs = Json::object();
  Json artifacts = Json::object();
  Json residuals = Json::object();
  std::vector<Assertion> assertions;
  double wall_time = 0.0;

  bool passed() const;
  void check(const std::string& name, bool ok, const std::string& detail = {});
  Json to_json() const;
  std::string summary() const;
};

std::vector<std::string> experiment_ids();

/// Runs a registered example; throws UnknownExample for other ids.
ExperimentReport reproduce(const std::string& id, std::uint64_t seed = 0);

struct SuiteConfig {
  std::vector<std::string> suites{"delta-conservation", "fiber-roundtrip", "flow-comparison", "zero-avoidance"};
  std::uint64_t seed = 0;
  int delta_runs = 5;
  int fiber_trials = 20;
  int flow_runs = 3;
  int zero_runs = 10;
};

SuiteConfig suite_config_from_json(const Json& j);

struct SuiteReport {
  std::vector<ExperimentReport> suites;
  bool passed() const;
  Json to_json() const;
};

SuiteReport run_suite(const SuiteConfig& config);

/// NTK_GEOM_SEED when set, otherwise 0.
std::uint64_t seed_from_env();

/// Random 1-D architecture with end-to-end degree at most max_degree. With
/// strides_exceed_one every stride before the last is 2 or 3, otherwise all
/// strides are one.
Architecture random_1d_architecture(std::mt19937_64& rng, bool strides_exceed_one, int max_degree = 10);

/// Standard-normal filters.
ParamTuple<double> random_params(const Architecture& arch, std::mt19937_64& rng);

/// Standard-normal filters with layer l scaled so that delta_l lands in [-spread, spread].
ParamTuple<double> random_unbalanced_params(const Architecture& arch, std::mt19937_64& rng, double spread);

}  // namespace ntk_geom
