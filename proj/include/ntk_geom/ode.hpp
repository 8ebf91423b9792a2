#pragma once

// Explicit Runge-Kutta integrators for small dense systems.

#include <functional>
#include <string>
#include <vector>

namespace ntk_geom {

using State = std::vector<double>;
using RightHandSide = std::function<void(double t, const State& y, State& dydt)>;
/// Called at the initial time and after every accepted step. Returning false stops the run.
using StepObserver = std::function<bool(double t, const State& y)>;

enum class Integrator { RK4, RK45 };

struct StepControl {
  Integrator method = Integrator::RK4;
  double step = 1e-3;  // fixed step (RK4) or initial step (RK45)
  double atol = 1e-9;
  double rtol = 1e-9;
  double min_step = 1e-14;
  double max_step = 0.0;  // 0: unbounded
};

struct IntegrationStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  double t_end = 0.0;
  bool stopped_by_observer = false;
};

Integrator parse_integrator(const std::string& name);
std::string integrator_name(Integrator m);

/// Integrates y' = f(t, y) from t0 to t1 in place. Fixed-step RK4 shortens the
/// final step to land on t1. RK45 is Dormand-Prince 5(4) with the usual
/// mixed absolute/relative error norm and throws StepSizeUnderflow when the
/// step falls below min_step.
IntegrationStats integrate(const RightHandSide& f, State& y, double t0, double t1, const StepControl& control,
                           const StepObserver& observer = {});

}  // namespace ntk_geom
