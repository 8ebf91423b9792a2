#include "ntk_geom/ode.hpp"

#include "ntk_geom/errors.hpp"

#include <algorithm>
#include <cmath>

namespace ntk_geom {

Integrator parse_integrator(const std::string& name) {
  if (name == "rk4") return Integrator::RK4;
  if (name == "rk45") return Integrator::RK45;
  throw PreconditionError("unknown integrator '" + name + "' (expected rk4 or rk45)");
}

std::string integrator_name(Integrator m) { return m == Integrator::RK4 ? "rk4" : "rk45"; }

namespace {

void axpy(State& out, const State& y, double h, std::initializer_list<std::pair<double, const State*>> terms) {
  out = y;
  for (const auto& [c, k] : terms) {
    if (c == 0.0) continue;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += h * c * (*k)[i];
  }
}

IntegrationStats run_rk4(const RightHandSide& f, State& y, double t0, double t1, const StepControl& c,
                         const StepObserver& observer) {
  if (!(c.step > 0.0)) throw PreconditionError("rk4: step must be positive");
  IntegrationStats stats;
  const std::size_t n = y.size();
  State k1(n), k2(n), k3(n), k4(n), tmp(n);
  double t = t0;
  // Integer step counter keeps the grid free of accumulated rounding.
  const double span = t1 - t0;
  const auto steps = static_cast<std::size_t>(std::ceil(span / c.step - 1e-9));
  for (std::size_t s = 0; s < steps; ++s) {
    const double t_next = std::min(t1, t0 + static_cast<double>(s + 1) * c.step);
    const double h = t_next - t;
    f(t, y, k1);
    axpy(tmp, y, h, {{0.5, &k1}});
    f(t + 0.5 * h, tmp, k2);
    axpy(tmp, y, h, {{0.5, &k2}});
    f(t + 0.5 * h, tmp, k3);
    axpy(tmp, y, h, {{1.0, &k3}});
    f(t + h, tmp, k4);
    for (std::size_t i = 0; i < n; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    t = t_next;
    ++stats.accepted;
    if (observer && !observer(t, y)) {
      stats.stopped_by_observer = true;
      break;
    }
  }
  stats.t_end = t;
  return stats;
}

IntegrationStats run_rk45(const RightHandSide& f, State& y, double t0, double t1, const StepControl& c,
                          const StepObserver& observer) {
  // Dormand-Prince coefficients.
  constexpr double a21 = 1.0 / 5.0;
  constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
  constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
  constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
  constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                   a65 = -5103.0 / 18656.0;
  constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0, b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
  constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                   e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

  IntegrationStats stats;
  const std::size_t n = y.size();
  State k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y5(n);
  double t = t0;
  double h = c.step > 0.0 ? c.step : 1e-3;
  f(t, y, k1);
  while (t < t1) {
    if (c.max_step > 0.0) h = std::min(h, c.max_step);
    const bool last = t + h >= t1;
    if (last) h = t1 - t;
    if (h < c.min_step * std::max(1.0, std::abs(t))) {
      throw StepSizeUnderflow("rk45: step size " + std::to_string(h) + " underflow at t = " + std::to_string(t));
    }
    axpy(tmp, y, h, {{a21, &k1}});
    f(t + h / 5.0, tmp, k2);
    axpy(tmp, y, h, {{a31, &k1}, {a32, &k2}});
    f(t + 3.0 * h / 10.0, tmp, k3);
    axpy(tmp, y, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}});
    f(t + 4.0 * h / 5.0, tmp, k4);
    axpy(tmp, y, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
    f(t + 8.0 * h / 9.0, tmp, k5);
    axpy(tmp, y, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
    f(t + h, tmp, k6);
    axpy(y5, y, h, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    f(t + h, y5, k7);

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      const double sc = c.atol + c.rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
      err += (e / sc) * (e / sc);
    }
    err = n ? std::sqrt(err / static_cast<double>(n)) : 0.0;

    if (err <= 1.0) {
      t = last ? t1 : t + h;
      y = y5;
      k1 = k7;  // first-same-as-last
      ++stats.accepted;
      if (observer && !observer(t, y)) {
        stats.stopped_by_observer = true;
        break;
      }
      const double fac = err == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
      h *= fac;
    } else {
      ++stats.rejected;
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
    }
  }
  stats.t_end = t;
  return stats;
}

}  // namespace

IntegrationStats integrate(const RightHandSide& f, State& y, double t0, double t1, const StepControl& control,
                           const StepObserver& observer) {
  if (!(t1 >= t0)) throw PreconditionError("integrate: end time precedes start time");
  if (observer && !observer(t0, y)) {
    IntegrationStats s;
    s.t_end = t0;
    s.stopped_by_observer = true;
    return s;
  }
  if (t1 == t0) return IntegrationStats{0, 0, t0, false};
  return control.method == Integrator::RK4 ? run_rk4(f, y, t0, t1, control, observer)
                                           : run_rk45(f, y, t0, t1, control, observer);
}

}  // namespace ntk_geom
