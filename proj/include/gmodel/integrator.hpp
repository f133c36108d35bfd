#pragma once

// Explicit Runge-Kutta stepping over flat state vectors: classical RK4 with a
// fixed step and the Dormand-Prince 5(4) embedded pair with step control.
// The driver lands exactly on every requested stop time.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gmodel::ode {

using Vector = std::vector<double>;

enum class Scheme { RK4, AdaptiveRK45 };

inline std::string_view to_string(Scheme s) {
  return s == Scheme::RK4 ? "rk4" : "rk45";
}

inline Scheme parse_scheme(std::string_view name) {
  if (name == "rk4") return Scheme::RK4;
  if (name == "rk45" || name == "dopri5" || name == "ode45") return Scheme::AdaptiveRK45;
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "'");
}

struct StepperConfig {
  Scheme scheme = Scheme::AdaptiveRK45;
  double dt = 1e-3;  // RK4
  double dt_init = 1e-3;
  double dt_min = 1e-12;
  double dt_max = 0.1;
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  // Step-size controller: safety factor and per-step growth clamp.
  double safety = 0.9;
  double min_factor = 0.2;
  double max_factor = 5.0;
};

enum class DriveStatus { Reached, Stopped, StepUnderflow };

struct DriveStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evals = 0;
  double last_dt = 0.0;
  double max_error_ratio = 0.0;  // adaptive: worst accepted err / tolerance
};

inline double sup_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

namespace detail {

inline void axpy_into(Vector& out, const Vector& y, double a, const Vector& x) {
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] + a * x[i];
}

}  // namespace detail

/// One classical RK4 step of size dt. With `carry`, the update is added by
/// compensated summation and `carry` accumulates the lost low-order bits, so
/// long fixed-step runs do not build up a roundoff floor.
template <class Rhs>
void rk4_step(Rhs& rhs, const Vector& y, double dt, Vector& y_next,
              std::array<Vector, 5>& work, Vector* carry = nullptr) {
  auto& [k1, k2, k3, k4, tmp] = work;
  for (auto* v : {&k1, &k2, &k3, &k4, &tmp}) v->resize(y.size());
  rhs(y, k1);
  detail::axpy_into(tmp, y, 0.5 * dt, k1);
  rhs(tmp, k2);
  detail::axpy_into(tmp, y, 0.5 * dt, k2);
  rhs(tmp, k3);
  detail::axpy_into(tmp, y, dt, k3);
  rhs(tmp, k4);
  y_next.resize(y.size());
  if (carry == nullptr) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      y_next[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return;
  }
  carry->resize(y.size(), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double inc = dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) + (*carry)[i];
    y_next[i] = y[i] + inc;
    (*carry)[i] = inc - (y_next[i] - y[i]);
  }
}

/// Dormand-Prince 5(4) tableau. The fifth-order solution is propagated and
/// the stage-7 derivative is reused as stage 1 of the next step (FSAL).
struct DormandPrince {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b* (fifth minus fourth order weights)
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  /// Advances y by dt given k1 = f(y). On return y_next holds the 5th-order
  /// solution, k7 = f(y_next), err the embedded error estimate.
  template <class Rhs>
  void step(Rhs& rhs, const Vector& y, const Vector& k1, double dt, Vector& y_next,
            Vector& k7, Vector& err) {
    const std::size_t n = y.size();
    for (auto* v : {&k2, &k3, &k4, &k5, &k6, &tmp}) v->resize(n);
    y_next.resize(n);
    k7.resize(n);
    err.resize(n);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + dt * a21 * k1[i];
    rhs(tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + dt * (a31 * k1[i] + a32 * k2[i]);
    rhs(tmp, k3);
    for (std::size_t i = 0; i < n; ++i) {
      tmp[i] = y[i] + dt * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    }
    rhs(tmp, k4);
    for (std::size_t i = 0; i < n; ++i) {
      tmp[i] = y[i] + dt * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    }
    rhs(tmp, k5);
    for (std::size_t i = 0; i < n; ++i) {
      tmp[i] = y[i] + dt * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                            a65 * k5[i]);
    }
    rhs(tmp, k6);
    for (std::size_t i = 0; i < n; ++i) {
      y_next[i] = y[i] + dt * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] +
                               b6 * k6[i]);
    }
    rhs(y_next, k7);
    for (std::size_t i = 0; i < n; ++i) {
      err[i] = dt * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                     e7 * k7[i]);
    }
  }

  Vector k2, k3, k4, k5, k6, tmp;
};

/// Integrates y from t0 through the increasing `stops` (last one is the end
/// time), landing exactly on each. `observer(t, y, at_stop)` runs after every
/// accepted step and returns false to halt. Exceptions thrown by `rhs`
/// propagate; y and t then hold the last accepted state.
template <class Rhs, class Observer>
DriveStatus drive(Rhs&& rhs, Vector& y, double& t, std::span<const double> stops,
                  const StepperConfig& cfg, Observer&& observer, DriveStats& stats) {
  auto counted_rhs = [&](const Vector& x, Vector& dx) {
    ++stats.rhs_evals;
    rhs(x, dx);
  };
  Vector y_next;

  if (cfg.scheme == Scheme::RK4) {
    std::array<Vector, 5> work;
    Vector carry(y.size(), 0.0);
    for (double stop : stops) {
      const double span = stop - t;
      if (span <= 0.0) continue;
      // Uniform sub-steps of size <= dt that end exactly on the stop.
      const long n_steps =
          std::max(1L, static_cast<long>(std::ceil(span / cfg.dt - 1e-9)));
      const double h = span / static_cast<double>(n_steps);
      const double t_start = t;
      for (long i = 1; i <= n_steps; ++i) {
        rk4_step(counted_rhs, y, h, y_next, work, &carry);
        y.swap(y_next);
        t = (i == n_steps) ? stop : t_start + static_cast<double>(i) * h;
        ++stats.accepted;
        stats.last_dt = h;
        if (!observer(t, y, i == n_steps)) return DriveStatus::Stopped;
      }
    }
    return DriveStatus::Reached;
  }

  DormandPrince dp;
  Vector k1(y.size()), k7, err;
  counted_rhs(y, k1);
  double dt = std::min(cfg.dt_init, cfg.dt_max);
  for (double stop : stops) {
    while (t < stop) {
      if (dt < cfg.dt_min) return DriveStatus::StepUnderflow;
      const bool clipped = t + dt >= stop;
      const double h = clipped ? stop - t : dt;

      dp.step(counted_rhs, y, k1, h, y_next, k7, err);
      const double scale =
          cfg.abs_tol + cfg.rel_tol * std::max(sup_abs(y), sup_abs(y_next));
      double ratio = sup_abs(err) / scale;
      if (!std::isfinite(ratio) || !std::isfinite(sup_abs(y_next))) {
        ratio = std::numeric_limits<double>::infinity();
      }

      if (ratio <= 1.0) {
        y.swap(y_next);
        k1.swap(k7);
        t = clipped ? stop : t + h;
        ++stats.accepted;
        stats.last_dt = h;
        stats.max_error_ratio = std::max(stats.max_error_ratio, ratio);
        const double factor =
            ratio == 0.0 ? cfg.max_factor
                         : std::clamp(cfg.safety * std::pow(ratio, -0.2),
                                      cfg.min_factor, cfg.max_factor);
        // A clipped step says little about the admissible size; keep dt.
        if (!clipped || h >= dt) dt = std::min(dt * factor, cfg.dt_max);
        if (!observer(t, y, clipped)) return DriveStatus::Stopped;
      } else {
        ++stats.rejected;
        const double factor =
            std::isfinite(ratio)
                ? std::clamp(cfg.safety * std::pow(ratio, -0.2), cfg.min_factor, 1.0)
                : cfg.min_factor;
        dt = h * factor;
      }
    }
  }
  return DriveStatus::Reached;
}

}  // namespace gmodel::ode
