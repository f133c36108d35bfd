#pragma once

// Time evolution of any ModelSpec with snapshots, diagnostics and blow-up
// monitoring.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gmodel/diagnostics.hpp"
#include "gmodel/integrator.hpp"
#include "gmodel/models.hpp"

namespace gmodel {

using ode::Scheme;

struct IntegratorConfig {
  Scheme scheme = Scheme::AdaptiveRK45;
  double t_end = 1.0;
  double dt = 1e-3;  // RK4 step
  double dt_init = 1e-3;
  double dt_min = 1e-12;
  double dt_max = 0.1;
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  double snapshot_stride = 0.1;
  bool diagnostics_every_step = false;
  BlowupPolicy blowup;

  void validate() const {
    if (!(t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
    if (!(snapshot_stride > 0.0)) throw std::invalid_argument("snapshot_stride must be positive");
    if (scheme == Scheme::RK4 && !(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (scheme == Scheme::AdaptiveRK45) {
      if (!(dt_min > 0.0 && dt_min <= dt_init && dt_init <= dt_max)) {
        throw std::invalid_argument("adaptive steps require 0 < dt_min <= dt_init <= dt_max");
      }
      if (!(abs_tol > 0.0 && rel_tol > 0.0)) {
        throw std::invalid_argument("tolerances must be positive");
      }
    }
  }

  ode::StepperConfig stepper() const {
    ode::StepperConfig c;
    c.scheme = scheme;
    c.dt = dt;
    c.dt_init = dt_init;
    c.dt_min = dt_min;
    c.dt_max = dt_max;
    c.abs_tol = abs_tol;
    c.rel_tol = rel_tol;
    return c;
  }
};

enum class Termination { ReachedTEnd, BlowupSuspected, PicardDiverged, StepUnderflow };

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::ReachedTEnd: return "ReachedTEnd";
    case Termination::BlowupSuspected: return "BlowupSuspected";
    case Termination::PicardDiverged: return "PicardDiverged";
    case Termination::StepUnderflow: return "StepUnderflow";
  }
  return "unknown";
}

inline Termination parse_termination(std::string_view s) {
  for (auto t : {Termination::ReachedTEnd, Termination::BlowupSuspected,
                 Termination::PicardDiverged, Termination::StepUnderflow}) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown termination '" + std::string(s) + "'");
}

struct IntegrationStats {
  long steps_accepted = 0;
  long steps_rejected = 0;
  long rhs_evals = 0;
  long implicit_solves = 0;
  double max_implicit_residual = 0.0;  // conduit/magma/eps-full Picard solves
  int max_implicit_iterations = 0;
  double max_error_ratio = 0.0;
};

/// Recorded evolution. `snapshots` holds the observable field (g, u, h, or
/// h0 + eps h1 for the cascade); cascade runs also keep the full state.
struct Trajectory {
  std::vector<double> times;
  std::vector<RealField> snapshots;
  std::vector<CascadeState> cascade_snapshots;
  std::vector<DiagnosticsRecord> diagnostics;
  Termination termination = Termination::ReachedTEnd;
  std::string termination_detail;
  std::optional<BlowupReason> blowup_reason;
  IntegrationStats stats;
};

using InitialState = std::variant<RealField, CascadeState>;

namespace detail {

// Flattens a model into y' = f(y) over std::vector<double>.
class ModelSystem {
 public:
  ModelSystem(const ModelSpec& spec, const PeriodicGrid& grid, IntegrationStats& stats)
      : spec_(spec), grid_(grid), stats_(stats) {}

  std::size_t n() const { return grid_.n_points(); }

  void operator()(const ode::Vector& y, ode::Vector& dy) {
    if (!std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); })) {
      // Let the step controller reject the step.
      std::fill(dy.begin(), dy.end(), std::numeric_limits<double>::quiet_NaN());
      return;
    }
    const std::size_t np = n();
    auto field = [&](std::size_t offset) {
      return RealField(grid_, std::vector<double>(y.begin() + static_cast<long>(offset),
                                                  y.begin() + static_cast<long>(offset + np)));
    };
    auto store = [&](const RealField& f, std::size_t offset) {
      std::copy(f.values().begin(), f.values().end(), dy.begin() + static_cast<long>(offset));
    };
    switch (spec_.kind) {
      case ModelKind::GModel:
        store(gmodel_rhs(field(0)), 0);
        break;
      case ModelKind::Conduit:
      case ModelKind::Magma:
        record(velocity_solve_detailed(field(0), spec_));
        store(last_value_, 0);
        break;
      case ModelKind::EpsFull:
        record(eps_full_solve(field(0), spec_.epsilon, spec_));
        store(last_value_, 0);
        break;
      case ModelKind::EpsCascade: {
        const CascadeState d = cascade_rhs({field(0), field(np)});
        store(d.h0, 0);
        store(d.h1, np);
        break;
      }
    }
  }

  RealField observable(const ode::Vector& y) const {
    const std::size_t np = n();
    RealField f(grid_, std::vector<double>(y.begin(), y.begin() + static_cast<long>(np)));
    if (spec_.kind == ModelKind::EpsCascade) {
      for (std::size_t j = 0; j < np; ++j) f[j] += spec_.epsilon * y[np + j];
    }
    return f;
  }

  CascadeState cascade(const ode::Vector& y) const {
    const std::size_t np = n();
    return {RealField(grid_, std::vector<double>(y.begin(), y.begin() + static_cast<long>(np))),
            RealField(grid_, std::vector<double>(y.begin() + static_cast<long>(np), y.end()))};
  }

 private:
  void record(ImplicitSolve&& s) {
    ++stats_.implicit_solves;
    stats_.max_implicit_residual = std::max(stats_.max_implicit_residual, s.residual);
    stats_.max_implicit_iterations = std::max(stats_.max_implicit_iterations, s.iterations);
    last_value_ = std::move(s.value);
  }

  ModelSpec spec_;
  PeriodicGrid grid_;
  IntegrationStats& stats_;
  RealField last_value_{grid_};
};

inline void check_initial(const ModelSpec& spec, const RealField& f, const char* what) {
  if (!f.all_finite()) throw std::invalid_argument(std::string(what) + " is not finite");
  if (spec.kind == ModelKind::GModel || spec.kind == ModelKind::EpsCascade) {
    const double m = mean(f);
    if (std::abs(m) > 1e-10 * std::max(1.0, sup_norm(f))) {
      throw std::invalid_argument(std::string(what) + " must have zero mean (mean = " +
                                  format_number(m) + ")");
    }
  }
  if (spec.is_conduit_family()) {
    const double min_u = *std::min_element(f.values().begin(), f.values().end());
    if (!(min_u > 0.0)) throw std::invalid_argument("initial u must be strictly positive");
  }
  if (spec.kind == ModelKind::EpsFull) {
    for (double h : f.values()) {
      if (!(1.0 + spec.epsilon * h > 0.0)) {
        throw std::invalid_argument("initial 1 + eps h must be strictly positive");
      }
    }
  }
}

inline std::vector<double> stop_times(const IntegratorConfig& cfg) {
  std::vector<double> stops;
  for (long i = 1;; ++i) {
    const double t = static_cast<double>(i) * cfg.snapshot_stride;
    if (t >= cfg.t_end * (1.0 - 1e-12)) break;
    stops.push_back(t);
  }
  stops.push_back(cfg.t_end);
  return stops;
}

}  // namespace detail

/// Evolves `initial` under `spec`. Solver failures end the run with the
/// partial trajectory and a termination reason; invalid input throws.
inline Trajectory integrate(const ModelSpec& spec, const InitialState& initial,
                            const IntegratorConfig& config) {
  spec.validate();
  config.validate();

  const bool cascade = spec.kind == ModelKind::EpsCascade;
  if (cascade != std::holds_alternative<CascadeState>(initial)) {
    throw std::invalid_argument(cascade ? "cascade model needs a CascadeState"
                                        : "model needs a RealField initial state");
  }

  ode::Vector y;
  PeriodicGrid grid = cascade ? std::get<CascadeState>(initial).h0.grid()
                              : std::get<RealField>(initial).grid();
  if (cascade) {
    const auto& c = std::get<CascadeState>(initial);
    require_same_grid(c.h0.grid(), c.h1.grid());
    detail::check_initial(spec, c.h0, "initial h0");
    y.assign(c.h0.values().begin(), c.h0.values().end());
    y.insert(y.end(), c.h1.values().begin(), c.h1.values().end());
  } else {
    const auto& f = std::get<RealField>(initial);
    detail::check_initial(spec, f, "initial field");
    y.assign(f.values().begin(), f.values().end());
  }

  Trajectory traj;
  detail::ModelSystem system(spec, grid, traj.stats);
  BlowupPolicy policy = config.blowup;
  policy.n_points = grid.n_points();
  policy.check_positivity = spec.is_conduit_family();

  double t = 0.0;
  std::optional<DiagnosticsRecord> first;
  auto push = [&](double time, const ode::Vector& state, const DiagnosticsRecord& rec) {
    traj.times.push_back(time);
    traj.snapshots.push_back(system.observable(state));
    if (cascade) traj.cascade_snapshots.push_back(system.cascade(state));
    traj.diagnostics.push_back(rec);
  };
  auto flag_blowup = [&](const BlowupSuspicion& s) {
    traj.termination = Termination::BlowupSuspected;
    traj.blowup_reason = s.reason;
    traj.termination_detail = std::string(to_string(s.reason)) + ": " + s.detail;
  };

  first = compute_diagnostics(t, system.observable(y));
  push(t, y, *first);

  auto observer = [&](double time, const ode::Vector& state, bool at_stop) {
    if (!at_stop && !config.diagnostics_every_step) return true;
    const DiagnosticsRecord rec = compute_diagnostics(time, system.observable(state));
    const auto suspicion = check_blowup(rec, *first, policy);
    if (at_stop || suspicion) push(time, state, rec);
    if (suspicion) {
      flag_blowup(*suspicion);
      return false;
    }
    return true;
  };

  auto record_failure_state = [&]() {
    if (traj.times.back() < t) push(t, y, compute_diagnostics(t, system.observable(y)));
  };

  const std::vector<double> stops = detail::stop_times(config);
  ode::DriveStats stats;
  try {
    const auto status = ode::drive(system, y, t, stops, config.stepper(), observer, stats);
    if (status == ode::DriveStatus::StepUnderflow) {
      // Step collapse next to a flagged state is reported as the blow-up.
      record_failure_state();
      const std::string detail = "adaptive step fell below dt_min at t = " + format_number(t);
      if (auto s = check_blowup(traj.diagnostics.back(), *first, policy)) {
        s->detail += "; " + detail;
        flag_blowup(*s);
      } else {
        traj.termination = Termination::StepUnderflow;
        traj.termination_detail = detail;
      }
    }
  } catch (const PicardDiverged& e) {
    traj.termination = Termination::PicardDiverged;
    traj.termination_detail = e.what();
    record_failure_state();
  } catch (const NonPositiveU& e) {
    flag_blowup({BlowupReason::Positivity, t, e.what()});
    record_failure_state();
  }

  traj.stats.steps_accepted = stats.accepted;
  traj.stats.steps_rejected = stats.rejected;
  traj.stats.rhs_evals = stats.rhs_evals;
  traj.stats.max_error_ratio = stats.max_error_ratio;
  return traj;
}

}  // namespace gmodel
