#pragma once

// Cross-model studies: consistency order of the g-model and the first-order
// cascade against the conduit equation, RK4 self-convergence, and a bundled
// self-test of the spectral operators.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmodel/models.hpp"
#include "gmodel/simulation.hpp"
#include "gmodel/spectral.hpp"

namespace gmodel::validation {

/// Exact solution of h_t = -2 N h: mode k rotates by exp(-2ikt/(1+k^2)).
inline RealField linear_flow(const RealField& f, double t) {
  Spectrum s = to_spectrum(f);
  apply_symbol(s, [t](int k) {
    return std::exp(Complex{0.0, -2.0 * t * static_cast<double>(k) / (1.0 + static_cast<double>(k) * k)});
  }, false);
  return to_field(s);
}

/// log(e_i / e_{i+1}) / log(x_i / x_{i+1}) for consecutive pairs.
inline std::vector<double> pair_orders(const std::vector<double>& x, const std::vector<double>& e) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    out.push_back(std::log(e[i] / e[i + 1]) / std::log(x[i] / x[i + 1]));
  }
  return out;
}

/// Least-squares slope of log e against log x; NaN with fewer than 2 points.
inline double fitted_order(const std::vector<double>& x, const std::vector<double>& e) {
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, me = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    me += std::log(e[i]);
  }
  mx /= static_cast<double>(x.size());
  me /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(e[i]) - me);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

struct DroppedEpsilon {
  double epsilon;
  std::string reason;
};

/// All errors are max over snapshot times of the sup-norm difference, in
/// units of h = (u - 1)/eps.
struct OrderStudyReport {
  std::vector<double> epsilons;        // kept values, decreasing
  std::vector<double> errors;          // g-model vs conduit
  std::vector<double> cascade_errors;  // h0 + eps h1 vs conduit
  std::vector<double> cross_errors;    // g-model vs cascade
  std::vector<double> pair_orders;
  std::vector<double> cascade_pair_orders;
  std::vector<double> cross_pair_orders;
  double fitted_order = std::numeric_limits<double>::quiet_NaN();
  double cascade_fitted_order = std::numeric_limits<double>::quiet_NaN();
  double cross_fitted_order = std::numeric_limits<double>::quiet_NaN();
  std::vector<DroppedEpsilon> dropped;
  double t_end = 0.0;
  double reference_abs_tol = 0.0;
  double reference_rel_tol = 0.0;
  double runtime_seconds = 0.0;
};

namespace detail {

inline double max_snapshot_error(const Trajectory& a, const Trajectory& b, double scale) {
  if (a.times.size() != b.times.size()) {
    throw std::logic_error("order study: snapshot times differ between runs");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.times.size(); ++i) {
    const auto& x = a.snapshots[i].values();
    const auto& y = b.snapshots[i].values();
    for (std::size_t j = 0; j < x.size(); ++j) {
      worst = std::max(worst, std::abs(x[j] - y[j]) * scale);
    }
  }
  return worst;
}

inline std::string failure(const Trajectory& t) {
  return std::string(to_string(t.termination)) +
         (t.termination_detail.empty() ? "" : ": " + t.termination_detail);
}

}  // namespace detail

/// For each eps: the conduit from u0 = 1 + eps g0, the g-model from eps g0
/// (the g-model carries no eps, so w = eps g), and the cascade from (g0, 0).
/// The conduit reference runs with tolerances 100x tighter than `cfg`. An eps
/// whose initial u is not positive, or whose runs do not reach t_end, is
/// dropped and recorded.
inline OrderStudyReport asymptotic_order_study(const RealField& g0,
                                               const std::vector<double>& epsilons,
                                               double t_end, const IntegratorConfig& cfg) {
  if (epsilons.empty()) throw std::invalid_argument("order study: no epsilon values");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0 && epsilons[i] <= 0.2)) {
      throw std::invalid_argument("order study: epsilon values must lie in (0, 0.2]");
    }
    if (i > 0 && !(epsilons[i] < epsilons[i - 1])) {
      throw std::invalid_argument("order study: epsilon values must be strictly decreasing");
    }
  }
  if (!(t_end > 0.0)) throw std::invalid_argument("order study: t_end must be positive");
  if (std::abs(mean(g0)) > 1e-10 * std::max(1.0, sup_norm(g0))) {
    throw std::invalid_argument("order study: g0 must have zero mean");
  }

  const auto start = std::chrono::steady_clock::now();
  OrderStudyReport r;
  r.t_end = t_end;
  IntegratorConfig study = cfg;
  study.t_end = t_end;
  study.snapshot_stride = std::min(cfg.snapshot_stride, t_end);
  IntegratorConfig reference = study;
  reference.abs_tol = cfg.abs_tol / 100.0;
  reference.rel_tol = cfg.rel_tol / 100.0;
  r.reference_abs_tol = reference.abs_tol;
  r.reference_rel_tol = reference.rel_tol;
  const PeriodicGrid& grid = g0.grid();

  for (double eps : epsilons) {
    RealField u0 = eps * g0;
    u0 += 1.0;
    if (!(*std::min_element(u0.values().begin(), u0.values().end()) > 0.0)) {
      r.dropped.push_back({eps, "conduit: 1 + eps g0 is not strictly positive"});
      continue;
    }
    ModelSpec conduit = ModelSpec::conduit();
    Trajectory exact;
    try {
      exact = integrate(conduit, u0, reference);
    } catch (const Error& e) {
      r.dropped.push_back({eps, std::string("conduit: ") + e.what()});
      continue;
    }
    if (exact.termination != Termination::ReachedTEnd) {
      r.dropped.push_back({eps, "conduit: " + detail::failure(exact)});
      continue;
    }
    for (auto& u : exact.snapshots) u += -1.0;

    const Trajectory model = integrate(ModelSpec::gmodel(), eps * g0, study);
    if (model.termination != Termination::ReachedTEnd) {
      r.dropped.push_back({eps, "g-model: " + detail::failure(model)});
      continue;
    }
    const Trajectory cascade =
        integrate(ModelSpec::cascade(eps), CascadeState{g0, RealField(grid)}, study);
    if (cascade.termination != Termination::ReachedTEnd) {
      r.dropped.push_back({eps, "cascade: " + detail::failure(cascade)});
      continue;
    }

    // exact and model hold eps h; the cascade observable is h itself.
    Trajectory cascade_scaled = cascade;
    for (auto& f : cascade_scaled.snapshots) f *= eps;
    r.epsilons.push_back(eps);
    r.errors.push_back(detail::max_snapshot_error(model, exact, 1.0 / eps));
    r.cascade_errors.push_back(detail::max_snapshot_error(cascade_scaled, exact, 1.0 / eps));
    r.cross_errors.push_back(detail::max_snapshot_error(model, cascade_scaled, 1.0 / eps));
  }

  r.pair_orders = pair_orders(r.epsilons, r.errors);
  r.cascade_pair_orders = pair_orders(r.epsilons, r.cascade_errors);
  r.cross_pair_orders = pair_orders(r.epsilons, r.cross_errors);
  r.fitted_order = fitted_order(r.epsilons, r.errors);
  r.cascade_fitted_order = fitted_order(r.epsilons, r.cascade_errors);
  r.cross_fitted_order = fitted_order(r.epsilons, r.cross_errors);
  r.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

struct ConvergenceReport {
  std::vector<double> dts;
  std::vector<double> errors;  // sup-norm at t_end against the reference
  std::vector<double> orders;  // consecutive pairs
  double reference_dt = 0.0;
  double runtime_seconds = 0.0;
};

/// RK4 self-convergence: errors at t_end for each dt against a run with the
/// finest dt / 16. `dts` must be a halving sequence of at least 4 entries.
inline ConvergenceReport integrator_convergence_study(const ModelSpec& spec,
                                                      const InitialState& initial, double t_end,
                                                      const std::vector<double>& dts) {
  if (dts.size() < 4) {
    throw std::invalid_argument("convergence study: need at least 4 step sizes");
  }
  for (std::size_t i = 0; i < dts.size(); ++i) {
    if (!(dts[i] > 0.0)) throw std::invalid_argument("convergence study: step sizes must be positive");
    if (i > 0 && std::abs(dts[i - 1] / dts[i] - 2.0) > 1e-9) {
      throw std::invalid_argument("convergence study: step sizes must halve successively");
    }
  }
  const auto start = std::chrono::steady_clock::now();
  auto run = [&](double dt) {
    IntegratorConfig cfg;
    cfg.scheme = Scheme::RK4;
    cfg.t_end = t_end;
    cfg.dt = dt;
    cfg.snapshot_stride = t_end;
    Trajectory t = integrate(spec, initial, cfg);
    if (t.termination != Termination::ReachedTEnd) {
      throw Error("convergence study: run with dt = " + format_number(dt) + " ended with " +
                  detail::failure(t));
    }
    return t.snapshots.back();
  };

  ConvergenceReport r;
  r.dts = dts;
  r.reference_dt = dts.back() / 16.0;
  const RealField ref = run(r.reference_dt);
  for (double dt : dts) {
    const RealField f = run(dt);
    double err = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) err = std::max(err, std::abs(f[j] - ref[j]));
    r.errors.push_back(err);
  }
  r.orders = pair_orders(r.dts, r.errors);
  r.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

/// Operators under test; a harness may swap in faulty versions.
struct OperatorSet {
  std::function<RealField(const RealField&)> Q = [](const RealField& f) { return apply_Q(f); };
  std::function<RealField(const RealField&)> N = [](const RealField& f) { return apply_N(f); };
};

struct SelftestCheck {
  std::string name;
  double worst_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct SelftestReport {
  std::vector<SelftestCheck> checks;
  std::size_t n_points = 0;
  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
};

namespace detail {

inline RealField random_field(const PeriodicGrid& grid, int max_mode, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Spectrum s(grid);
  for (int k = 1; k <= max_mode; ++k) {
    s[static_cast<std::size_t>(k)] = Complex{dist(rng), dist(rng)} / static_cast<double>(k);
  }
  return to_field(s);
}

// Worst error of op on every pure mode cos(kz), sin(kz), |k| <= cutoff,
// relative to the expected coefficient (absolute where it vanishes).
template <class Symbol>
double multiplier_error(const PeriodicGrid& grid,
                        const std::function<RealField(const RealField&)>& op, Symbol&& symbol) {
  double worst = 0.0;
  for (int k = 0; k <= grid.dealias_cutoff(); ++k) {
    for (int phase = 0; phase < (k == 0 ? 1 : 2); ++phase) {
      Spectrum in(grid);
      in[static_cast<std::size_t>(k)] = phase == 0 ? Complex{0.5, 0.0} : Complex{0.0, -0.5};
      if (k == 0) in[0] = 1.0;
      const Spectrum out = to_spectrum(op(to_field(in)));
      const Complex expected = symbol(k) * in[static_cast<std::size_t>(k)];
      const double scale = std::abs(expected) > 0.0 ? std::abs(expected) : 1.0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const Complex want = i == static_cast<std::size_t>(k) ? expected : Complex{};
        worst = std::max(worst, std::abs(out[i] - want) / scale);
      }
    }
  }
  return worst;
}

}  // namespace detail

/// Evaluates the spectral operator identities on a 256-point grid with
/// `trials` random band-limited fields.
inline SelftestReport operator_selftest(const OperatorSet& ops = {}, int trials = 20,
                                        std::uint64_t seed = 1) {
  const PeriodicGrid grid(256);
  const int band = grid.dealias_cutoff();
  std::mt19937_64 rng(seed);
  SelftestReport report;
  report.n_points = grid.n_points();
  auto add = [&](std::string name, double worst, double tol) {
    report.checks.push_back({std::move(name), worst, tol, worst <= tol});
  };

  add("Q multiplier exactness", detail::multiplier_error(grid, ops.Q, [](int k) { return Complex{q_symbol(k), 0.0}; }), 1e-12);
  add("N multiplier exactness", detail::multiplier_error(grid, ops.N, n_symbol), 1e-12);

  double roundtrip = 0.0, identity = 0.0, factor = 0.0, skew = 0.0, self_adj = 0.0,
         positivity = 0.0, orthogonality = 0.0, rhs_mean = 0.0;
  for (int t = 0; t < trials; ++t) {
    const RealField f = detail::random_field(grid, band, rng);
    const RealField g = detail::random_field(grid, band, rng);
    const RealField back = to_field(to_spectrum(f));
    double rt = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) rt = std::max(rt, std::abs(back[j] - f[j]));
    roundtrip = std::max(roundtrip, rt / std::max(1.0, sup_norm(f)));

    const RealField id = ops.Q(f - derivative(f, 2));
    const RealField nq = ops.N(f);
    const RealField dq = derivative(ops.Q(f), 1);
    for (std::size_t j = 0; j < f.size(); ++j) {
      identity = std::max(identity, std::abs(id[j] - f[j]));
      factor = std::max(factor, std::abs(nq[j] - dq[j]));
    }
    skew = std::max(skew, std::abs(inner_product(f, ops.N(g)) + inner_product(ops.N(f), g)));
    self_adj = std::max(self_adj, std::abs(inner_product(f, ops.Q(g)) - inner_product(ops.Q(f), g)));
    positivity = std::max(positivity, -inner_product(f, ops.Q(f)));
    orthogonality = std::max(orthogonality, std::abs(inner_product(derivative(g, 2), ops.N(g))));
    const RealField small = detail::random_field(grid, band / 3, rng);
    rhs_mean = std::max(rhs_mean, std::abs(mean(gmodel_rhs(small))));
  }
  add("transform round trip", roundtrip, 1e-12);
  add("Q(f - f_zz) = f", identity, 1e-11);
  add("N = d/dz Q", factor, 1e-11);
  add("N skew-adjoint", skew, 1e-10);
  add("Q self-adjoint", self_adj, 1e-10);
  add("Q positive", std::max(0.0, positivity), 0.0);
  add("g_zz orthogonal to N g", orthogonality, 1e-10);
  add("g-model rhs has zero mean", rhs_mean, 1e-11);
  return report;
}

}  // namespace gmodel::validation
