// Acceptance checks. Each criterion prints one PASS/FAIL line; `--only NAME`
// runs a single criterion (ctest registers one test per name).

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gmodel/io.hpp"
#include "gmodel/simulation.hpp"
#include "gmodel/spectral.hpp"
#include "gmodel/traveling_waves.hpp"
#include "gmodel/validation.hpp"
#include "test_support.hpp"

using namespace gmodel;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [violated]");
  }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

// Plain average of the nodal values.
double nodal_mean(const RealField& f) {
  double s = 0.0;
  for (double v : f.values()) s += v;
  return s / static_cast<double>(f.size());
}

// Multipliers on every pure mode and the two operator identities against
// closed forms.
Outcome multipliers() {
  Outcome o;
  const PeriodicGrid grid(256);
  const int kmax = static_cast<int>(grid.n_points() / 3);
  double q_err = 0.0, n_err = 0.0;
  for (int k = 0; k <= kmax; ++k) {
    Spectrum s(grid);
    // The mean of a real field is real.
    s[static_cast<std::size_t>(k)] = Complex(0.7, k == 0 ? 0.0 : -0.3);
    const RealField f = to_field(s);
    const Spectrum q = to_spectrum(apply_Q(f));
    const Spectrum n = to_spectrum(apply_N(f));
    const double kk = k;
    const Complex q_want = s[static_cast<std::size_t>(k)] / (1.0 + kk * kk);
    const Complex n_want = Complex(0.0, kk) * s[static_cast<std::size_t>(k)] / (1.0 + kk * kk);
    for (std::size_t i = 0; i < q.size(); ++i) {
      const bool on = i == static_cast<std::size_t>(k);
      q_err = std::max(q_err, std::abs(q[i] - (on ? q_want : Complex{})) / std::abs(q_want));
      if (k > 0) {
        n_err = std::max(n_err, std::abs(n[i] - (on ? n_want : Complex{})) / std::abs(n_want));
      }
    }
  }
  o.require(q_err <= 1e-12, "Q pure-mode rel err " + num(q_err) + " <= 1e-12");
  o.require(n_err <= 1e-12, "N pure-mode rel err " + num(n_err) + " <= 1e-12");

  // f = sum a_k cos kz + b_k sin kz over the dealiased band.
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  double id_err = 0.0, nq_err = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> a(static_cast<std::size_t>(kmax) + 1), b(a.size());
    for (int k = 1; k <= kmax; ++k) {
      a[static_cast<std::size_t>(k)] = dist(rng) / k;
      b[static_cast<std::size_t>(k)] = dist(rng) / k;
    }
    auto series = [&](auto coef_cos, auto coef_sin) {
      return RealField::from_function(grid, [&](double z) {
        double v = 0.0;
        for (int k = 1; k <= kmax; ++k) {
          v += coef_cos(k) * std::cos(k * z) + coef_sin(k) * std::sin(k * z);
        }
        return v;
      });
    };
    auto A = [&](int k) { return a[static_cast<std::size_t>(k)]; };
    auto B = [&](int k) { return b[static_cast<std::size_t>(k)]; };
    const RealField f = series(A, B);
    const RealField f_minus_fzz =
        series([&](int k) { return (1.0 + k * k) * A(k); }, [&](int k) { return (1.0 + k * k) * B(k); });
    id_err = std::max(id_err, test::max_abs_diff(apply_Q(f_minus_fzz), f));
    // d/dz of Q f, written out term by term.
    const RealField dq = series([&](int k) { return k * B(k) / (1.0 + k * k); },
                                [&](int k) { return -k * A(k) / (1.0 + k * k); });
    nq_err = std::max(nq_err, test::max_abs_diff(apply_N(f), dq) / std::max(1.0, sup_norm(dq)));
  }
  o.require(id_err <= 1e-11, "Q(f - f_zz) = f err " + num(id_err) + " <= 1e-11");
  o.require(nq_err <= 1e-11, "N = d/dz Q err " + num(nq_err) + " <= 1e-11");
  return o;
}

Outcome phase_speeds() {
  Outcome o;
  const PeriodicGrid grid(64);
  IntegratorConfig cfg;
  cfg.t_end = 1.0;
  cfg.snapshot_stride = 1.0;
  cfg.abs_tol = cfg.rel_tol = 1e-10;
  for (int k : {1, 2, 3}) {
    const RealField g0 =
        RealField::from_function(grid, [k](double z) { return 1e-6 * std::cos(k * z); });
    const Trajectory t = integrate(ModelSpec::gmodel(), g0, cfg);
    const double measured = test::measured_phase_speed(g0, t.snapshots.back(), k, cfg.t_end);
    const double want = 2.0 / (1.0 + k * k);
    const double err = std::abs(measured - want);
    o.require(t.termination == Termination::ReachedTEnd && err <= 1e-6,
              "k=" + std::to_string(k) + " speed " + num(measured) + " err " + num(err) + " <= 1e-6");
  }
  return o;
}

Outcome bifurcation_speeds() {
  Outcome o;
  for (int m : {1, 2}) {
    waves::ContinuationConfig cfg;
    cfg.m_fold = m;
    cfg.ds = 1e-3;
    cfg.s_max = 1e-3;
    const waves::Branch b = waves::continue_branch(cfg);
    const double want = 2.0 / (1.0 + m * m);
    if (b.points.empty()) {
      o.require(false, "m=" + std::to_string(m) + " no branch point: " + b.detail);
      continue;
    }
    const auto& p = b.points.front();
    o.require(p.s == 1e-3 && std::abs(p.c - want) <= 1e-5,
              "m=" + std::to_string(m) + " c " + num(p.c) + " vs " + num(want) + " err " +
                  num(std::abs(p.c - want)) + " <= 1e-5");
  }
  // Every accepted point of full branches.
  double worst_res = 0.0, worst_recheck = 0.0;
  std::size_t points = 0;
  bool complete = true;
  for (int m : {1, 2}) {
    waves::ContinuationConfig cfg;
    cfg.m_fold = m;
    const waves::Branch b = waves::continue_branch(cfg);
    complete = complete && b.termination == waves::BranchTermination::ReachedSMax;
    for (const auto& p : b.points) {
      ++points;
      worst_res = std::max(worst_res, p.residual_sup);
      worst_recheck = std::max(worst_recheck, waves::truncation_recheck(p, 2 * cfg.K));
    }
  }
  o.require(complete, "branches to s=0.05 complete (" + std::to_string(points) + " points)");
  o.require(worst_res <= 1e-12, "max residual " + num(worst_res) + " <= 1e-12");
  o.require(worst_recheck <= 1e-10, "max 2K re-check " + num(worst_recheck) + " <= 1e-10");
  return o;
}

Outcome kernel_transversality() {
  Outcome o;
  for (int n = 1; n <= 8; ++n) {
    const waves::KernelReport r = waves::kernel_check(n, 64);
    std::ostringstream s;
    s << "n=" << n << " kernel {";
    for (std::size_t i = 0; i < r.kernel_modes.size(); ++i) s << (i ? "," : "") << r.kernel_modes[i];
    s << "} transversality " << num(r.transversality) << " vs " << -n;
    o.require(r.simple_kernel() && r.transversality == -static_cast<double>(n), s.str());
  }
  return o;
}

Outcome wave_dynamics() {
  Outcome o;
  waves::ContinuationConfig cfg;
  cfg.s_max = 0.01;
  const waves::Branch b = waves::continue_branch(cfg);
  if (b.points.empty() || b.points.back().s != 0.01) {
    o.require(false, "no converged wave at s=0.01: " + b.detail);
    return o;
  }
  const auto& p = b.points.back();
  const PeriodicGrid grid(256);
  const RealField phi = RealField::from_function(grid, [&](double z) { return p.phi(z); });
  IntegratorConfig icfg;
  icfg.t_end = 2.0 * kPi / p.c;
  icfg.snapshot_stride = icfg.t_end;
  icfg.abs_tol = icfg.rel_tol = 1e-12;
  const Trajectory t = integrate(ModelSpec::gmodel(), phi, icfg);
  const double err = test::max_abs_diff(t.snapshots.back(), phi);
  o.require(t.termination == Termination::ReachedTEnd && err <= 1e-4,
            "c_s " + num(p.c) + ", T " + num(icfg.t_end) + ", return err " + num(err) + " <= 1e-4");
  return o;
}

Outcome asymptotic_order() {
  Outcome o;
  const PeriodicGrid grid(64);
  const RealField g0 = RealField::from_function(grid, [](double z) { return std::cos(z); });
  const validation::OrderStudyReport r =
      validation::asymptotic_order_study(g0, {0.1, 0.05, 0.025}, 1.0, IntegratorConfig{});
  o.require(r.dropped.empty() && r.epsilons.size() == 3, "all three epsilons kept");
  o.require(r.fitted_order >= 1.7 && r.fitted_order <= 2.3,
            "g-model order " + num(r.fitted_order) + " in [1.7, 2.3]");
  o.require(r.cascade_fitted_order >= 1.7 && r.cascade_fitted_order <= 2.3,
            "cascade order " + num(r.cascade_fitted_order) + " in [1.7, 2.3]");
  o.require(r.cross_fitted_order >= 1.7,
            "g-model vs cascade order " + num(r.cross_fitted_order) + " >= 1.7");
  bool monotone = true;
  for (std::size_t i = 1; i < r.errors.size(); ++i) monotone = monotone && r.errors[i] < r.errors[i - 1];
  o.require(monotone, "errors decrease with epsilon");
  return o;
}

Outcome conservation() {
  Outcome o;
  struct Case {
    std::string label;
    ModelSpec spec;
    InitialState init;
  };
  const PeriodicGrid grid(128);
  std::mt19937_64 rng(77);
  auto positive = [&](double amp) {
    RealField h = test::random_band_limited(grid, 4, rng);
    h *= amp / sup_norm(h);
    h += 1.0;
    return h;
  };
  std::vector<Case> cases;
  cases.push_back({"gmodel sin", ModelSpec::gmodel(),
                   RealField::from_function(grid, [](double z) { return 0.5 * std::sin(z); })});
  cases.push_back({"gmodel random", ModelSpec::gmodel(), test::random_band_limited(grid, 6, rng)});
  cases.push_back({"conduit", ModelSpec::conduit(), positive(0.1)});
  cases.push_back({"magma(3,0.5)", ModelSpec::magma(3.0, 0.5), positive(0.1)});
  cases.push_back({"magma(3,0)", ModelSpec::magma(3.0, 0.0), positive(0.1)});
  cases.push_back({"eps-full", ModelSpec::eps_full(0.1),
                   RealField::from_function(grid, [](double z) { return std::cos(z); })});
  {
    ModelSpec c = ModelSpec::gmodel();
    c.kind = ModelKind::EpsCascade;
    c.epsilon = 0.1;
    cases.push_back({"cascade", c,
                     CascadeState{RealField::from_function(grid, [](double z) { return std::cos(z); }),
                                  RealField(grid)}});
  }

  IntegratorConfig cfg;
  cfg.t_end = 1.0;
  cfg.diagnostics_every_step = true;
  for (const auto& c : cases) {
    const Trajectory t = integrate(c.spec, c.init, cfg);
    double drift = 0.0;
    const double m0 = nodal_mean(t.snapshots.front());
    for (const auto& s : t.snapshots) drift = std::max(drift, std::abs(nodal_mean(s) - m0));
    if (c.spec.kind == ModelKind::EpsCascade) {
      for (const auto& s : t.cascade_snapshots) {
        drift = std::max(drift, std::abs(nodal_mean(s.h1) - nodal_mean(t.cascade_snapshots.front().h1)));
      }
    }
    std::string line = c.label + " drift " + num(drift);
    bool ok = t.termination == Termination::ReachedTEnd && drift <= 1e-9;
    if (c.spec.is_conduit_family()) {
      // Solver-reported residual over every step, and an independent
      // substitution at every snapshot.
      double substituted = 0.0;
      for (const auto& u : t.snapshots) {
        const RealField v = velocity_solve(u, c.spec);
        substituted = std::max(
            substituted, sup_norm(test::magma_substitution(u, v, c.spec.magma_n, c.spec.magma_m)));
      }
      const double limit = 10.0 * c.spec.picard_tol;
      ok = ok && t.stats.max_implicit_residual <= limit && substituted <= limit;
      line += ", step residual " + num(t.stats.max_implicit_residual) + ", substituted " +
              num(substituted) + " <= " + num(limit);
    }
    o.require(ok, line);
  }
  return o;
}

Outcome rk4_order() {
  Outcome o;
  const PeriodicGrid grid(64);
  const RealField g0 = RealField::from_function(grid, [](double z) { return std::sin(z); });
  const validation::ConvergenceReport r = validation::integrator_convergence_study(
      ModelSpec::gmodel(), g0, 0.5, {1e-2, 5e-3, 2.5e-3, 1.25e-3});
  for (std::size_t i = 0; i < r.orders.size(); ++i) {
    o.require(std::abs(r.orders[i] - 4.0) <= 0.2,
              "pair " + std::to_string(i + 1) + " order " + num(r.orders[i]));
  }
  return o;
}

// Every stride multiple up to the last record must be present, times strictly
// increasing, values finite.
std::string check_diagnostics(const io::LoadedRun& run, double stride) {
  const auto& d = run.diagnostics;
  if (d.empty()) return "no diagnostics";
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (!(d[i].t > d[i - 1].t)) return "times not increasing at row " + std::to_string(i);
  }
  for (const auto& r : d) {
    for (double v : {r.t, r.sup_norm, r.h1_norm, r.h2_norm, r.mean, r.min_u, r.analyticity_radius,
                     r.spectral_tail_fraction}) {
      if (!std::isfinite(v)) return "non-finite value at t = " + num(r.t);
    }
  }
  std::size_t row = 0;
  for (long k = 0;; ++k) {
    const double want = static_cast<double>(k) * stride;
    if (want > d.back().t * (1.0 + 1e-12)) break;
    while (row < d.size() && d[row].t < want * (1.0 - 1e-12)) ++row;
    if (row == d.size() || std::abs(d[row].t - want) > 1e-12 * std::max(1.0, want)) {
      return "missing snapshot at t = " + num(want);
    }
  }
  const std::size_t on_grid = static_cast<std::size_t>(std::floor(d.back().t / stride + 1e-9)) + 1;
  if (d.size() > on_grid + 1) return "unexpected extra rows";
  return "";
}

Outcome reference_runs() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "gmodel_acceptance_reference";
  fs::remove_all(root);
  for (int n : {8192, 1024}) {
    for (const std::string init : {"sin(x)", "sin(x)*cos(x)"}) {
      const fs::path dir = root / (std::to_string(n) + (init == "sin(x)" ? "_sin" : "_sincos"));
      std::ostringstream out, err;
      const auto start = std::chrono::steady_clock::now();
      const int code = cli::run_cli({"simulate", "--model", "gmodel", "--n-points", std::to_string(n),
                                     "--init", init, "--t-end", "5", "--out", dir.string()},
                                    out, err);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::string label = "N=" + std::to_string(n) + " " + init + ": ";
      if (code != 0) {
        o.require(false, label + "exit " + std::to_string(code) + " " + err.str());
        continue;
      }
      const io::LoadedRun run = io::load_trajectory(dir);
      const bool terminal = run.termination == Termination::ReachedTEnd ||
                            run.termination == Termination::BlowupSuspected;
      const std::string problem = check_diagnostics(run, run.config.integrator.snapshot_stride);
      label += std::string(to_string(run.termination)) + " at t=" + num(run.times.back()) + ", " +
               std::to_string(run.diagnostics.size()) + " rows, " + num(secs) + " s";
      if (!problem.empty()) label += ", " + problem;
      bool ok = terminal && problem.empty();
      if (n == 1024) {
        ok = ok && secs < 600.0;
        label += " < 600 s";
      }
      o.require(ok, label);
    }
  }
  return o;
}

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {"multipliers", 1.0, multipliers},
      {"phase_speeds", 10.0, phase_speeds},
      {"bifurcation_speeds", 30.0, bifurcation_speeds},
      {"kernel_transversality", 1.0, kernel_transversality},
      {"wave_dynamics", 60.0, wave_dynamics},
      {"asymptotic_order", 300.0, asymptotic_order},
      {"conservation", 0.0, conservation},
      {"rk4_order", 0.0, rk4_order},
      {"reference_runs", 0.0, reference_runs},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string only;
  bool list = false;
  app.add_option("--only", only, "run a single criterion");
  app.add_flag("--list", list, "print criterion names");
  CLI11_PARSE(app, argc, argv);

  if (list) {
    for (const auto& c : criteria()) std::cout << c.name << '\n';
    return 0;
  }

  int failures = 0, ran = 0;
  for (const auto& c : criteria()) {
    if (!only.empty() && c.name != only) continue;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = num(secs) + " s";
    if (c.budget_seconds > 0.0) {
      const bool in_budget = secs < c.budget_seconds;
      o.pass = o.pass && in_budget;
      timing += in_budget ? " < " : " exceeds ";
      timing += num(c.budget_seconds) + " s";
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << " [" << timing
              << "]" << std::endl;
    if (!o.pass) ++failures;
  }
  if (ran == 0) {
    std::cerr << "unknown criterion '" << only << "'\n";
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
