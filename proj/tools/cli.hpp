#pragma once

// gmodel command-line front end. run_cli is the whole program; main() only
// forwards argv so tests can drive the CLI in-process.
//
// Exit codes: 0 success (including BlowupSuspected), 2 bad configuration or
// unusable input/output, 3 solver failure. Outputs are written before a
// failing exit.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "gmodel/expression.hpp"
#include "gmodel/io.hpp"
#include "gmodel/simulation.hpp"
#include "gmodel/traveling_waves.hpp"
#include "gmodel/validation.hpp"

namespace gmodel::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSolver = 3;

namespace detail {

inline json versions() {
  json v = io::Versions::describe();
  v["cli11"] = CLI11_VERSION;
  return v;
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io::IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw io::IoError("write failed for " + path.string());
}

inline std::string fmt(double v) { return format_number(v); }

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Flags shared by `simulate` and `config-dump`. Explicit flags override
// values loaded with --config.
struct SimulateFlags {
  std::string config_path;
  std::string model = "gmodel";
  std::size_t n_points = 256;
  std::string init = "sin(x)";
  int random_modes = 8;
  double random_amplitude = 0.1;
  double random_offset = 0.0;
  double epsilon = 0.1;
  double magma_n = 2.0;
  double magma_m = 1.0;
  double picard_tol = 1e-12;
  int picard_max_iter = 200;
  double t_end = 1.0;
  std::string scheme = "rk45";
  double tol = 0.0;
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  double dt = 1e-3;
  double dt_init = 1e-3;
  double dt_min = 1e-12;
  double dt_max = 0.1;
  double stride = 0.1;
  bool every_step = true;
  double radius_factor = 4.0;
  double tail_threshold = 1e-4;
  double growth_factor = 1e3;
  std::uint64_t seed = 0;
  std::string out = "run";

  std::vector<std::pair<CLI::Option*, std::function<void(io::RunConfig&)>>> overrides;

  template <typename T, typename Apply>
  void add(CLI::App* app, const std::string& name, T& var, const std::string& help, Apply apply) {
    CLI::Option* o = app->add_option(name, var, help)->capture_default_str();
    overrides.emplace_back(o, [&var, apply](io::RunConfig& c) { apply(c, var); });
  }

  void attach(CLI::App* app) {
    app->add_option("--config", config_path,
                    "start from a config file or a previous run's meta.json")
        ->check(CLI::ExistingFile);
    add(app, "--model", model, "gmodel | conduit | magma | eps-full | cascade",
        [](io::RunConfig& c, const std::string& v) { c.model.kind = parse_model_kind(v); });
    overrides.back().first->check(
        CLI::IsMember({"gmodel", "conduit", "magma", "eps-full", "cascade"}));
    add(app, "--n-points", n_points, "grid size, a power of two in [32, 65536]",
        [](io::RunConfig& c, std::size_t v) { c.n_points = v; });
    add(app, "--init", init, "initial data: expression in x (sin, cos, + - *, parentheses) or 'random'",
        [](io::RunConfig& c, const std::string& v) {
          c.initial.random = v == "random";
          if (!c.initial.random) c.initial.expression = v;
        });
    add(app, "--random-modes", random_modes, "random init: highest mode",
        [](io::RunConfig& c, int v) { c.initial.random_modes = v; });
    add(app, "--random-amplitude", random_amplitude, "random init: coefficient scale",
        [](io::RunConfig& c, double v) { c.initial.random_amplitude = v; });
    add(app, "--random-offset", random_offset, "random init: constant added (1 for conduit/magma)",
        [](io::RunConfig& c, double v) { c.initial.offset = v; });
    add(app, "--epsilon", epsilon, "eps-full / cascade amplitude",
        [](io::RunConfig& c, double v) { c.model.epsilon = v; });
    add(app, "--magma-n", magma_n, "magma permeability exponent",
        [](io::RunConfig& c, double v) { c.model.magma_n = v; });
    add(app, "--magma-m", magma_m, "magma viscosity exponent",
        [](io::RunConfig& c, double v) { c.model.magma_m = v; });
    add(app, "--picard-tol", picard_tol, "implicit velocity solve tolerance",
        [](io::RunConfig& c, double v) { c.model.picard_tol = v; });
    add(app, "--picard-max-iter", picard_max_iter, "implicit velocity solve iteration cap",
        [](io::RunConfig& c, int v) { c.model.picard_max_iter = v; });
    add(app, "--t-end", t_end, "final time",
        [](io::RunConfig& c, double v) { c.integrator.t_end = v; });
    add(app, "--scheme", scheme, "rk45 (adaptive, alias ode45) or rk4",
        [](io::RunConfig& c, const std::string& v) { c.integrator.scheme = ode::parse_scheme(v); });
    overrides.back().first->check(CLI::IsMember({"rk4", "rk45", "ode45", "dopri5"}));
    add(app, "--abs-tol", abs_tol, "adaptive absolute tolerance",
        [](io::RunConfig& c, double v) { c.integrator.abs_tol = v; });
    add(app, "--rel-tol", rel_tol, "adaptive relative tolerance",
        [](io::RunConfig& c, double v) { c.integrator.rel_tol = v; });
    add(app, "--tol", tol, "sets both adaptive tolerances",
        [](io::RunConfig& c, double v) { c.integrator.abs_tol = c.integrator.rel_tol = v; });
    add(app, "--dt", dt, "rk4 step", [](io::RunConfig& c, double v) { c.integrator.dt = v; });
    add(app, "--dt-init", dt_init, "adaptive initial step",
        [](io::RunConfig& c, double v) { c.integrator.dt_init = v; });
    add(app, "--dt-min", dt_min, "adaptive step floor",
        [](io::RunConfig& c, double v) { c.integrator.dt_min = v; });
    add(app, "--dt-max", dt_max, "adaptive step ceiling",
        [](io::RunConfig& c, double v) { c.integrator.dt_max = v; });
    add(app, "--snapshot-stride", stride, "time between snapshots",
        [](io::RunConfig& c, double v) { c.integrator.snapshot_stride = v; });
    add(app, "--blowup-radius-factor", radius_factor, "flag radius below factor * 2pi/n",
        [](io::RunConfig& c, double v) { c.integrator.blowup.radius_factor = v; });
    add(app, "--blowup-tail", tail_threshold, "flag spectral tail fraction above this",
        [](io::RunConfig& c, double v) { c.integrator.blowup.tail_threshold = v; });
    add(app, "--blowup-growth", growth_factor, "flag sup-norm growth above this factor",
        [](io::RunConfig& c, double v) { c.integrator.blowup.growth_factor = v; });
    add(app, "--seed", seed, "seed for random initial data",
        [](io::RunConfig& c, std::uint64_t v) { c.seed = v; });
    add(app, "--out", out, "output directory",
        [](io::RunConfig& c, const std::string& v) { c.output_dir = v; });

    CLI::Option* every = app->add_flag("--check-every-step,!--no-check-every-step", every_step,
                                       "run blow-up checks after every accepted step")
                             ->capture_default_str();
    overrides.emplace_back(every, [this](io::RunConfig& c) {
      c.integrator.diagnostics_every_step = every_step;
    });
  }

  bool given(const std::string& name) const {
    for (const auto& [opt, apply] : overrides) {
      if (opt->get_name() == name) return opt->count() > 0;
    }
    return false;
  }

  io::RunConfig resolve() const {
    io::RunConfig c;
    if (!config_path.empty()) {
      c = io::load_run_config(config_path);
    }
    for (const auto& [opt, apply] : overrides) {
      const bool is_tol = opt->get_name() == "--tol";
      if (opt->count() > 0 || (config_path.empty() && !is_tol)) apply(c);
    }
    c.validate();
    if (!c.initial.random) parse_expression(c.initial.expression);
    return c;
  }
};

inline int termination_exit_code(Termination t) {
  return t == Termination::ReachedTEnd || t == Termination::BlowupSuspected ? kExitOk
                                                                              : kExitSolver;
}

inline int simulate(const SimulateFlags& flags, const std::vector<std::string>& args,
                    std::ostream& out) {
  const io::RunConfig cfg = flags.resolve();
  if (!flags.config_path.empty() && !flags.given("--out")) {
    throw std::invalid_argument("--config needs --out so the source run is not overwritten");
  }
  const fs::path dir = cfg.output_dir;
  io::DirectoryLock lock(dir);
  const InitialState initial = io::make_initial_state(cfg);

  const auto start = std::chrono::steady_clock::now();
  const Trajectory traj = integrate(cfg.model, initial, cfg.integrator);
  const double runtime = seconds_since(start);

  json extra{{"runtime_seconds", runtime}, {"command_line", args}};
  extra["versions"] = versions();
  io::serialize_trajectory(traj, cfg, dir, extra);

  out << "termination: " << to_string(traj.termination);
  if (!traj.termination_detail.empty()) out << " (" << traj.termination_detail << ")";
  out << "\nsnapshots: " << traj.times.size() << ", t_final = " << fmt(traj.times.back())
      << ", steps = " << traj.stats.steps_accepted << " accepted / "
      << traj.stats.steps_rejected << " rejected, " << fmt(runtime) << " s\n"
      << "output: " << dir.string() << '\n';
  return termination_exit_code(traj.termination);
}

struct WavesFlags {
  waves::ContinuationConfig cfg;
  std::string out = "branch";

  void attach(CLI::App* app) {
    app->add_option("--m-fold", cfg.m_fold, "branch bifurcating from mode m")->capture_default_str();
    app->add_option("--K", cfg.K, "number of cosine modes")->capture_default_str();
    app->add_option("--s-max", cfg.s_max, "final amplitude; its sign picks the direction")
        ->capture_default_str();
    app->add_option("--ds", cfg.ds, "amplitude step")->capture_default_str();
    app->add_option("--newton-tol", cfg.newton_tol, "residual sup-norm tolerance")
        ->capture_default_str();
    app->add_option("--newton-max-iter", cfg.newton_max_iter, "Newton iteration cap")
        ->capture_default_str();
    app->add_option("--out", out, "output directory")->capture_default_str();
  }
};

inline int run_waves(const WavesFlags& flags, std::ostream& out) {
  flags.cfg.validate();
  const fs::path dir = flags.out;
  io::DirectoryLock lock(dir);
  const auto start = std::chrono::steady_clock::now();
  const waves::Branch branch = waves::continue_branch(flags.cfg);
  const double runtime = seconds_since(start);

  io::write_branch_csv(dir / "branch.csv", branch, flags.cfg.K);
  json summary{{"m_fold", flags.cfg.m_fold},
               {"K", flags.cfg.K},
               {"s_max", flags.cfg.s_max},
               {"ds", flags.cfg.ds},
               {"newton_tol", flags.cfg.newton_tol},
               {"newton_max_iter", flags.cfg.newton_max_iter},
               {"bifurcation_speed", waves::bifurcation_speed(flags.cfg.m_fold)},
               {"n_points", branch.points.size()},
               {"termination", std::string(waves::to_string(branch.termination))},
               {"detail", branch.detail},
               {"runtime_seconds", runtime},
               {"versions", versions()}};
  write_json(dir / "branch.json", summary);

  out << "branch: " << branch.points.size() << " points, termination "
      << waves::to_string(branch.termination);
  if (!branch.detail.empty()) out << " (" << branch.detail << ")";
  out << '\n';
  if (!branch.points.empty()) {
    out << "first: s = " << fmt(branch.points.front().s) << ", c = "
        << fmt(branch.points.front().c) << "\nlast:  s = " << fmt(branch.points.back().s)
        << ", c = " << fmt(branch.points.back().c) << '\n';
  }
  out << "output: " << (dir / "branch.csv").string() << '\n';
  return branch.termination == waves::BranchTermination::ReachedSMax ? kExitOk : kExitSolver;
}

struct OrderStudyFlags {
  std::size_t n_points = 64;
  std::string init = "cos(x)";
  std::vector<double> epsilons{0.1, 0.05, 0.025};
  double t_end = 1.0;
  double abs_tol = IntegratorConfig{}.abs_tol;
  double rel_tol = IntegratorConfig{}.rel_tol;
  double stride = 0.1;
  std::string out = "order_study";

  void attach(CLI::App* app) {
    app->add_option("--n-points", n_points, "grid size")->capture_default_str();
    app->add_option("--init", init, "g0 expression (zero mean)")->capture_default_str();
    app->add_option("--epsilons", epsilons, "strictly decreasing values in (0, 0.2]")
        ->capture_default_str();
    app->add_option("--t-end", t_end, "final time")->capture_default_str();
    app->add_option("--abs-tol", abs_tol, "study absolute tolerance")->capture_default_str();
    app->add_option("--rel-tol", rel_tol, "study relative tolerance")->capture_default_str();
    app->add_option("--snapshot-stride", stride, "comparison times")->capture_default_str();
    app->add_option("--out", out, "output directory")->capture_default_str();
  }
};

inline int run_order_study(const OrderStudyFlags& f, std::ostream& out) {
  io::RunConfig probe;
  probe.n_points = f.n_points;
  probe.validate();
  IntegratorConfig cfg;
  cfg.abs_tol = f.abs_tol;
  cfg.rel_tol = f.rel_tol;
  cfg.snapshot_stride = f.stride;
  const RealField g0 = init_expression_parser(f.init, PeriodicGrid(f.n_points));

  const fs::path dir = f.out;
  io::DirectoryLock lock(dir);
  const validation::OrderStudyReport r = validation::asymptotic_order_study(g0, f.epsilons, f.t_end, cfg);

  {
    std::ofstream csv(dir / "order_study.csv", std::ios::trunc);
    csv << "# gmodel-order-study v1\nepsilon,error,cascade_error,cross_error\n";
    for (std::size_t i = 0; i < r.epsilons.size(); ++i) {
      csv << io::detail::format_double(r.epsilons[i]) << ','
          << io::detail::format_double(r.errors[i]) << ','
          << io::detail::format_double(r.cascade_errors[i]) << ','
          << io::detail::format_double(r.cross_errors[i]) << '\n';
    }
    if (!csv) throw io::IoError("write failed for order_study.csv");
  }
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json dropped = json::array();
  for (const auto& d : r.dropped) dropped.push_back({{"epsilon", d.epsilon}, {"reason", d.reason}});
  write_json(dir / "order_study.json",
             {{"n_points", f.n_points},
              {"init", f.init},
              {"t_end", r.t_end},
              {"epsilons", r.epsilons},
              {"fitted_order", finite_or_null(r.fitted_order)},
              {"cascade_fitted_order", finite_or_null(r.cascade_fitted_order)},
              {"cross_fitted_order", finite_or_null(r.cross_fitted_order)},
              {"pair_orders", r.pair_orders},
              {"cascade_pair_orders", r.cascade_pair_orders},
              {"cross_pair_orders", r.cross_pair_orders},
              {"dropped", dropped},
              {"study_abs_tol", cfg.abs_tol},
              {"study_rel_tol", cfg.rel_tol},
              {"reference_abs_tol", r.reference_abs_tol},
              {"reference_rel_tol", r.reference_rel_tol},
              {"runtime_seconds", r.runtime_seconds},
              {"versions", versions()}});

  out << "epsilon        error          cascade_error  cross_error\n";
  for (std::size_t i = 0; i < r.epsilons.size(); ++i) {
    out << std::left << std::setw(15) << fmt(r.epsilons[i]) << std::setw(15) << fmt(r.errors[i])
        << std::setw(15) << fmt(r.cascade_errors[i]) << fmt(r.cross_errors[i]) << '\n';
  }
  for (const auto& d : r.dropped) out << "dropped eps = " << fmt(d.epsilon) << ": " << d.reason << '\n';
  out << "fitted order: g-model " << fmt(r.fitted_order) << ", cascade "
      << fmt(r.cascade_fitted_order) << ", cross " << fmt(r.cross_fitted_order) << '\n';
  return kExitOk;
}

struct ConvergenceFlags {
  std::string model = "gmodel";
  std::size_t n_points = 64;
  std::string init = "sin(x)";
  double epsilon = 0.1;
  double t_end = 0.5;
  std::vector<double> dts{1e-2, 5e-3, 2.5e-3, 1.25e-3};
  std::string out = "rk_convergence";

  void attach(CLI::App* app) {
    app->add_option("--model", model, "model to integrate")
        ->check(CLI::IsMember({"gmodel", "conduit", "magma", "eps-full", "cascade"}))
        ->capture_default_str();
    app->add_option("--n-points", n_points, "grid size")->capture_default_str();
    app->add_option("--init", init, "initial data expression")->capture_default_str();
    app->add_option("--epsilon", epsilon, "eps-full / cascade amplitude")->capture_default_str();
    app->add_option("--t-end", t_end, "final time")->capture_default_str();
    app->add_option("--dts", dts, "halving sequence of at least 4 steps")->capture_default_str();
    app->add_option("--out", out, "output directory")->capture_default_str();
  }
};

inline int run_convergence(const ConvergenceFlags& f, std::ostream& out) {
  io::RunConfig c;
  c.model.kind = parse_model_kind(f.model);
  c.model.epsilon = f.epsilon;
  c.n_points = f.n_points;
  c.initial.expression = f.init;
  c.validate();
  const InitialState initial = io::make_initial_state(c);

  const fs::path dir = f.out;
  io::DirectoryLock lock(dir);
  const validation::ConvergenceReport r =
      validation::integrator_convergence_study(c.model, initial, f.t_end, f.dts);

  {
    std::ofstream csv(dir / "rk_convergence.csv", std::ios::trunc);
    csv << "# gmodel-rk-convergence v1\ndt,error,order\n";
    for (std::size_t i = 0; i < r.dts.size(); ++i) {
      csv << io::detail::format_double(r.dts[i]) << ',' << io::detail::format_double(r.errors[i])
          << ',' << (i == 0 ? std::string() : io::detail::format_double(r.orders[i - 1])) << '\n';
    }
    if (!csv) throw io::IoError("write failed for rk_convergence.csv");
  }
  write_json(dir / "rk_convergence.json", {{"model", f.model},
                                            {"n_points", f.n_points},
                                            {"init", f.init},
                                            {"t_end", f.t_end},
                                            {"dts", r.dts},
                                            {"errors", r.errors},
                                            {"orders", r.orders},
                                            {"reference_dt", r.reference_dt},
                                            {"runtime_seconds", r.runtime_seconds},
                                            {"versions", versions()}});

  out << "dt             error          order\n";
  for (std::size_t i = 0; i < r.dts.size(); ++i) {
    out << std::left << std::setw(15) << fmt(r.dts[i]) << std::setw(15) << fmt(r.errors[i])
        << (i == 0 ? "" : fmt(r.orders[i - 1])) << '\n';
  }
  return kExitOk;
}

struct SelftestFlags {
  int trials = 20;
  std::uint64_t seed = 1;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--trials", trials, "random fields per check")->capture_default_str();
    app->add_option("--seed", seed, "random seed")->capture_default_str();
    app->add_option("--out", out, "optional directory for selftest.json");
  }
};

inline int run_selftest(const SelftestFlags& f, std::ostream& out) {
  if (f.trials < 1) throw std::invalid_argument("trials must be >= 1");
  const validation::SelftestReport r =
      validation::operator_selftest({}, f.trials, static_cast<unsigned>(f.seed));
  json checks = json::array();
  for (const auto& c : r.checks) {
    out << (c.passed ? "PASS " : "FAIL ") << std::left << std::setw(30) << c.name
        << " worst " << std::setw(12) << fmt(c.worst_error) << " tol " << fmt(c.tolerance) << '\n';
    checks.push_back({{"name", c.name},
                      {"worst_error", c.worst_error},
                      {"tolerance", c.tolerance},
                      {"passed", c.passed}});
  }
  if (!f.out.empty()) {
    const fs::path dir = f.out;
    io::DirectoryLock lock(dir);
    write_json(dir / "selftest.json", {{"n_points", r.n_points},
                                       {"all_passed", r.all_passed()},
                                       {"checks", checks},
                                       {"versions", versions()}});
  }
  out << (r.all_passed() ? "selftest passed\n" : "selftest FAILED\n");
  return r.all_passed() ? kExitOk : kExitSolver;
}

}  // namespace detail

/// Runs one CLI invocation; `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pseudospectral g-model, conduit and magma toolkit", "gmodel"};
  app.require_subcommand(1);

  detail::SimulateFlags sim_flags;
  CLI::App* sim = app.add_subcommand("simulate", "evolve a model and write a run directory");
  sim_flags.attach(sim);

  detail::SimulateFlags dump_flags;
  CLI::App* dump = app.add_subcommand("config-dump", "print the resolved simulate configuration");
  dump_flags.attach(dump);

  detail::WavesFlags wave_flags;
  CLI::App* wav = app.add_subcommand("waves", "continue a traveling-wave branch");
  wave_flags.attach(wav);

  CLI::App* val = app.add_subcommand("validate", "numerical validation studies");
  val->require_subcommand(1);
  detail::OrderStudyFlags order_flags;
  CLI::App* order = val->add_subcommand("order-study", "g-model vs conduit order in epsilon");
  order_flags.attach(order);
  detail::ConvergenceFlags conv_flags;
  CLI::App* conv = val->add_subcommand("rk-convergence", "RK4 self-convergence study");
  conv_flags.attach(conv);
  detail::SelftestFlags self_flags;
  CLI::App* self = val->add_subcommand("selftest", "spectral operator invariants");
  self_flags.attach(self);

  CLI::App* ver = app.add_subcommand("version", "print library versions");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*sim) return detail::simulate(sim_flags, args, out);
    if (*dump) {
      out << nlohmann::json(dump_flags.resolve()).dump(2) << '\n';
      return kExitOk;
    }
    if (*wav) return detail::run_waves(wave_flags, out);
    if (*order) return detail::run_order_study(order_flags, out);
    if (*conv) return detail::run_convergence(conv_flags, out);
    if (*self) return detail::run_selftest(self_flags, out);
    if (*ver) {
      const json v = detail::versions();
      for (const auto& [name, value] : v.items()) {
        out << name << ' ' << (value.is_string() ? value.get<std::string>() : value.dump()) << '\n';
      }
      return kExitOk;
    }
  } catch (const ParseError& e) {
    err << "error: initial data: " << e.what() << '\n';
    return kExitConfig;
  } catch (const io::FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const io::IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "solver failure: " << e.what() << '\n';
    return kExitSolver;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace gmodel::cli
