#pragma once

// Run configuration and on-disk formats:
//   meta.json            run configuration echo, termination, statistics, versions
//   diagnostics.csv      one row per snapshot
//   snapshots.bin        "GMDL", u32 version, u32 n_points, u32 n_snapshots, then
//                        per snapshot f64 t and n_points f64 values (little-endian)
//   snapshots_index.csv  snapshot index, time and byte offset into snapshots.bin
//   branch.csv           one row per traveling-wave branch point
// Requires nlohmann/json (vendor/json.hpp) on the include path.

#include <fftw3.h>
#include <Eigen/Core>
#include <json.hpp>

#include <bit>
#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gmodel/diagnostics.hpp"
#include "gmodel/expression.hpp"
#include "gmodel/simulation.hpp"
#include "gmodel/traveling_waves.hpp"

#ifndef GMODEL_VERSION
#define GMODEL_VERSION "0.0.0"
#endif

namespace gmodel {

using nlohmann::json;

// JSON mapping, found by ADL. Field names are the stable schema of meta.json.

inline void to_json(json& j, const ModelSpec& m) {
  j = json{{"kind", std::string(to_string(m.kind))},
           {"epsilon", m.epsilon},
           {"magma_n", m.magma_n},
           {"magma_m", m.magma_m},
           {"picard_tol", m.picard_tol},
           {"picard_max_iter", m.picard_max_iter}};
}

inline void from_json(const json& j, ModelSpec& m) {
  m = ModelSpec{};
  m.kind = parse_model_kind(j.at("kind").get<std::string>());
  m.epsilon = j.value("epsilon", m.epsilon);
  m.magma_n = j.value("magma_n", m.magma_n);
  m.magma_m = j.value("magma_m", m.magma_m);
  m.picard_tol = j.value("picard_tol", m.picard_tol);
  m.picard_max_iter = j.value("picard_max_iter", m.picard_max_iter);
}

inline void to_json(json& j, const BlowupPolicy& p) {
  j = json{{"radius_factor", p.radius_factor},
           {"tail_threshold", p.tail_threshold},
           {"growth_factor", p.growth_factor}};
}

inline void from_json(const json& j, BlowupPolicy& p) {
  p = BlowupPolicy{};
  p.radius_factor = j.value("radius_factor", p.radius_factor);
  p.tail_threshold = j.value("tail_threshold", p.tail_threshold);
  p.growth_factor = j.value("growth_factor", p.growth_factor);
}

inline void to_json(json& j, const IntegratorConfig& c) {
  j = json{{"scheme", std::string(ode::to_string(c.scheme))},
           {"t_end", c.t_end},
           {"dt", c.dt},
           {"dt_init", c.dt_init},
           {"dt_min", c.dt_min},
           {"dt_max", c.dt_max},
           {"abs_tol", c.abs_tol},
           {"rel_tol", c.rel_tol},
           {"snapshot_stride", c.snapshot_stride},
           {"diagnostics_every_step", c.diagnostics_every_step},
           {"blowup", c.blowup}};
}

inline void from_json(const json& j, IntegratorConfig& c) {
  c = IntegratorConfig{};
  c.scheme = ode::parse_scheme(j.value("scheme", std::string("rk45")));
  c.t_end = j.value("t_end", c.t_end);
  c.dt = j.value("dt", c.dt);
  c.dt_init = j.value("dt_init", c.dt_init);
  c.dt_min = j.value("dt_min", c.dt_min);
  c.dt_max = j.value("dt_max", c.dt_max);
  c.abs_tol = j.value("abs_tol", c.abs_tol);
  c.rel_tol = j.value("rel_tol", c.rel_tol);
  c.snapshot_stride = j.value("snapshot_stride", c.snapshot_stride);
  c.diagnostics_every_step = j.value("diagnostics_every_step", c.diagnostics_every_step);
  if (j.contains("blowup")) c.blowup = j.at("blowup").get<BlowupPolicy>();
}

}  // namespace gmodel

namespace gmodel::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr std::uint32_t kSnapshotFormatVersion = 1;
inline constexpr int kMetaFormatVersion = 1;
inline constexpr const char* kDiagnosticsSchema = "# gmodel-diagnostics v1";
inline constexpr const char* kIndexSchema = "# gmodel-snapshots-index v1";
inline constexpr const char* kBranchSchema = "# gmodel-branch v1";

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// How the initial field is produced: an expression over x, or a random
/// band-limited zero-mean field drawn from `seed` and added to `offset`.
struct InitialData {
  std::string expression = "sin(x)";
  bool random = false;
  int random_modes = 8;
  double random_amplitude = 0.1;
  double offset = 0.0;  // random only: e.g. 1 for conduit states
};

/// Everything that affects a simulation's results.
struct RunConfig {
  ModelSpec model;
  std::size_t n_points = 256;
  InitialData initial;
  IntegratorConfig integrator;
  std::string output_dir = "run";
  std::uint64_t seed = 0;

  void validate() const {
    model.validate();
    integrator.validate();
    if (n_points < 32 || n_points > 65536 || !std::has_single_bit(n_points)) {
      throw std::invalid_argument("grid size must be a power of two between 32 and 65536, got " +
                                  std::to_string(n_points));
    }
    if (initial.random && (initial.random_modes < 1 ||
                           initial.random_modes > static_cast<int>(n_points / 3))) {
      throw std::invalid_argument("random initial data: modes must lie in [1, n_points/3]");
    }
  }
};

inline void to_json(json& j, const InitialData& d) {
  j = json{{"expression", d.expression},
           {"random", d.random},
           {"random_modes", d.random_modes},
           {"random_amplitude", d.random_amplitude},
           {"offset", d.offset}};
}

inline void from_json(const json& j, InitialData& d) {
  d = InitialData{};
  d.expression = j.value("expression", d.expression);
  d.random = j.value("random", d.random);
  d.random_modes = j.value("random_modes", d.random_modes);
  d.random_amplitude = j.value("random_amplitude", d.random_amplitude);
  d.offset = j.value("offset", d.offset);
}

inline void to_json(json& j, const RunConfig& c) {
  j = json{{"model", c.model},
           {"n_points", c.n_points},
           {"initial", c.initial},
           {"integrator", c.integrator},
           {"output_dir", c.output_dir},
           {"seed", c.seed}};
}

inline void from_json(const json& j, RunConfig& c) {
  c = RunConfig{};
  c.model = j.at("model").get<ModelSpec>();
  c.n_points = j.at("n_points").get<std::size_t>();
  if (j.contains("initial")) c.initial = j.at("initial").get<InitialData>();
  if (j.contains("integrator")) c.integrator = j.at("integrator").get<IntegratorConfig>();
  c.output_dir = j.value("output_dir", c.output_dir);
  c.seed = j.value("seed", c.seed);
}

/// Reads a RunConfig from a plain config file or from a run's meta.json.
inline RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
    return j.contains("config") ? j.at("config").get<RunConfig>() : j.get<RunConfig>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// The initial field described by `cfg` on its grid. Random fields draw
/// a_k, b_k uniform in [-A/k, A/k] for k = 1..modes from mt19937_64(seed).
inline RealField make_initial_field(const RunConfig& cfg, const PeriodicGrid& grid) {
  if (!cfg.initial.random) return init_expression_parser(cfg.initial.expression, grid);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const int K = cfg.initial.random_modes;
  std::vector<double> a(static_cast<std::size_t>(K) + 1), b(a.size());
  for (int k = 1; k <= K; ++k) {
    a[static_cast<std::size_t>(k)] = cfg.initial.random_amplitude * dist(rng) / k;
    b[static_cast<std::size_t>(k)] = cfg.initial.random_amplitude * dist(rng) / k;
  }
  return RealField::from_function(grid, [&](double z) {
    double v = cfg.initial.offset;
    for (int k = 1; k <= K; ++k) {
      v += a[static_cast<std::size_t>(k)] * std::cos(k * z) +
           b[static_cast<std::size_t>(k)] * std::sin(k * z);
    }
    return v;
  });
}

/// Cascade runs start from (h0, h1) = (field, 0).
inline InitialState make_initial_state(const RunConfig& cfg) {
  const PeriodicGrid grid(cfg.n_points);
  RealField f = make_initial_field(cfg, grid);
  if (cfg.model.kind == ModelKind::EpsCascade) return CascadeState{std::move(f), RealField(grid)};
  return f;
}

struct Versions {
  static json describe() {
    return json{{"gmodel", GMODEL_VERSION},
                {"fftw", std::string(fftw_version)},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                              std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                {"compiler", __VERSION__},
                {"snapshot_format", kSnapshotFormatVersion},
                {"meta_format", kMetaFormatVersion}};
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline double get_f64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

inline std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<unsigned char> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, sep)) out.push_back(cell);
  return out;
}

}  // namespace detail

inline constexpr std::size_t kSnapshotHeaderBytes = 16;

inline std::size_t snapshot_offset(std::size_t index, std::size_t n_points) {
  return kSnapshotHeaderBytes + index * (n_points + 1) * sizeof(double);
}

inline void write_snapshots(const fs::path& path, const std::vector<double>& times,
                            const std::vector<RealField>& snapshots) {
  const std::size_t n = snapshots.empty() ? 0 : snapshots.front().size();
  auto out = detail::open_out(path, std::ios::binary);
  out.write("GMDL", 4);
  detail::put_u32(out, kSnapshotFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(n));
  detail::put_u32(out, static_cast<std::uint32_t>(snapshots.size()));
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    detail::put_f64(out, times[i]);
    for (double v : snapshots[i].values()) detail::put_f64(out, v);
  }
  detail::finish(out, path);
}

struct SnapshotFile {
  std::size_t n_points = 0;
  std::vector<double> times;
  std::vector<std::vector<double>> values;
};

inline SnapshotFile read_snapshots(const fs::path& path) {
  const auto bytes = detail::read_all(path);
  if (bytes.size() < kSnapshotHeaderBytes) {
    throw FormatError(path.string() + ": truncated header (" + std::to_string(bytes.size()) +
                      " bytes)");
  }
  if (std::memcmp(bytes.data(), "GMDL", 4) != 0) throw FormatError(path.string() + ": bad magic");
  const std::uint32_t version = detail::get_u32(bytes.data() + 4);
  if (version != kSnapshotFormatVersion) {
    throw FormatError(path.string() + ": format version " + std::to_string(version) +
                      ", expected " + std::to_string(kSnapshotFormatVersion));
  }
  SnapshotFile f;
  f.n_points = detail::get_u32(bytes.data() + 8);
  const std::size_t count = detail::get_u32(bytes.data() + 12);
  const std::size_t expected = snapshot_offset(count, f.n_points);
  if (bytes.size() != expected) {
    throw FormatError(path.string() + ": length " + std::to_string(bytes.size()) +
                      " bytes, header implies " + std::to_string(expected));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* p = bytes.data() + snapshot_offset(i, f.n_points);
    f.times.push_back(detail::get_f64(p));
    std::vector<double> v(f.n_points);
    for (std::size_t j = 0; j < f.n_points; ++j) v[j] = detail::get_f64(p + 8 * (j + 1));
    f.values.push_back(std::move(v));
  }
  return f;
}

inline const std::vector<std::string>& diagnostics_columns() {
  static const std::vector<std::string> cols = {
      "t",      "sup_norm", "h1_norm",           "h2_norm",
      "mean",   "min_u",    "analyticity_radius", "spectral_tail_fraction"};
  return cols;
}

inline void write_diagnostics(const fs::path& path, const std::vector<DiagnosticsRecord>& records) {
  auto out = detail::open_out(path);
  out << kDiagnosticsSchema << '\n';
  const auto& cols = diagnostics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : records) {
    const double row[] = {r.t,    r.sup_norm, r.h1_norm,           r.h2_norm,
                          r.mean, r.min_u,    r.analyticity_radius, r.spectral_tail_fraction};
    for (std::size_t i = 0; i < std::size(row); ++i) {
      out << (i ? "," : "") << detail::format_double(row[i]);
    }
    out << '\n';
  }
  detail::finish(out, path);
}

inline std::vector<DiagnosticsRecord> read_diagnostics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kDiagnosticsSchema) {
    throw FormatError(path.string() + ": missing or unsupported schema line");
  }
  if (!std::getline(in, line) || detail::split(line, ',') != diagnostics_columns()) {
    throw FormatError(path.string() + ": unexpected column header");
  }
  std::vector<DiagnosticsRecord> out;
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cells = detail::split(line, ',');
    if (cells.size() != diagnostics_columns().size()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(diagnostics_columns().size()) + " columns");
    }
    double v[8];
    for (std::size_t i = 0; i < 8; ++i) {
      try {
        v[i] = std::stod(cells[i]);
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad number '" +
                          cells[i] + "'");
      }
    }
    DiagnosticsRecord r;
    r.t = v[0];
    r.sup_norm = v[1];
    r.h1_norm = v[2];
    r.h2_norm = v[3];
    r.mean = v[4];
    r.min_u = v[5];
    r.analyticity_radius = v[6];
    r.spectral_tail_fraction = v[7];
    out.push_back(r);
  }
  return out;
}

inline void write_snapshot_index(const fs::path& path, const std::vector<double>& times,
                                 std::size_t n_points) {
  auto out = detail::open_out(path);
  out << kIndexSchema << "\nindex,t,byte_offset\n";
  for (std::size_t i = 0; i < times.size(); ++i) {
    out << i << ',' << detail::format_double(times[i]) << ',' << snapshot_offset(i, n_points)
        << '\n';
  }
  detail::finish(out, path);
}

inline json trajectory_summary(const Trajectory& t) {
  json j{{"termination", std::string(to_string(t.termination))},
         {"detail", t.termination_detail},
         {"blowup_reason", t.blowup_reason ? json(std::string(to_string(*t.blowup_reason)))
                                           : json(nullptr)},
         {"n_snapshots", t.times.size()},
         {"t_final", t.times.empty() ? 0.0 : t.times.back()},
         {"stats",
          {{"steps_accepted", t.stats.steps_accepted},
           {"steps_rejected", t.stats.steps_rejected},
           {"rhs_evals", t.stats.rhs_evals},
           {"implicit_solves", t.stats.implicit_solves},
           {"max_implicit_residual", t.stats.max_implicit_residual},
           {"max_implicit_iterations", t.stats.max_implicit_iterations},
           {"max_error_ratio", t.stats.max_error_ratio}}}};
  return j;
}

/// Writes meta.json, diagnostics.csv, snapshots.bin and snapshots_index.csv.
/// `extra` is merged into meta.json (e.g. timing).
inline void serialize_trajectory(const Trajectory& traj, const RunConfig& cfg, const fs::path& dir,
                                 const json& extra = json::object()) {
  fs::create_directories(dir);
  const std::size_t n = traj.snapshots.empty() ? cfg.n_points : traj.snapshots.front().size();
  write_snapshots(dir / "snapshots.bin", traj.times, traj.snapshots);
  write_snapshot_index(dir / "snapshots_index.csv", traj.times, n);
  write_diagnostics(dir / "diagnostics.csv", traj.diagnostics);

  json meta{{"format_version", kMetaFormatVersion},
            {"config", cfg},
            {"result", trajectory_summary(traj)},
            {"versions", Versions::describe()}};
  meta.update(extra);
  const fs::path path = dir / "meta.json";
  auto out = detail::open_out(path);
  out << meta.dump(2) << '\n';
  detail::finish(out, path);
}

struct LoadedRun {
  json meta;
  RunConfig config;
  Termination termination = Termination::ReachedTEnd;
  std::vector<double> times;
  std::vector<RealField> snapshots;
  std::vector<DiagnosticsRecord> diagnostics;
};

/// Inverse of serialize_trajectory; snapshot values come back bit-exact.
inline LoadedRun load_trajectory(const fs::path& dir) {
  LoadedRun run;
  {
    std::ifstream in(dir / "meta.json");
    if (!in) throw IoError("cannot open " + (dir / "meta.json").string());
    try {
      run.meta = json::parse(in);
      const int version = run.meta.at("format_version").get<int>();
      if (version != kMetaFormatVersion) {
        throw FormatError("meta.json format version " + std::to_string(version) +
                          ", expected " + std::to_string(kMetaFormatVersion));
      }
      run.config = run.meta.at("config").get<RunConfig>();
      run.termination =
          parse_termination(run.meta.at("result").at("termination").get<std::string>());
    } catch (const json::exception& e) {
      throw FormatError(std::string("meta.json: ") + e.what());
    }
  }
  SnapshotFile snaps = read_snapshots(dir / "snapshots.bin");
  if (snaps.n_points == 0 && !snaps.times.empty()) throw FormatError("snapshots.bin: zero grid size");
  run.times = std::move(snaps.times);
  if (!run.times.empty()) {
    const PeriodicGrid grid(snaps.n_points);
    for (auto& v : snaps.values) run.snapshots.emplace_back(grid, std::move(v));
  }
  run.diagnostics = read_diagnostics(dir / "diagnostics.csv");
  if (run.diagnostics.size() != run.times.size()) {
    throw FormatError("diagnostics.csv has " + std::to_string(run.diagnostics.size()) +
                      " rows for " + std::to_string(run.times.size()) + " snapshots");
  }
  return run;
}

inline void write_branch_csv(const fs::path& path, const waves::Branch& branch, int K) {
  auto out = detail::open_out(path);
  out << kBranchSchema << "\ns,c,residual_sup,newton_iters";
  for (int k = 1; k <= K; ++k) out << ",f_" << k;
  out << '\n';
  for (const auto& p : branch.points) {
    out << detail::format_double(p.s) << ',' << detail::format_double(p.c) << ','
        << detail::format_double(p.residual_sup) << ',' << p.newton_iters;
    for (int k = 1; k <= K; ++k) out << ',' << detail::format_double(p.phi.f(k));
    out << '\n';
  }
  detail::finish(out, path);
}

/// Rows of a branch CSV as (s, c, residual_sup, newton_iters, f_1..f_K).
inline std::vector<std::vector<double>> read_branch_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kBranchSchema) {
    throw FormatError(path.string() + ": missing or unsupported schema line");
  }
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing column header");
  const std::size_t cols = detail::split(line, ',').size();
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    const auto cells = detail::split(line, ',');
    if (cells.size() != cols) throw FormatError(path.string() + ": ragged row");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(std::stod(c));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Exclusive ownership of an output directory for one run, released on
/// destruction.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".gmodel.lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr) {
      if (errno == EEXIST) {
        throw IoError("output directory " + dir.string() + " is locked by another run (" +
                      path_.string() + ")");
      }
      throw IoError("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
    }
    std::fclose(f);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

}  // namespace gmodel::io
