#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "gmodel/expression.hpp"
#include "gmodel/io.hpp"
#include "test_support.hpp"

using namespace gmodel;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gmodel_test_io_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("expressions evaluate on the grid", "[expression]") {
  const PeriodicGrid grid(64);
  const RealField s = init_expression_parser("sin(x)", grid);
  const RealField sc = init_expression_parser("sin(x)*cos(x)", grid);
  for (std::size_t j = 0; j < grid.n_points(); ++j) {
    const double z = grid.node(j);
    CHECK(s[j] == std::sin(z));
    CHECK(std::abs(sc[j] - 0.5 * std::sin(2 * z)) <= 1e-15);
  }
  const Expression e = parse_expression(" -2x + 3 * cos(2*x) - (1 - .5)");
  CHECK(e(0.3) == Catch::Approx(-0.6 + 3 * std::cos(0.6) - 0.5).epsilon(1e-15));
  CHECK(parse_expression("1e-2 sin(x)")(std::numbers::pi / 2) == Catch::Approx(0.01));
  CHECK(parse_expression("--x")(2.0) == 2.0);
}

TEST_CASE("expression errors report a position", "[expression]") {
  try {
    parse_expression("sin(");
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(e.position() == 4);
    CHECK(std::string(e.what()).find("end of input") != std::string::npos);
  }
  try {
    parse_expression("1 + tan(x)");
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(e.position() == 4);
    CHECK(std::string(e.what()).find("tan") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_expression("sin(x))"), ParseError);
  CHECK_THROWS_AS(parse_expression(""), ParseError);
  CHECK_THROWS_AS(parse_expression("x * "), ParseError);
  CHECK_THROWS_AS(parse_expression("x ^ 2"), ParseError);
}

TEST_CASE("run configuration survives a JSON round trip", "[io]") {
  io::RunConfig c;
  c.model = ModelSpec::magma(3.0, 0.5);
  c.n_points = 512;
  c.initial.random = true;
  c.initial.offset = 1.0;
  c.integrator.scheme = Scheme::RK4;
  c.integrator.dt = 0.0123;
  c.integrator.blowup.tail_threshold = 3e-5;
  c.seed = 99;
  const io::RunConfig back = nlohmann::json(c).get<io::RunConfig>();
  CHECK(nlohmann::json(back) == nlohmann::json(c));
  CHECK(back.model.kind == ModelKind::Magma);
  CHECK(back.integrator.dt == 0.0123);
  CHECK(back.integrator.blowup.tail_threshold == 3e-5);

  c.n_points = 100;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.n_points = 16;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("random initial data is reproducible from the seed", "[io]") {
  io::RunConfig c;
  c.initial.random = true;
  c.seed = 7;
  const PeriodicGrid grid(128);
  const RealField a = io::make_initial_field(c, grid);
  const RealField b = io::make_initial_field(c, grid);
  CHECK(test::max_abs_diff(a, b) == 0.0);
  CHECK(std::abs(mean(a)) < 1e-15);
  c.seed = 8;
  CHECK(test::max_abs_diff(a, io::make_initial_field(c, grid)) > 0.0);
}

TEST_CASE("trajectories round trip bit-exactly", "[io]") {
  io::RunConfig cfg;
  cfg.n_points = 64;
  cfg.integrator.t_end = 0.35;
  const InitialState init = io::make_initial_state(cfg);
  const Trajectory traj = integrate(cfg.model, init, cfg.integrator);
  REQUIRE(traj.times.size() == 5);

  const fs::path dir = scratch("roundtrip");
  io::serialize_trajectory(traj, cfg, dir);
  const io::LoadedRun run = io::load_trajectory(dir);
  REQUIRE(run.times.size() == traj.times.size());
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    CHECK(run.times[i] == traj.times[i]);
    CHECK(std::ranges::equal(run.snapshots[i].values(), traj.snapshots[i].values()));
    CHECK(run.diagnostics[i].sup_norm == traj.diagnostics[i].sup_norm);
    CHECK(run.diagnostics[i].analyticity_radius == traj.diagnostics[i].analyticity_radius);
  }
  CHECK(run.termination == traj.termination);
  CHECK(nlohmann::json(run.config) == nlohmann::json(cfg));

  // Header layout checked byte by byte.
  std::ifstream in(dir / "snapshots.bin", std::ios::binary);
  std::vector<unsigned char> bytes(std::istreambuf_iterator<char>(in), {});
  REQUIRE(bytes.size() == 16 + 5 * 65 * 8);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "GMDL");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 64);
  CHECK(bytes[12] == 5);

  // Index rows point at the snapshot times.
  std::ifstream idx(dir / "snapshots_index.csv");
  std::string line;
  std::getline(idx, line);
  std::getline(idx, line);
  CHECK(line == "index,t,byte_offset");
  std::getline(idx, line);
  CHECK(line == "0,0,16");
  std::getline(idx, line);
  CHECK(line == "1,0.10000000000000001,536");
}

TEST_CASE("corrupt snapshot files are rejected", "[io]") {
  io::RunConfig cfg;
  cfg.n_points = 32;
  cfg.integrator.t_end = 0.2;
  const Trajectory traj = integrate(cfg.model, io::make_initial_state(cfg), cfg.integrator);
  const fs::path dir = scratch("corrupt");
  io::serialize_trajectory(traj, cfg, dir);
  const fs::path bin = dir / "snapshots.bin";

  const auto size = fs::file_size(bin);
  fs::resize_file(bin, size - 3);
  CHECK_THROWS_AS(io::read_snapshots(bin), io::FormatError);

  io::write_snapshots(bin, traj.times, traj.snapshots);
  {
    std::fstream f(bin, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    f.put(2);
  }
  CHECK_THROWS_WITH(io::read_snapshots(bin), Catch::Matchers::ContainsSubstring("version 2"));

  {
    std::fstream f(bin, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  CHECK_THROWS_WITH(io::read_snapshots(bin), Catch::Matchers::ContainsSubstring("magic"));
  CHECK_THROWS_AS(io::load_trajectory(scratch("missing")), io::IoError);
}

TEST_CASE("branch CSV has one row per point", "[io]") {
  waves::ContinuationConfig cfg;
  cfg.K = 16;
  cfg.s_max = 0.005;
  const waves::Branch branch = waves::continue_branch(cfg);
  const fs::path dir = scratch("branch");
  fs::create_directories(dir);
  io::write_branch_csv(dir / "branch.csv", branch, cfg.K);
  const auto rows = io::read_branch_csv(dir / "branch.csv");
  REQUIRE(rows.size() == branch.points.size());
  REQUIRE(rows.front().size() == 4 + 16);
  CHECK(rows.back()[0] == branch.points.back().s);
  CHECK(rows.back()[1] == branch.points.back().c);
  CHECK(rows.back()[4] == branch.points.back().phi.f(1));

  std::ifstream in(dir / "branch.csv");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  CHECK(line.rfind("s,c,residual_sup,newton_iters,f_1,f_2,", 0) == 0);
}

TEST_CASE("directory lock is exclusive", "[io]") {
  const fs::path dir = scratch("lock");
  {
    io::DirectoryLock lock(dir);
    CHECK_THROWS_WITH(io::DirectoryLock(dir), Catch::Matchers::ContainsSubstring("locked"));
  }
  CHECK_NOTHROW(io::DirectoryLock(dir));
}
