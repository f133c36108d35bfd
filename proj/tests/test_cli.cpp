#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

using namespace gmodel;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gmodel_test_cli_" + name);
  fs::remove_all(p);
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("simulate writes a complete run directory", "[cli]") {
  const std::string dir = scratch("sim");
  const Result r = run({"simulate", "--n-points", "64", "--t-end", "0.5", "--out", dir});
  INFO(r.err);
  REQUIRE(r.code == 0);
  for (const char* f : {"meta.json", "diagnostics.csv", "snapshots.bin", "snapshots_index.csv"}) {
    CHECK(fs::exists(fs::path(dir) / f));
  }
  CHECK_FALSE(fs::exists(fs::path(dir) / ".gmodel.lock"));
  const io::LoadedRun loaded = io::load_trajectory(dir);
  CHECK(loaded.times.size() == 6);
  CHECK(loaded.diagnostics.size() == loaded.times.size());
  CHECK(loaded.config.integrator.diagnostics_every_step);
  CHECK(loaded.meta.at("versions").contains("cli11"));
}

TEST_CASE("re-running from meta.json reproduces diagnostics bit for bit", "[cli]") {
  const std::string a = scratch("repro_a"), b = scratch("repro_b");
  REQUIRE(run({"simulate", "--model", "magma", "--magma-n", "3", "--magma-m", "0.5", "--init",
               "random", "--random-offset", "1", "--seed", "42", "--n-points", "64", "--t-end",
               "0.4", "--tol", "1e-9", "--out", a})
              .code == 0);
  const Result r = run({"simulate", "--config", a + "/meta.json", "--out", b});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(slurp(fs::path(a) / "diagnostics.csv") == slurp(fs::path(b) / "diagnostics.csv"));
  CHECK(slurp(fs::path(a) / "snapshots.bin") == slurp(fs::path(b) / "snapshots.bin"));

  // An explicit flag overrides the loaded value.
  const std::string c = scratch("repro_c");
  REQUIRE(run({"simulate", "--config", a + "/meta.json", "--seed", "43", "--out", c}).code == 0);
  CHECK(slurp(fs::path(a) / "diagnostics.csv") != slurp(fs::path(c) / "diagnostics.csv"));
}

TEST_CASE("configuration errors exit with 2", "[cli]") {
  CHECK(run({"simulate", "--no-such-flag"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"simulate", "--model", "kdv"}).code == 2);
  CHECK(run({"simulate", "--n-points", "100", "--out", scratch("bad_n")}).code == 2);
  CHECK(run({"simulate", "--t-end", "-1", "--out", scratch("bad_t")}).code == 2);
  CHECK(run({"simulate", "--model", "conduit", "--out", scratch("bad_u")}).code == 2);
  CHECK(run({"waves", "--K", "0", "--out", scratch("bad_k")}).code == 2);
  CHECK(run({"validate", "rk-convergence", "--dts", "0.01", "--out", scratch("bad_dts")}).code == 2);

  const Result parse = run({"simulate", "--init", "sin(", "--out", scratch("bad_init")});
  CHECK(parse.code == 2);
  CHECK(parse.err.find("position 4") != std::string::npos);

  const std::string src = scratch("needs_out");
  REQUIRE(run({"simulate", "--n-points", "32", "--t-end", "0.1", "--out", src}).code == 0);
  CHECK(run({"simulate", "--config", src + "/meta.json"}).code == 2);
}

TEST_CASE("a locked output directory is refused", "[cli]") {
  const std::string dir = scratch("locked");
  io::DirectoryLock lock(dir);
  const Result r = run({"simulate", "--n-points", "32", "--t-end", "0.1", "--out", dir});
  CHECK(r.code == 2);
  CHECK(r.err.find("locked") != std::string::npos);
}

TEST_CASE("solver failures exit with 3 after writing outputs", "[cli]") {
  const std::string dir = scratch("picard");
  const Result r = run({"simulate", "--model", "conduit", "--init", "1 + 0.1cos(x)", "--n-points",
                        "64", "--picard-max-iter", "1", "--out", dir});
  CHECK(r.code == 3);
  const io::LoadedRun loaded = io::load_trajectory(dir);
  CHECK(loaded.termination == Termination::PicardDiverged);
  CHECK(loaded.diagnostics.size() == loaded.times.size());

  const std::string under = scratch("underflow");
  CHECK(run({"simulate", "--n-points", "64", "--dt-min", "0.05", "--dt-init", "0.05", "--tol",
             "1e-14", "--out", under})
            .code == 3);
  CHECK(io::load_trajectory(under).termination == Termination::StepUnderflow);
}

TEST_CASE("waves writes the branch CSV starting next to the bifurcation point", "[cli]") {
  const std::string dir = scratch("waves");
  const Result r = run({"waves", "--m-fold", "1", "--s-max", "0.05", "--out", dir});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto rows = io::read_branch_csv(fs::path(dir) / "branch.csv");
  REQUIRE(rows.size() == 50);
  CHECK(std::abs(rows.front()[1] - 1.0) <= 1e-4);
  CHECK(rows.front().size() == 4 + 64);
  for (const auto& row : rows) CHECK(row[2] <= 1e-12);
  CHECK(fs::exists(fs::path(dir) / "branch.json"));
}

TEST_CASE("validate subcommands write reports", "[cli]") {
  const std::string os = scratch("order");
  const Result order = run({"validate", "order-study", "--out", os});
  REQUIRE(order.code == 0);
  const auto summary = nlohmann::json::parse(slurp(fs::path(os) / "order_study.json"));
  CHECK(summary.at("fitted_order").get<double>() > 1.7);
  CHECK(summary.at("fitted_order").get<double>() < 2.3);
  CHECK(fs::exists(fs::path(os) / "order_study.csv"));

  const std::string rk = scratch("rk");
  REQUIRE(run({"validate", "rk-convergence", "--out", rk}).code == 0);
  CHECK(fs::exists(fs::path(rk) / "rk_convergence.csv"));

  const Result self = run({"validate", "selftest"});
  CHECK(self.code == 0);
  CHECK(self.out.find("FAIL") == std::string::npos);
}

TEST_CASE("version and config-dump", "[cli]") {
  const Result v = run({"version"});
  CHECK(v.code == 0);
  CHECK(v.out.find("fftw") != std::string::npos);
  const Result d = run({"config-dump", "--model", "cascade", "--epsilon", "0.05"});
  REQUIRE(d.code == 0);
  const io::RunConfig c = nlohmann::json::parse(d.out).get<io::RunConfig>();
  CHECK(c.model.kind == ModelKind::EpsCascade);
  CHECK(c.model.epsilon == 0.05);
  CHECK(run({"--help"}).code == 0);
}
