#include "brsmfg/cli.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace brsmfg;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "brsmfg_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "brsmfg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (err_text) *err_text = err.str();
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// All files of a run directory except the ones naming the run itself.
std::map<std::string, std::string> outputs(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = slurp(e.path());
  return files;
}

std::map<std::string, std::string> report(const fs::path& dir) {
  std::map<std::string, std::string> kv;
  std::istringstream is(slurp(dir / "report.txt"));
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("config parsing") {
  RunConfig c;
  c.load_text("# comment\nsim.dt = 0.02  # trailing\n\nmodel.preset=ou\n");
  CHECK(c.number("sim.dt") == 0.02);
  CHECK(c.text("model.preset") == "ou");
  CHECK(c.explicitly_set("sim.dt"));
  CHECK_FALSE(c.explicitly_set("sim.seed"));
  CHECK_THROWS_WITH(c.set("sim.nope=1"), doctest::Contains("sim.nope"));
  CHECK_THROWS(c.load_text("just words\n"));
  c.set("chaos.n_list", "1, 2,3");
  CHECK(c.numbers("chaos.n_list") == std::vector<double>{1, 2, 3});
  c.set("sim.seed", "x");
  CHECK_THROWS_WITH(c.integer("sim.seed"), doctest::Contains("sim.seed"));
}

TEST_CASE("unknown keys and bad values exit with the config status") {
  const fs::path dir = scratch("bad");
  std::string err;
  CHECK(run({"fpk", "--out", dir.string(), "--set", "grid.bogus=3"}, &err) == exit_config);
  CHECK(err.find("grid.bogus") != std::string::npos);
  CHECK(run({"fpk", "--out", dir.string(), "--set", "fpk.boundary=open"}) == exit_config);
  CHECK(run({"fpk", "--out", dir.string(), "--config", (dir / "missing.cfg").string()}) == exit_config);
  CHECK(run({"nosuch"}) == exit_config);
}

TEST_CASE("simulate twice with the same seed gives byte-identical outputs") {
  const fs::path cfg = scratch("cfg") / "lq.cfg";
  write(cfg, "model.preset = lq\nsim.n_particles = 200\nsim.snapshots = full\nsim.reference = fpk\ngrid.cells = 200\n");
  const fs::path a = scratch("sim_a"), b = scratch("sim_b"), c = scratch("sim_c");
  REQUIRE(run({"simulate", "--config", cfg.string(), "--set", "sim.seed=7", "--out", a.string()}) == exit_ok);
  REQUIRE(run({"simulate", "--config", cfg.string(), "--set", "sim.seed=7", "--out", b.string(), "--workers", "4"}) == exit_ok);
  CHECK(outputs(a) == outputs(b));
  for (const char* f : {"manifest.txt", "report.txt", "metrics.csv", "final.csv", "trajectory.csv"}) CHECK(fs::exists(a / f));
  // round trip through the manifest
  REQUIRE(run({"simulate", "--config", (a / "manifest.txt").string(), "--out", c.string()}) == exit_ok);
  CHECK(outputs(a) == outputs(c));
  CHECK(slurp(a / "manifest.txt").find("sim.seed=7\n") != std::string::npos);
  CHECK(slurp(a / "manifest.txt").find("# artifact.version=") != std::string::npos);
}

TEST_CASE("fpk on the OU preset reports the stationary variance") {
  const fs::path dir = scratch("fpk");
  REQUIRE(run({"fpk", "--set", "model.preset=ou", "--out", dir.string()}) == exit_ok);
  const auto r = report(dir);
  CHECK(std::stod(r.at("pop0.final_variance0")) == doctest::Approx(0.5).epsilon(0.02));
  CHECK(r.at("boundary_mass_flag") == "ok");
  CHECK(std::abs(std::stod(r.at("pop0.max_mass_drift"))) <= 1e-12);
  CHECK(slurp(dir / "manifest.txt").find("lq.horizon=8\n") != std::string::npos);
}

TEST_CASE("mpc-order reports a first-order fit") {
  const fs::path dir = scratch("mpc");
  REQUIRE(run({"mpc-order", "--set", "grid.cells=200", "--out", dir.string()}) == exit_ok);
  const double order = std::stod(report(dir).at("fitted_order"));
  CHECK(order >= 0.7);
  CHECK(order <= 1.3);
}

TEST_CASE("numerical failures and non-convergence have their own exit status") {
  const fs::path dir = scratch("fail");
  std::string err;
  CHECK(run({"simulate", "--set", "model.preset=ou", "--set", "sim.dt=2.5", "--set", "sim.t_final=10000", "--set",
             "mpc.dt=0.01", "--out", dir.string()},
            &err) == exit_numerical);
  CHECK(err.find("non-finite") != std::string::npos);

  const fs::path nc = scratch("nc");
  CHECK(run({"mfg", "--set", "model.preset=mean_coupling", "--set", "lq.kappa=0.5", "--set", "picard.max_iters=1", "--set",
             "grid.cells=100", "--set", "mfg.n_t=20", "--out", nc.string()}) == exit_not_converged);
  CHECK(report(nc).at("converged") == "false");
  CHECK(fs::exists(nc / "iterations.csv"));
}

TEST_CASE("every subcommand runs") {
  const std::vector<std::vector<std::string>> cmds = {
      {"mfg", "--set", "grid.cells=100", "--set", "mfg.n_t=20"},
      {"compare", "--set", "grid.cells=100", "--set", "mfg.n_t=20"},
      {"chaos-study", "--set", "chaos.n_list=20,40", "--set", "chaos.seeds=3", "--set", "sim.dt=0.05", "--set", "grid.cells=100"},
      {"wealth", "--set", "wealth.y_cells=12", "--set", "wealth.z_cells=12"},
      {"wealth", "--set", "wealth.mode=particles", "--set", "sim.n_particles=50"},
      {"crowd", "--set", "crowd.x_cells=16", "--set", "crowd.y_cells=12"},
      {"crowd", "--set", "crowd.mode=particles", "--set", "sim.n_particles=50"},
  };
  int k = 0;
  for (auto args : cmds) {
    const fs::path dir = scratch("all" + std::to_string(k++));
    args.push_back("--out");
    args.push_back(dir.string());
    CAPTURE(args[0]);
    CHECK(run(args) == exit_ok);
    CHECK(fs::exists(dir / "manifest.txt"));
    CHECK(fs::exists(dir / "report.txt"));
  }
}

TEST_CASE("BRSMFG_OUT sets the default output root") {
  const fs::path root = scratch("root");
  ::setenv("BRSMFG_OUT", root.c_str(), 1);
  CHECK(run({"mpc-order", "--set", "grid.cells=60", "--set", "mpc_order.dt_list=0.1,0.05"}) == exit_ok);
  ::unsetenv("BRSMFG_OUT");
  CHECK(fs::exists(root / "mpc-order" / "report.txt"));
}
