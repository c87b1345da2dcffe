#include "oracles.hpp"

#include "brsmfg/applications.hpp"
#include "brsmfg/fokker_planck.hpp"

#include <doctest.h>

#include <sstream>

using namespace brsmfg;

namespace {

ModelSpec heat_model(Scalar sigma) {
  PopulationModel pm;
  pm.drift = DriftFunction::zero(1);
  pm.running_cost = CostFunction::zero(1);
  pm.terminal_cost = CostFunction::zero(1);
  pm.penalty = ControlPenalty::constant(1.0);
  pm.diffusion = DiffusionFunction::constant(make_point({sigma}));
  pm.initial_law = gaussian_law(make_point({0.0}), make_point({0.5}));
  return ModelSpec(1, 1.0, {pm});
}

DensityPath run(const ModelSpec& model, const GridDensity& m0, Scalar t_final, int records = 10) {
  FpkConfig cfg;
  cfg.t_final = t_final;
  cfg.record_every = records;
  const std::array<GridDensity, 1> init{m0};
  return solve_fpk(model, init, cfg);
}

void check_conservation(const DensityPath& path) {
  for (const auto& s : path.snapshots) {
    for (const auto& f : s.fields) {
      CHECK(std::abs(f.mass() - 1.0) <= 1e-12);
      CHECK(f.min_value() >= -1e-13);
    }
  }
}

}  // namespace

TEST_CASE("pure diffusion spreads a Gaussian like the heat kernel") {
  const Grid grid(-6, 6, 400);
  const DensityPath path = run(heat_model(1.0), oracle::gaussian_cells(grid, 0.0, 0.25), 0.5);
  CHECK(moments(path.final().fields[0], 2).variance[0] == doctest::Approx(0.75).epsilon(0.02));
  check_conservation(path);
}

TEST_CASE("OU preset relaxes to the stationary Gaussian") {
  const Grid grid(-6, 6, 400);
  const ModelSpec model = build_lq_model(ou_preset());
  const DensityPath path = run(model, model.initial_density(0, grid), 8.0);
  const GridDensity& m = path.final().fields[0];
  CHECK(moments(m, 2).variance[0] == doctest::Approx(0.5).epsilon(0.02));
  CHECK(l1_distance(m, oracle::gaussian_cells(grid, 0.0, 0.5)) <= 2e-2);
  check_conservation(path);
  CHECK(path.max_boundary_mass <= 1e-8);
}

TEST_CASE("symmetric interaction keeps the mean") {
  LqParams p = lq_preset();
  p.coupling = LqCoupling::interaction;
  const ModelSpec model = build_lq_model(p);
  const Grid grid(-6, 6, 200);
  const DensityPath path = run(model, model.initial_density(0, grid), 1.0);
  for (const auto& s : path.snapshots) CHECK(std::abs(moments(s.fields[0], 1).mean[0]) < 1e-12);
  check_conservation(path);
}

TEST_CASE("no drift and no diffusion leaves the density unchanged") {
  const Grid grid(-6, 6, 100);
  const GridDensity m0 = oracle::gaussian_cells(grid, 0.4, 0.3);
  const DensityPath path = run(heat_model(0.0), m0, 1.0);
  CHECK(path.final().fields[0].values() == m0.values());
}

TEST_CASE("advective OU benchmark converges at first order in dx") {
  // sigma = 0: x' = -x, so m(t, x) = e^t m0(x e^t), a Gaussian with variance 0.25 e^{-2t}
  LqParams p = ou_preset();
  p.sigma = 0.0;
  const ModelSpec model = build_lq_model(p);
  std::vector<Scalar> err;
  for (int n : {100, 200}) {
    const Grid grid(-3, 3, n);
    const DensityPath path = run(model, oracle::gaussian_cells(grid, 0.0, 0.25), 1.0);
    err.push_back(l1_distance(path.final().fields[0], oracle::gaussian_cells(grid, 0.0, 0.25 * std::exp(-2.0))));
    check_conservation(path);
  }
  const Scalar ratio = err[0] / err[1];
  CHECK(ratio >= 1.6);
  CHECK(ratio <= 2.4);
}

TEST_CASE("record times are hit exactly and looked up strictly") {
  const Grid grid(-6, 6, 100);
  const ModelSpec model = build_lq_model(lq_preset());
  FpkConfig cfg;
  cfg.record_times = {0.0, 0.123, 0.5, 1.0};
  const std::array<GridDensity, 1> m0{model.initial_density(0, grid)};
  const DensityPath path = solve_fpk(model, m0, cfg);
  REQUIRE(path.snapshots.size() == 4);
  CHECK(path.times()[1] == 0.123);
  CHECK_NOTHROW(path.at(0.5));
  CHECK_THROWS_WITH(path.at(0.25), doctest::Contains("mismatched time grids"));
}

TEST_CASE("absorbing boundaries lose mass but stay nonnegative") {
  const Grid grid(-1, 1, 40);
  FpkConfig cfg;
  cfg.set_boundary(Boundary::absorbing);
  cfg.t_final = 1.0;
  const ModelSpec model = heat_model(1.0);
  const std::array<GridDensity, 1> m0{oracle::gaussian_cells(grid, 0.0, 0.1)};
  const DensityPath path = solve_fpk(model, m0, cfg);
  Scalar prev = 1.0 + 1e-15;
  for (const auto& s : path.snapshots) {
    CHECK(s.fields[0].mass() <= prev);
    CHECK(s.fields[0].min_value() >= 0.0);
    prev = s.fields[0].mass();
  }
  CHECK(prev < 0.9);
}

TEST_CASE("a step beyond the stability bound is refused") {
  const Grid grid(-6, 6, 100);
  const ModelSpec model = heat_model(1.0);
  const std::array<GridDensity, 1> m0{oracle::gaussian_cells(grid, 0.0, 0.25)};
  CHECK_THROWS_WITH(fpk_step(model, m0, 0.0, 1.0), doctest::Contains("cell"));
  CHECK_NOTHROW(fpk_step(model, m0, 0.0, 1e-4));
  CHECK_THROWS(solve_fpk(model, m0, FpkConfig{.cfl_safety = 1.5}));
  CHECK_THROWS(fpk_step(model, std::array<GridDensity, 1>{GridDensity::uniform(Grid(0, 1, 4))}, 0.0, 1e-4));
}

TEST_CASE("results do not depend on the worker count") {
  CrowdParams cp;
  const ModelSpec model = build_crowd_model(cp);
  const Grid grid({{-4, 4, 24}, {-3, 3, 18}});
  const std::array<GridDensity, 2> m0{model.initial_density(0, grid), model.initial_density(1, grid)};
  FpkConfig cfg;
  cfg.t_final = 0.2;
  const DensityPath a = solve_fpk(model, m0, cfg);
  cfg.workers = 4;
  const DensityPath b = solve_fpk(model, m0, cfg);
  for (std::size_t p = 0; p < 2; ++p) CHECK(a.final().fields[p].values() == b.final().fields[p].values());
}

TEST_CASE("density path CSV carries a metadata header") {
  const Grid grid(-6, 6, 10);
  const DensityPath path = run(heat_model(0.5), oracle::gaussian_cells(grid, 0.0, 1.0), 0.1, 1);
  std::stringstream ss;
  write_density_path_csv(ss, path, {{"model", "heat"}});
  const std::string s = ss.str();
  CHECK(s.find("# model=heat") != std::string::npos);
  CHECK(s.find("t,pop,i,mid0,value") != std::string::npos);
}
