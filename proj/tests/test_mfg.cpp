#include "oracles.hpp"

#include "brsmfg/applications.hpp"
#include "brsmfg/mfg.hpp"

#include <doctest.h>

#include <sstream>

using namespace brsmfg;

namespace {

/// 1-D single-population model with the given h, g and alpha; f = 0.
ModelSpec custom(CostFunction h, CostFunction g, Scalar alpha, Scalar sigma, Scalar horizon = 1.0) {
  PopulationModel pm;
  pm.drift = DriftFunction::zero(1);
  pm.running_cost = std::move(h);
  pm.terminal_cost = std::move(g);
  pm.penalty = ControlPenalty::constant(alpha);
  pm.diffusion = DiffusionFunction::constant(make_point({sigma}));
  pm.initial_law = gaussian_law(make_point({0.0}), make_point({0.5}));
  return ModelSpec(1, horizon, {pm});
}

CostFunction linear_cost() {
  return {[](const Point& x, const Coupling&) { return x[0]; }, [](const Point&, const Coupling&) { return Point(make_point({1.0})); }};
}

CostFunction constant_cost(Scalar c) {
  return {[c](const Point&, const Coupling&) { return c; }, [](const Point&, const Coupling&) { return Point(Point::Zero(1)); }};
}

/// Uniform density at every slice time, for HJB runs whose costs ignore m.
DensityPath flat_path(const Grid& grid, Scalar horizon, int n_t) {
  DensityPath path;
  for (int k = 0; k <= n_t; ++k) path.snapshots.push_back({horizon * k / n_t, {GridDensity::uniform(grid)}});
  return path;
}

Scalar linf_vs_riccati(const ValueField& w, const LqParams& p) {
  Scalar err = 0.0;
  for (Eigen::Index k = 0; k < w.slices(); ++k) {
    const auto r = oracle::riccati_at(w.times[k], p.horizon, p.q, p.g_weight, p.alpha, p.sigma, 4000);
    for (Eigen::Index c = 0; c < w.grid.size(); ++c) {
      const Scalar x = w.grid.midpoint(c)[0];
      err = std::max(err, std::abs(w.values(k, c) - (r.a * x * x + r.b)));
    }
  }
  return err;
}

}  // namespace

TEST_CASE("zero data gives the zero value function") {
  const Grid grid(-3, 3, 60);
  const ModelSpec model = custom(CostFunction::zero(1), CostFunction::zero(1), 1.0, 1.0);
  const ValueField w = hjb_backward(model, flat_path(grid, 1.0, 20), grid, 20);
  CHECK(w.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("LQ value function matches the Riccati solution, terminal slice exactly g") {
  const LqParams p = lq_preset();
  const ModelSpec model = build_lq_model(p);
  const Grid grid(-6, 6, 400);
  const ValueField w = hjb_backward(model, flat_path(grid, 1.0, 100), grid, 100);
  CHECK(linf_vs_riccati(w, p) <= 2e-2);
  for (Eigen::Index c = 0; c < grid.size(); ++c) {
    const Scalar x = grid.midpoint(c)[0];
    CHECK(w.values(w.slices() - 1, c) == 0.5 * x * x);
  }
  // a non-fixed-point Riccati case
  LqParams q = lq_preset();
  q.g_weight = 0.0;
  q.sigma = 0.5;
  const ValueField wq = hjb_backward(build_lq_model(q), flat_path(grid, 1.0, 100), grid, 100);
  CHECK(linf_vs_riccati(wq, q) <= 2e-2);
}

TEST_CASE("linear terminal cost: characteristics give w = x - (T - t)/(2 alpha)") {
  const Grid grid(-3, 3, 120);
  for (Scalar alpha : {1.0, 2.0}) {
    const ModelSpec model = custom(CostFunction::zero(1), linear_cost(), alpha, 0.0);
    const ValueField w = hjb_backward(model, flat_path(grid, 1.0, 50), grid, 50);
    Scalar err = 0.0;
    for (Eigen::Index k = 0; k < w.slices(); ++k)
      for (Eigen::Index c = 0; c < grid.size(); ++c)
        err = std::max(err, std::abs(w.values(k, c) - (grid.midpoint(c)[0] - (1.0 - w.times[k]) / (2.0 * alpha))));
    CHECK(err < 1e-10);
  }
}

TEST_CASE("central differences are exact for quadratics up to the boundary") {
  const Grid grid(-1, 2, 9);
  Vector w(9);
  for (int c = 0; c < 9; ++c) {
    const Scalar x = grid.midpoint(c)[0];
    w[c] = 3 * x * x - x + 2;
  }
  const Vector g = central_gradient(grid, w), l = central_laplacian(grid, w);
  for (int c = 0; c < 9; ++c) {
    CHECK(g[c] == doctest::Approx(6 * grid.midpoint(c)[0] - 1).epsilon(1e-12));
    CHECK(l[c] == doctest::Approx(6.0).epsilon(1e-10));
  }
}

TEST_CASE("an unstable backward march is detected") {
  const Grid grid(-6, 6, 200);
  HjbProblem hp;
  hp.grid = grid;
  hp.n_t = 4;
  hp.t1 = 1.0;
  hp.terminal = Vector::Zero(grid.size());
  for (Eigen::Index c = 0; c < grid.size(); ++c) hp.terminal[c] = std::pow(grid.midpoint(c)[0], 2) + (c % 2 ? 1e-3 : -1e-3);
  hp.running_cost.assign(5, Vector::Zero(grid.size()));
  hp.drift.assign(5, Vector::Zero(grid.size()));
  hp.alpha = [](Scalar) { return 1.0; };
  hp.sigma2 = [&](Scalar) { return Vector::Constant(grid.size(), 1.0); };
  hp.cfl_safety = 40.0;
  CHECK_THROWS_WITH(solve_hjb(hp), doctest::Contains("HJB unstable, refine grid/time"));
}

TEST_CASE("Picard on the LQ preset: immediate fixed point, Riccati drift and variance") {
  const LqParams p = lq_preset();
  const ModelSpec model = build_lq_model(p);
  const Grid grid(-6, 6, 400);
  const MfgSolution sol = solve_mfg_picard(model, model.initial_density(0, grid), grid, 100, {});
  REQUIRE(sol.residuals.size() >= 2);
  CHECK(sol.residuals[1] <= 1e-12);
  CHECK(sol.converged);
  CHECK(linf_vs_riccati(sol.value, p) <= 2e-2);
  // the recovered drift -(1/alpha) w_x against -x
  Scalar drift_err = 0.0;
  for (Eigen::Index k = 0; k < sol.value.slices(); ++k)
    for (Eigen::Index c = 0; c < grid.size(); ++c)
      drift_err = std::max(drift_err, std::abs(-sol.value.gradients(k, c) + grid.midpoint(c)[0]));
  CHECK(drift_err <= 3e-2);
  // OU variance under drift -x from variance 0.25
  const Scalar expect = 0.5 - 0.25 * std::exp(-2.0);
  CHECK(moments(sol.density.final().fields[0], 2).variance[0] == doctest::Approx(expect).epsilon(0.03));
  for (const auto& s : sol.density.snapshots) CHECK(std::abs(s.fields[0].mass() - 1.0) <= 1e-12);
}

TEST_CASE("Picard residuals decrease on the mean-coupling preset") {
  const ModelSpec model = build_lq_model(mean_coupling_preset());
  const Grid grid(-6, 6, 200);
  PicardConfig pc;
  pc.theta = 0.5;
  pc.tol = 1e-10;
  const MfgSolution sol = solve_mfg_picard(model, model.initial_density(0, grid), grid, 50, pc);
  REQUIRE(sol.residuals.size() >= 2);
  for (std::size_t k = 1; k < sol.residuals.size(); ++k) CHECK(sol.residuals[k] < sol.residuals[k - 1]);

  pc.max_iters = 1;
  LqParams stiff = mean_coupling_preset();
  stiff.kappa = 0.5;
  const ModelSpec sm = build_lq_model(stiff);
  const MfgSolution short_run = solve_mfg_picard(sm, sm.initial_density(0, grid), grid, 50, pc);
  CHECK_FALSE(short_run.converged);
  CHECK(short_run.residuals.size() == 1);
}

TEST_CASE("Picard configuration is validated") {
  PicardConfig pc;
  pc.theta = 0.0;
  CHECK_THROWS(pc.validate());
  pc.theta = 1.0;
  pc.tol = 0.0;
  CHECK_THROWS(pc.validate());
}

TEST_CASE("window HJB reduces to h + g/T at first order") {
  const Grid grid(-6, 6, 200);
  const std::vector<Scalar> dts{0.1, 0.05, 0.025, 0.0125};
  const ReductionResult lq = mpc_reduction_check(build_lq_model(lq_preset()), grid, dts);
  CHECK(lq.order == doctest::Approx(1.0).epsilon(0.3));
  for (std::size_t k = 1; k < lq.rows.size(); ++k) {
    const Scalar ratio = lq.rows[k - 1].error / lq.rows[k].error;
    CHECK(ratio >= 2.0 / 1.4);
    CHECK(ratio <= 2.0 * 1.4);
  }
  LqParams inter = lq_preset();
  inter.coupling = LqCoupling::interaction;
  for (const LqParams& p : {ou_preset(), mean_coupling_preset(), inter}) {
    CHECK(mpc_reduction_check(build_lq_model(p), grid, dts).order >= 0.7);
  }
  const ModelSpec flat = custom(constant_cost(2.5), CostFunction::zero(1), 1.0, 1.0);
  for (const ReductionRow& r : mpc_reduction_check(flat, grid, dts).rows) CHECK(r.error <= 1e-12);
}

TEST_CASE("BRS and MFG densities") {
  const Grid grid(-6, 6, 200);
  const ModelSpec zero = custom(CostFunction::zero(1), CostFunction::zero(1), 1.0, 1.0);
  const ComparisonResult z = compare_brs_mfg(zero, zero.initial_density(0, grid), grid, 20, {});
  CHECK(z.max_w1 <= 1e-12);

  const ModelSpec lq = build_lq_model(lq_preset());
  const ComparisonResult c = compare_brs_mfg(lq, lq.initial_density(0, grid), grid, 20, {});
  CHECK(std::isfinite(c.max_w1));
  CHECK(c.max_w1 > 0.0);
  CHECK(c.times.size() == 21);

  // continuity in the coupling strength
  LqParams weak = mean_coupling_preset();
  weak.kappa = 1e-4;
  LqParams none = mean_coupling_preset();
  none.kappa = 0.0;
  const ModelSpec mw = build_lq_model(weak), mn = build_lq_model(none);
  const Scalar dw = compare_brs_mfg(mw, mw.initial_density(0, grid), grid, 20, {}).max_w1;
  const Scalar dn = compare_brs_mfg(mn, mn.initial_density(0, grid), grid, 20, {}).max_w1;
  CHECK(std::abs(dw - dn) <= 1e-3);
}

TEST_CASE("order fit and CSV writers") {
  CHECK(fit_loglog_slope({1, 2, 4}, {3, 6, 12}) == doctest::Approx(1.0));
  CHECK(fit_loglog_slope({1, 2, 4}, {1, 0.25, 0.0625}) == doctest::Approx(-2.0));
  std::stringstream ss;
  write_iteration_log_csv(ss, {0.5, 0.25});
  CHECK(ss.str() == "iter,residual\n1,0.5\n2,0.25\n");
}
