#include "oracles.hpp"

#include "brsmfg/applications.hpp"
#include "brsmfg/brs.hpp"
#include "brsmfg/ensemble.hpp"

#include <doctest.h>

using namespace brsmfg;

namespace {

PopulationModel simple_population(CostFunction h, CostFunction g, ControlPenalty pen = ControlPenalty::constant(1.0)) {
  PopulationModel pm;
  pm.drift = DriftFunction::zero(1);
  pm.running_cost = std::move(h);
  pm.terminal_cost = std::move(g);
  pm.penalty = std::move(pen);
  pm.diffusion = DiffusionFunction::constant(make_point({1.0}));
  pm.initial_law = gaussian_law(make_point({0.0}), make_point({0.5}));
  return pm;
}

CostFunction half_square(Scalar c = 1.0) {
  return {[c](const Point& x, const Coupling&) { return 0.5 * c * x[0] * x[0]; },
          [c](const Point& x, const Coupling&) { return Point(make_point({c * x[0]})); }};
}

/// Every preset model with a sampler for coupling measures of matching shape.
struct Case {
  ModelSpec model;
  int atoms;
};

std::vector<Case> all_presets() {
  LqParams inter = lq_preset();
  inter.coupling = LqCoupling::interaction;
  LqParams sloped = lq_preset();
  sloped.alpha_slope = 0.5;
  WealthParams wp;
  wp.v = [](const Point& x) { return -0.5 * x[0]; };
  CrowdParams cp;
  cp.kde_bandwidth = 0.5;
  std::vector<Case> out;
  out.push_back({build_lq_model(lq_preset()), 8});
  out.push_back({build_lq_model(ou_preset()), 8});
  out.push_back({build_lq_model(mean_coupling_preset()), 8});
  out.push_back({build_lq_model(inter), 8});
  out.push_back({build_lq_model(sloped), 8});
  out.push_back({build_wealth_model(wp), 8});
  out.push_back({build_crowd_model(cp), 8});
  return out;
}

/// Random ensemble for a model: one cloud per population.
EnsembleState random_state(const ModelSpec& model, Eigen::Index n, std::mt19937_64& rng) {
  EnsembleState s;
  for (std::size_t p = 0; p < model.population_count(); ++p) {
    RowMatrix x = oracle::random_points(rng, n, model.dim());
    if (model.name() == "wealth") x.col(1) = x.col(1).array().abs() + 0.2;
    s.positions.push_back(x);
  }
  return s;
}

}  // namespace

TEST_CASE("brs_drift examples") {
  const ModelSpec m(1, 1.0, {simple_population(half_square(), CostFunction::zero(1))});
  const Point x = make_point({2.0});
  const EmpiricalMeasure any = EmpiricalMeasure::from_values(std::vector<Scalar>{0.0});
  CHECK(brs_drift(m, 0, 0.0, x, MeasureView(any))[0] == doctest::Approx(-2.0));

  LqParams p = lq_preset();
  p.coupling = LqCoupling::interaction;
  p.g_weight = 0.0;
  const ModelSpec inter = build_lq_model(p);
  const EmpiricalMeasure m02 = EmpiricalMeasure::from_values(std::vector<Scalar>{0.0, 2.0});
  CHECK(brs_drift(inter, 0, 0.0, make_point({1.0}), MeasureView(m02))[0] == doctest::Approx(0.0));
}

TEST_CASE("brs_drift names the ingredient that went non-finite") {
  CostFunction bad = half_square();
  bad.gradient = [](const Point&, const Coupling&) { return Point(make_point({std::nan("")})); };
  const ModelSpec m(1, 1.0, {simple_population(bad, CostFunction::zero(1))});
  const EmpiricalMeasure any = EmpiricalMeasure::from_values(std::vector<Scalar>{0.0});
  CHECK_THROWS_WITH(brs_drift(m, 0, 0.0, make_point({1.0}), MeasureView(any)), doctest::Contains("running-cost gradient"));
}

TEST_CASE("every preset cost gradient matches finite differences") {
  std::mt19937_64 rng(21);
  for (const Case& c : all_presets()) {
    CAPTURE(c.model.name());
    Scalar worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      const EnsembleState s = random_state(c.model, c.atoms, rng);
      for (std::size_t p = 0; p < c.model.population_count(); ++p) {
        const Coupling m = s.full_coupling(p);
        Point x = oracle::random_points(rng, 1, c.model.dim()).row(0).transpose();
        if (c.model.name() == "wealth") x[1] = std::abs(x[1]) + 0.2;
        for (const CostFunction* cf : {&c.model.population(p).running_cost, &c.model.population(p).terminal_cost}) {
          const Point fd = oracle::fd_gradient([&](const Point& y) { return cf->value(y, m); }, x, 1e-6);
          const Point an = cf->gradient(x, m);
          if (fd.norm() + an.norm() < 1e-9) continue;
          worst = std::max(worst, oracle::rel_err(an, fd));
        }
      }
    }
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("doubling alpha halves the control part of the drift, and g = 0 makes it independent of T") {
  std::mt19937_64 rng(4);
  LqParams p = mean_coupling_preset();
  const ModelSpec a1 = build_lq_model(p);
  p.alpha = 2.0;
  const ModelSpec a2 = build_lq_model(p);
  p.alpha = 1.0;
  p.horizon = 5.0;
  const ModelSpec t5 = build_lq_model(p);
  for (int rep = 0; rep < 20; ++rep) {
    const EnsembleState s = random_state(a1, 6, rng);
    const Coupling m = s.full_coupling(0);
    const Point x = oracle::random_points(rng, 1, 1).row(0).transpose();
    const Point d1 = brs_drift(a1, 0, 0.3, x, m), d2 = brs_drift(a2, 0, 0.3, x, m);
    CHECK(d2[0] == 0.5 * d1[0]);
    CHECK(brs_drift(t5, 0, 0.3, x, m)[0] == d1[0]);
    const MpcConfig mpc{0.1, true};
    CHECK(brs_control_finite(a2, 0, x, m, 0.3, mpc)[0] == 0.5 * brs_control_finite(a1, 0, x, m, 0.3, mpc)[0]);
  }
}

TEST_CASE("brs_control_finite examples") {
  const ModelSpec m(1, 1.0, {simple_population(half_square(), CostFunction::zero(1))});
  const EmpiricalMeasure any = EmpiricalMeasure::from_values(std::vector<Scalar>{0.0});
  CHECK(brs_control_finite(m, 0, make_point({2.0}), MeasureView(any), 0.0, {0.1, true})[0] == doctest::Approx(-2.0));

  const ModelSpec sloped(1, 1.0, {simple_population(half_square(), CostFunction::zero(1), ControlPenalty::affine(1.0, 1.0))});
  CHECK(brs_control_finite(sloped, 0, make_point({2.0}), MeasureView(any), 0.0, {0.1, true})[0] ==
        doctest::Approx(-2.0 / 1.1));
  CHECK(brs_control_finite(sloped, 0, make_point({2.0}), MeasureView(any), 0.0, {0.1, false})[0] == doctest::Approx(-2.0));

  // alpha stays positive on [0, T] but alpha + dt alpha' does not
  const ModelSpec negative(1, 1.0, {simple_population(half_square(), CostFunction::zero(1), ControlPenalty::affine(1.0, -0.9))});
  CHECK_THROWS_WITH(brs_control_finite(negative, 0, make_point({2.0}), MeasureView(any), 0.9, {0.5, true}),
                    doctest::Contains("penalty denominator nonpositive"));
}

TEST_CASE("brs_control_finite agrees with grid search on the one-step cost") {
  LqParams p = lq_preset();
  p.coupling = LqCoupling::interaction;
  p.alpha_slope = 0.3;
  const ModelSpec model = build_lq_model(p);
  std::mt19937_64 rng(8);
  const MpcConfig mpc{0.1, true};
  for (int rep = 0; rep < 10; ++rep) {
    EnsembleState s;
    s.positions.push_back(oracle::random_points(rng, 4, 1));
    const Scalar t = 0.2;
    for (Eigen::Index i = 0; i < 4; ++i) {
      const Coupling m = s.coupling_for(0, i, CouplingMode::leave_one_out);
      const Point x = s.position(0, i);
      auto phi = [&](const Point& y) { return mpc_value_surrogate(model, 0, t, y, m); };
      const Scalar grad = oracle::fd_gradient(phi, x)[0];
      const Scalar a = model.population(0).penalty.alpha(t) + mpc.dt * model.population(0).penalty.alpha_dot(t);
      // u . grad(Phi) dt + (alpha + dt alpha') dt u^2 / 2
      const Scalar u_star = oracle::grid_argmin([&](Scalar u) { return u * grad * mpc.dt + 0.5 * a * mpc.dt * u * u; });
      CHECK(std::abs(brs_control_finite(model, 0, i, s, t, mpc)[0] - u_star) <= 1e-3);
    }
  }
}

TEST_CASE("mpc_value_surrogate examples") {
  const ModelSpec m(1, 1.0, {simple_population(half_square(), CostFunction::zero(1))});
  const EmpiricalMeasure any = EmpiricalMeasure::from_values(std::vector<Scalar>{0.0});
  CHECK(mpc_value_surrogate(m, 0, 0.0, make_point({2.0}), MeasureView(any)) == doctest::Approx(2.0));
  CostFunction sq = half_square(2.0);
  const ModelSpec m2(1, 2.0, {simple_population(CostFunction::zero(1), sq)});
  CHECK(mpc_value_surrogate(m2, 0, 0.0, make_point({3.0}), MeasureView(any)) == doctest::Approx(4.5));
}

TEST_CASE("brs_control_limit examples and continuity in dt") {
  const ModelSpec m(1, 1.0, {simple_population(half_square(), CostFunction::zero(1), ControlPenalty::constant(2.0))});
  const EmpiricalMeasure any = EmpiricalMeasure::from_values(std::vector<Scalar>{0.0});
  CHECK(brs_control_limit(m, 0, 0.0, make_point({3.0}), MeasureView(any))[0] == doctest::Approx(-1.5));

  LqParams p = lq_preset();
  p.alpha_slope = 0.7;
  const ModelSpec sloped = build_lq_model(p);
  const Point x = make_point({1.3});
  const Point lim = brs_control_limit(sloped, 0, 0.4, x, MeasureView(any));
  const Point fin = brs_control_finite(sloped, 0, x, MeasureView(any), 0.4, {1e-8, true});
  CHECK(oracle::rel_err(lim, fin) <= 1e-6);
}

TEST_CASE("brs_control_finite decreases in magnitude with dt when alpha grows") {
  LqParams p = lq_preset();
  p.alpha_slope = 0.5;
  const ModelSpec model = build_lq_model(p);
  const EmpiricalMeasure any = EmpiricalMeasure::from_values(std::vector<Scalar>{0.0});
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    const Point x = oracle::random_points(rng, 1, 1).row(0).transpose();
    Scalar prev = std::numeric_limits<Scalar>::infinity();
    for (Scalar dt : {0.01, 0.05, 0.1, 0.5}) {
      const Scalar mag = std::abs(brs_control_finite(model, 0, x, MeasureView(any), 0.1, {dt, true})[0]);
      CHECK(mag <= prev);
      prev = mag;
    }
  }
}

TEST_CASE("both routes to the control agree on every preset") {
  std::mt19937_64 rng(31);
  for (const Case& c : all_presets()) {
    CAPTURE(c.model.name());
    for (int rep = 0; rep < 100; ++rep) {
      const EnsembleState s = random_state(c.model, c.atoms, rng);
      const std::size_t p = rep % c.model.population_count();
      const Coupling m = s.full_coupling(p);
      Point x = oracle::random_points(rng, 1, c.model.dim()).row(0).transpose();
      if (c.model.name() == "wealth") x[1] = std::abs(x[1]) + 0.2;
      const Scalar t = 0.5 * c.model.horizon();
      Point fd = oracle::fd_gradient([&](const Point& y) { return mpc_value_surrogate(c.model, p, t, y, m); }, x, 1e-6);
      const Point& mask = c.model.population(p).control_mask;
      if (mask.size()) fd = fd.cwiseProduct(mask);
      const Point want = -fd / c.model.population(p).penalty.alpha(t);
      const Point got = brs_control_limit(c.model, p, t, x, m);
      if (want.norm() + got.norm() < 1e-9) continue;
      CHECK(oracle::rel_err(got, want) <= 1e-5);
    }
  }
}

TEST_CASE("validate_assumptions examples") {
  const ModelSpec m(1, 1.0, {simple_population(half_square(), CostFunction::zero(1))});
  const AssumptionReport r = validate_assumptions(m, 50, 3);
  CHECK(std::abs(r.get("grad_h.x").value - 1.0) < 1e-6);
  CHECK(r.get("sigma.t").value == 0.0);
  CHECK(r.get("sigma.x").value == 0.0);
  CHECK_FALSE(r.any_flagged());
  CHECK_THROWS(validate_assumptions(m, 1, 3));
}

TEST_CASE("wealth Lipschitz quotient respects the Gaussian kernel bound") {
  WealthParams wp;
  wp.psi = Kernel1d::gaussian(0.5);
  wp.xi = Kernel1d::constant(1.0);
  const ModelSpec model = build_wealth_model(wp);
  const AssumptionReport r = validate_assumptions(model, 60, 5);
  for (const auto& q : r.quotients) CHECK(std::isfinite(q.value));
  // max |Psi'| on a dense grid
  Scalar lip = 0.0;
  for (int k = -20000; k <= 20000; ++k) lip = std::max(lip, std::abs(wp.psi.derivative(k * 1e-4)));
  CHECK(lip == doctest::Approx(std::exp(-0.5) / 0.5).epsilon(1e-6));
  // f = (v, 0) with v = 0 is constant
  CHECK(r.get("f.x").value == 0.0);
}

TEST_CASE("penalty and initial law checks") {
  const ModelSpec ok(1, 1.0, {simple_population(half_square(), CostFunction::zero(1), ControlPenalty::affine(1.0, 0.5))});
  CHECK_NOTHROW(ok.check_penalty(0));
  ControlPenalty wrong{[](Scalar t) { return 1.0 + t; }, [](Scalar) { return 3.0; }};
  CHECK_THROWS_WITH(ModelSpec(1, 1.0, {simple_population(half_square(), CostFunction::zero(1), wrong)}),
                    doctest::Contains("alpha_dot inconsistent"));
  const GridDensity g = ok.initial_density(0, Grid(-6, 6, 100));
  CHECK(std::abs(g.mass() - 1.0) <= 1e-10);
  CHECK_THROWS(ModelSpec(1, 0.0, {simple_population(half_square(), CostFunction::zero(1))}));
}
