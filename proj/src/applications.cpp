#include "brsmfg/applications.hpp"

#include <boost/random/normal_distribution.hpp>

#include <cmath>

namespace brsmfg {

namespace {

Scalar normal_cdf(Scalar z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

Scalar mean_of(const MeasureView& m) {
  return kernel_integral(m, [](const Point& y) { return y[0]; });
}

}  // namespace

InitialLaw gaussian_law(Point mean, Point stdev) {
  if (mean.size() != stdev.size()) fail(ErrorKind::config, "gaussian law: mean and stdev sizes differ");
  if ((stdev.array() < 0.0).any()) fail(ErrorKind::config, "gaussian law: negative stdev");
  InitialLaw law;
  law.sample = [mean, stdev](Rng& rng, Eigen::Index n) {
    boost::random::normal_distribution<Scalar> normal(0.0, 1.0);
    RowMatrix x(n, mean.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < mean.size(); ++k) x(i, k) = mean[k] + stdev[k] * normal(rng);
    }
    return x;
  };
  law.project = [mean, stdev](const Grid& grid) {
    if (grid.dims() != mean.size()) fail(ErrorKind::config, "gaussian law: grid dimension mismatch");
    std::vector<Vector> factors;
    for (int k = 0; k < grid.dims(); ++k) {
      const Axis& a = grid.axis(k);
      Vector f = Vector::Zero(a.cells);
      if (stdev[k] == 0.0) {
        const int i = static_cast<int>(std::floor((mean[k] - a.min) / a.width()));
        if (i < 0 || i >= a.cells) fail(ErrorKind::config, "gaussian law: point mass outside the grid");
        f[i] = 1.0 / a.width();
      } else {
        for (int i = 0; i < a.cells; ++i) {
          f[i] = (normal_cdf((a.face(i + 1) - mean[k]) / stdev[k]) - normal_cdf((a.face(i) - mean[k]) / stdev[k])) / a.width();
        }
      }
      factors.push_back(std::move(f));
    }
    Vector v(grid.size());
    for (Eigen::Index c = 0; c < grid.size(); ++c) {
      const auto [i, j] = grid.unflatten(c);
      v[c] = factors[0][i] * (grid.dims() == 2 ? factors[1][j] : 1.0);
    }
    GridDensity m(grid, std::move(v));
    if (!(m.mass() > 0.0)) fail(ErrorKind::config, "gaussian law: no mass on the grid");
    m.normalize();
    return m;
  };
  return law;
}

// ------------------------------------------------------------------- LQ

ModelSpec build_lq_model(const LqParams& p, const std::string& name) {
  if (!(p.sigma >= 0.0)) fail(ErrorKind::config, "lq: sigma must be nonnegative");
  if (!(p.m0_var >= 0.0)) fail(ErrorKind::config, "lq: m0_var must be nonnegative");
  PopulationModel pm;
  pm.drift = DriftFunction::zero(1);
  const Scalar q = p.q, kappa = p.kappa;
  switch (p.coupling) {
    case LqCoupling::none:
      pm.running_cost = {[q](const Point& x, const Coupling&) { return 0.5 * q * x[0] * x[0]; },
                         [q](const Point& x, const Coupling&) { return make_point({q * x[0]}); }};
      break;
    case LqCoupling::mean:
      pm.running_cost = {[q, kappa](const Point& x, const Coupling& m) {
                           const Scalar r = x[0] - kappa * mean_of(m.own());
                           return 0.5 * q * r * r;
                         },
                         [q, kappa](const Point& x, const Coupling& m) { return make_point({q * (x[0] - kappa * mean_of(m.own()))}); }};
      break;
    case LqCoupling::interaction:
      pm.running_cost = {[q](const Point& x, const Coupling& m) {
                           return kernel_integral(m.own(), [&](const Point& y) { return 0.5 * q * (x[0] - y[0]) * (x[0] - y[0]); });
                         },
                         [q](const Point& x, const Coupling& m) {
                           return make_point({kernel_integral(m.own(), [&](const Point& y) { return q * (x[0] - y[0]); })});
                         }};
      break;
  }
  const Scalar gw = p.g_weight;
  pm.terminal_cost = {[gw](const Point& x, const Coupling&) { return 0.5 * gw * x[0] * x[0]; },
                      [gw](const Point& x, const Coupling&) { return make_point({gw * x[0]}); }};
  pm.penalty = ControlPenalty::affine(p.alpha, p.alpha_slope);
  pm.diffusion = DiffusionFunction::constant(make_point({p.sigma}));
  pm.initial_law = gaussian_law(make_point({p.m0_mean}), make_point({std::sqrt(p.m0_var)}));
  return ModelSpec(1, p.horizon, {std::move(pm)}, name);
}

LqParams lq_preset() { return {}; }

LqParams ou_preset() {
  LqParams p;
  p.g_weight = 0.0;
  p.horizon = 8.0;
  return p;
}

LqParams mean_coupling_preset() {
  LqParams p;
  p.coupling = LqCoupling::mean;
  p.g_weight = 0.0;
  p.m0_mean = 0.5;
  return p;
}

// --------------------------------------------------------------- wealth

Kernel1d Kernel1d::gaussian(Scalar width) {
  if (!(width > 0.0)) fail(ErrorKind::config, "gaussian kernel width must be positive");
  const Scalar s2 = width * width;
  return {[s2](Scalar r) { return std::exp(-0.5 * r * r / s2); }, [s2](Scalar r) { return -r / s2 * std::exp(-0.5 * r * r / s2); }};
}

Kernel1d Kernel1d::quadratic() {
  return {[](Scalar r) { return 0.5 * r * r; }, [](Scalar r) { return r; }};
}

Kernel1d Kernel1d::identity() {
  return {[](Scalar r) { return r; }, [](Scalar) { return 1.0; }};
}

Kernel1d Kernel1d::constant(Scalar c) {
  return {[c](Scalar) { return c; }, [](Scalar) { return 0.0; }};
}

namespace {

/// Atoms of a measure on (y, z) with rho evaluated at each atom's y.
struct WealthAtoms {
  std::vector<Scalar> y, z, w, rho;
};

WealthAtoms wealth_atoms(const WealthParams& p, const MeasureView& m) {
  WealthAtoms a;
  if (const GridDensity* g = m.grid_density()) {
    // rho depends on the y-marginal only: evaluate it once per column.
    const Grid& grid = g->grid();
    const int n0 = grid.axis(0).cells;
    Vector col_mass = Vector::Zero(n0);
    for (Eigen::Index c = 0; c < grid.size(); ++c) col_mass[grid.unflatten(c)[0]] += g->value(c) * grid.cell_volume();
    Vector col_rho = Vector::Zero(n0);
    for (int i = 0; i < n0; ++i) {
      for (int k = 0; k < n0; ++k) col_rho[i] += col_mass[k] * p.psi.value(grid.axis(0).midpoint(i) - grid.axis(0).midpoint(k));
    }
    for (Eigen::Index c = 0; c < grid.size(); ++c) {
      if (g->value(c) == 0.0) continue;
      const Point mid = grid.midpoint(c);
      a.y.push_back(mid[0]);
      a.z.push_back(mid[1]);
      a.w.push_back(g->value(c) * grid.cell_volume());
      a.rho.push_back(col_rho[grid.unflatten(c)[0]]);
    }
    return a;
  }
  m.for_each_atom([&](const Point& x, Scalar w) {
    a.y.push_back(x[0]);
    a.z.push_back(x[1]);
    a.w.push_back(w);
  });
  a.rho.assign(a.y.size(), 0.0);
  for (std::size_t j = 0; j < a.y.size(); ++j) {
    for (std::size_t k = 0; k < a.y.size(); ++k) a.rho[j] += a.w[k] * p.psi.value(a.y[j] - a.y[k]);
  }
  return a;
}

}  // namespace

Scalar wealth_rho(const WealthParams& p, const MeasureView& m, Scalar y) {
  return kernel_integral(m, [&](const Point& x) { return p.psi.value(y - x[0]); });
}

ModelSpec build_wealth_model(const WealthParams& params) {
  if (!(params.z_min > 0.0)) fail(ErrorKind::config, "wealth: z_min must be positive");
  if (!(params.kappa > 0.0)) fail(ErrorKind::config, "wealth: kappa must be positive");
  for (Scalar r : {0.1, 0.5, 1.0, 2.0, 3.7}) {
    if (std::abs(params.psi.value(r) - params.psi.value(-r)) > 1e-12 * (1.0 + std::abs(params.psi.value(r))))
      fail(ErrorKind::config, "wealth: Psi must be even");
    if (std::abs(params.phi.value(r) - params.phi.value(-r)) > 1e-12 * (1.0 + std::abs(params.phi.value(r))))
      fail(ErrorKind::config, "wealth: phi must be even");
  }
  const WealthParams p = params;
  PopulationModel pm;
  pm.drift.value = [p](const Point& x, const Coupling&) { return make_point({p.v(x), 0.0}); };
  pm.running_cost.value = [p](const Point& x, const Coupling& m) {
    const WealthAtoms a = wealth_atoms(p, m.own());
    Scalar rho = 0.0;
    for (std::size_t k = 0; k < a.y.size(); ++k) rho += a.w[k] * p.psi.value(x[0] - a.y[k]);
    Scalar h = 0.0;
    for (std::size_t k = 0; k < a.y.size(); ++k) {
      h += a.w[k] * p.xi.value(0.5 * (rho + a.rho[k])) * p.psi.value(x[0] - a.y[k]) * p.phi.value(x[1] - a.z[k]);
    }
    return h;
  };
  pm.running_cost.gradient = [p](const Point& x, const Coupling& m) {
    const WealthAtoms a = wealth_atoms(p, m.own());
    Scalar rho = 0.0, drho = 0.0;
    for (std::size_t k = 0; k < a.y.size(); ++k) {
      rho += a.w[k] * p.psi.value(x[0] - a.y[k]);
      drho += a.w[k] * p.psi.derivative(x[0] - a.y[k]);
    }
    Scalar gy = 0.0, gz = 0.0;
    for (std::size_t k = 0; k < a.y.size(); ++k) {
      const Scalar s = 0.5 * (rho + a.rho[k]);
      const Scalar xi = p.xi.value(s);
      const Scalar psi = p.psi.value(x[0] - a.y[k]);
      const Scalar phi = p.phi.value(x[1] - a.z[k]);
      gy += a.w[k] * (p.xi.derivative(s) * 0.5 * drho * psi * phi + xi * p.psi.derivative(x[0] - a.y[k]) * phi);
      gz += a.w[k] * xi * psi * p.phi.derivative(x[1] - a.z[k]);
    }
    return make_point({gy, gz});
  };
  pm.terminal_cost = CostFunction::zero(2);
  pm.penalty = ControlPenalty::constant(1.0);
  const Scalar amp = std::sqrt(2.0 * p.kappa);
  pm.diffusion.value = [amp](Scalar, const Point& x) { return make_point({0.0, amp * std::abs(x[1])}); };
  InitialLaw law = gaussian_law(p.m0_mean, p.m0_stdev);
  const auto base = law.sample;
  const Scalar z_min = p.z_min;
  law.sample = [base, z_min](Rng& rng, Eigen::Index n) {
    RowMatrix x = base(rng, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (x(i, 1) < z_min) x(i, 1) = std::max(2.0 * z_min - x(i, 1), z_min);
    }
    return x;
  };
  pm.initial_law = std::move(law);
  pm.control_mask = make_point({0.0, 1.0});
  pm.floors = {{1, p.z_min}};
  return ModelSpec(2, p.horizon, {std::move(pm)}, "wealth");
}

// ---------------------------------------------------------------- crowd

CostFunction quadratic_target(Point target, Scalar c) {
  return {[target, c](const Point& x, const Coupling&) { return 0.5 * c * (x - target).squaredNorm(); },
          [target, c](const Point& x, const Coupling&) { return Point(c * (x - target)); }};
}

CrowdParams::CrowdParams() : psi{quadratic_target(make_point({2.0, 0.0}), 1.0), quadratic_target(make_point({-2.0, 0.0}), 1.0)} {}

ModelSpec build_crowd_model(const CrowdParams& params) {
  if (!(params.lambda >= 0.0)) fail(ErrorKind::config, "crowd: lambda must be nonnegative");
  if (!(params.kde_bandwidth >= 0.0)) fail(ErrorKind::config, "crowd: kde_bandwidth must be nonnegative");
  if (params.sigma.size() != 2 || (params.sigma.array() < 0.0).any()) fail(ErrorKind::config, "crowd: sigma must be a nonnegative 2-vector");
  std::vector<PopulationModel> pops;
  const Scalar lambda = params.lambda, bw = params.kde_bandwidth;
  auto bandwidth = [bw](const MeasureView& m) { return bw > 0.0 || m.kind() == MeasureView::Kind::grid ? bw : silverman_bandwidth(m); };
  for (std::size_t i = 0; i < 2; ++i) {
    PopulationModel pm;
    pm.drift = DriftFunction::zero(2);
    pm.running_cost.value = [lambda, bandwidth](const Point& x, const Coupling& m) {
      if (m.size() != 2) fail(ErrorKind::domain, "crowd cost needs both populations");
      const MeasureView& own = m.own();
      const MeasureView& other = m.population(1 - m.self());
      return density_at(own, x, bandwidth(own)) + lambda * density_at(other, x, bandwidth(other));
    };
    pm.running_cost.gradient = [lambda, bandwidth](const Point& x, const Coupling& m) {
      if (m.size() != 2) fail(ErrorKind::domain, "crowd cost needs both populations");
      const MeasureView& own = m.own();
      const MeasureView& other = m.population(1 - m.self());
      return Point(density_gradient(own, x, bandwidth(own)) + lambda * density_gradient(other, x, bandwidth(other)));
    };
    pm.terminal_cost = params.psi[i];
    pm.penalty = ControlPenalty::constant(1.0);
    pm.density_feedback = 1.0 + lambda;
    pm.diffusion = DiffusionFunction::constant(params.sigma);
    pm.initial_law = gaussian_law(params.m0_mean[i], params.m0_stdev[i]);
    pops.push_back(std::move(pm));
  }
  return ModelSpec(2, params.horizon, std::move(pops), "crowd");
}

Scalar overlap(const GridDensity& a, const GridDensity& b) {
  if (!(a.grid() == b.grid())) fail(ErrorKind::domain, "overlap: grids differ");
  return a.values().cwiseMin(b.values()).sum() * a.grid().cell_volume();
}

}  // namespace brsmfg
