#pragma once

#include "brsmfg/model.hpp"

#include <functional>

namespace brsmfg {

// ---------------------------------------------------------------------------
// Linear-quadratic family (one dimension, one population)
// ---------------------------------------------------------------------------

enum class LqCoupling {
  none,         ///< h = q x^2 / 2
  mean,         ///< h = q (x - kappa * mean(m))^2 / 2
  interaction,  ///< h = q/2 * integral (x - y)^2 m(dy)
};

struct LqParams {
  Scalar q = 1.0;         ///< running cost weight
  Scalar g_weight = 1.0;  ///< g = g_weight x^2 / 2
  Scalar alpha = 1.0;
  Scalar alpha_slope = 0.0;  ///< alpha(t) = alpha + alpha_slope * t
  Scalar sigma = 1.0;
  Scalar horizon = 1.0;
  LqCoupling coupling = LqCoupling::none;
  Scalar kappa = 1.0;
  Scalar m0_mean = 0.0;
  Scalar m0_var = 0.25;
};

ModelSpec build_lq_model(const LqParams& p, const std::string& name = "lq");

/// h = g = x^2/2, alpha = sigma = 1, T = 1.
LqParams lq_preset();
/// h = x^2/2, g = 0, alpha = sigma = 1, T = 8: BRS drift -x.
LqParams ou_preset();
/// h = (x - mean(m))^2 / 2, g = 0, initial mean 0.5.
LqParams mean_coupling_preset();

/// Gaussian law with independent coordinates; grid projection by exact
/// cell averages, renormalized on the box.
InitialLaw gaussian_law(Point mean, Point stdev);

// ---------------------------------------------------------------------------
// Wealth and economic configuration, x = (y, z)
// ---------------------------------------------------------------------------

/// A scalar function with its derivative.
struct Kernel1d {
  std::function<Scalar(Scalar)> value;
  std::function<Scalar(Scalar)> derivative;

  static Kernel1d gaussian(Scalar width);
  static Kernel1d quadratic();  ///< r^2 / 2
  static Kernel1d identity();
  static Kernel1d constant(Scalar c);
};

struct WealthParams {
  Scalar kappa = 0.05;  ///< wealth diffusion constant: sigma_z = sqrt(2 kappa) z
  std::function<Scalar(const Point&)> v = [](const Point&) { return 0.0; };
  Kernel1d psi = Kernel1d::gaussian(0.5);
  Kernel1d phi = Kernel1d::quadratic();
  Kernel1d xi = Kernel1d::identity();
  Scalar z_min = 1e-6;
  Scalar horizon = 1.0;
  Point m0_mean = make_point({0.0, 1.0});
  Point m0_stdev = make_point({0.5, 0.25});
};

/// d = 2, P = 1: f = (v, 0), control on z only, sigma = diag(0, sqrt(2 kappa) z),
///   h(x, m) = int xi((rho(y) + rho(y'))/2) Psi(y - y') phi(z - z') m(dx'),
///   rho(y) = int Psi(y - y') m(dx'),
/// g = 0, alpha = 1, z reflected at z_min.
ModelSpec build_wealth_model(const WealthParams& params);

/// rho(y, m) for a measure on (y, z).
Scalar wealth_rho(const WealthParams& params, const MeasureView& m, Scalar y);

// ---------------------------------------------------------------------------
// Two pedestrian populations
// ---------------------------------------------------------------------------

struct CrowdParams {
  Scalar lambda = 1.0;
  Point sigma = make_point({0.3, 0.3});
  /// Terminal costs of the two populations.
  std::array<CostFunction, 2> psi;
  /// Particle-mode density bandwidth; 0 selects Silverman's rule.
  Scalar kde_bandwidth = 0.0;
  Scalar horizon = 1.0;
  std::array<Point, 2> m0_mean{make_point({-1.0, 0.0}), make_point({1.0, 0.0})};
  std::array<Point, 2> m0_stdev{make_point({0.4, 0.4}), make_point({0.4, 0.4})};

  CrowdParams();
};

/// Quadratic attraction c/2 |x - target|^2, independent of m.
CostFunction quadratic_target(Point target, Scalar c);

/// d = 2, P = 2: f = 0, h_i = m_i(x) + lambda m_j(x), g_i = Psi_i, alpha = 1.
ModelSpec build_crowd_model(const CrowdParams& params);

/// integral of min(a, b) over the grid.
Scalar overlap(const GridDensity& a, const GridDensity& b);

}  // namespace brsmfg
