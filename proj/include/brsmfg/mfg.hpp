#pragma once

#include "brsmfg/fokker_planck.hpp"
#include "brsmfg/model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace brsmfg {

/// w(t, x) on a 1-D grid at n_t + 1 uniform time slices.
struct ValueField {
  Grid grid;
  std::vector<Scalar> times;
  Eigen::MatrixXd values;     ///< row k: slice at times[k]
  Eigen::MatrixXd gradients;  ///< central-difference gradient of each slice

  Eigen::Index slices() const { return values.rows(); }
  /// Linear interpolation in time of the gradient at cell c.
  Scalar gradient_at(Scalar t, Eigen::Index c) const;
  /// Linear interpolation in time of w at cell c.
  Scalar value_at(Scalar t, Eigen::Index c) const;
};

/// Central gradient with quadratic extrapolation into one ghost cell on each
/// side, so quadratics are differentiated exactly up to the boundary.
Vector central_gradient(const Grid& grid, const Vector& w);
/// Second difference with the same ghost cells.
Vector central_laplacian(const Grid& grid, const Vector& w);

/// Data of a backward HJB problem on [t0, t1] with slices every (t1 - t0)/n_t.
struct HjbProblem {
  Grid grid;
  Scalar t0 = 0.0;
  Scalar t1 = 1.0;
  int n_t = 1;
  std::vector<Vector> running_cost;  ///< h per slice, per cell
  std::vector<Vector> drift;         ///< f per slice, per cell
  Vector terminal;                   ///< w(t1)
  std::function<Scalar(Scalar)> alpha;
  std::function<Vector(Scalar)> sigma2;  ///< per cell
  Scalar cfl_safety = 0.9;
};

/// Explicit backward march of
///   d_t w = |grad w|^2 / (2 alpha) - h - f grad w - sigma^2/2 lap w,
/// with CFL-bounded substeps. Throws "HJB unstable, refine grid/time" when
/// max|w| grows beyond 1e6 times its natural scale.
ValueField solve_hjb(const HjbProblem& problem);

/// The MFG value function on [0, T] given the density path, which must carry
/// a snapshot at each slice time k T / n_t. 1-D, single population.
ValueField hjb_backward(const ModelSpec& model, const DensityPath& density_path, const Grid& grid, int n_t);

struct PicardConfig {
  int max_iters = 50;
  Scalar theta = 0.5;
  Scalar tol = 1e-4;
  FpkConfig fpk;  ///< boundaries, CFL safety and workers of the forward solve

  void validate() const;
};

struct MfgSolution {
  ValueField value;
  DensityPath density;  ///< last forward solve (undamped)
  /// residuals[k] is the sup_t L1 distance between the forward solves of
  /// iterations k+1 and k (the first against the initial guess m(t) = m0).
  std::vector<Scalar> residuals;
  bool converged = false;
};

/// Face velocity f - (1/alpha) grad w, the gradient being the mean of the
/// two adjacent cell-centred gradients.
VelocityProvider mfg_velocity(const ModelSpec& model, const ValueField& w, const FpkConfig& cfg);

/// Damped Picard iteration between hjb_backward and the forward FPK. Does not
/// throw on non-convergence; `converged` is false instead.
MfgSolution solve_mfg_picard(const ModelSpec& model, const GridDensity& m0, const Grid& grid, int n_t, const PicardConfig& cfg);

struct ReductionRow {
  Scalar dt = 0.0;
  Scalar error = 0.0;  ///< sup over cells of |w_window(t) - (h + g/T)(., m_t)|
};

struct ReductionResult {
  std::vector<ReductionRow> rows;
  Scalar order = 0.0;  ///< least-squares slope of log(error) on log(dt); NaN if undefined
};

/// Solves the one-window HJB on [t, t + dt] (running cost h/dt, terminal g/T,
/// measure frozen at m_t = m0 projected on the grid) for each dt.
ReductionResult mpc_reduction_check(const ModelSpec& model, const Grid& grid, const std::vector<Scalar>& dt_list,
                                    Scalar t = 0.0);

struct ComparisonResult {
  std::vector<Scalar> times;
  std::vector<Scalar> w1;
  Scalar max_w1 = 0.0;
  MfgSolution mfg;
  DensityPath brs;
};

/// W1 between the BRS mean-field density and the MFG density at each slice.
ComparisonResult compare_brs_mfg(const ModelSpec& model, const GridDensity& m0, const Grid& grid, int n_t,
                                 const PicardConfig& cfg);

/// Least-squares slope of log(y) against log(x).
Scalar fit_loglog_slope(const std::vector<Scalar>& x, const std::vector<Scalar>& y);

/// Rows `t,i,mid0,w`.
void write_value_field_csv(std::ostream& os, const ValueField& w);
/// Rows `iter,residual`.
void write_iteration_log_csv(std::ostream& os, const std::vector<Scalar>& residuals);

}  // namespace brsmfg
