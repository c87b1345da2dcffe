#pragma once

#include "brsmfg/model.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace brsmfg {

enum class Boundary { no_flux, absorbing };

struct FpkConfig {
  Scalar cfl_safety = 0.9;
  /// boundary[axis][0] is the lower side, boundary[axis][1] the upper side.
  std::array<std::array<Boundary, 2>, 2> boundary{{{Boundary::no_flux, Boundary::no_flux}, {Boundary::no_flux, Boundary::no_flux}}};
  Scalar t0 = 0.0;
  Scalar t_final = 1.0;
  /// Number of equal record intervals over [t0, t_final]; ignored when
  /// record_times is given.
  int record_every = 10;
  std::vector<Scalar> record_times;
  int workers = 1;

  void set_boundary(Boundary b) {
    for (auto& axis : boundary) axis = {b, b};
  }
  std::vector<Scalar> resolved_record_times() const;
};

struct DensitySnapshot {
  Scalar t = 0.0;
  std::vector<GridDensity> fields;  ///< per population
};

struct DensityPath {
  std::vector<DensitySnapshot> snapshots;
  std::int64_t steps = 0;
  /// Largest mass found in the outermost ring of cells over the recorded times.
  Scalar max_boundary_mass = 0.0;

  std::vector<Scalar> times() const;
  /// Snapshot recorded at t (within tol); throws if there is none.
  const DensitySnapshot& at(Scalar t, Scalar tol = 1e-9) const;
  const DensitySnapshot& final() const { return snapshots.back(); }
};

/// Face-normal velocities per population: velocities[pop][axis] holds one value
/// per face normal to that axis. Faces normal to axis 0 are numbered
/// f + (n0 + 1) * j, those normal to axis 1 are i + n0 * f.
using FaceVelocities = std::vector<std::array<Vector, 2>>;

/// Computes the transport velocity on every face for the densities at time t.
using VelocityProvider = std::function<void(Scalar t, std::span<const GridDensity> fields, FaceVelocities& out)>;

/// The mean-field BRS velocity f - (1/alpha) grad(h + g/T), evaluated at face
/// midpoints with the measures frozen at the current fields.
VelocityProvider brs_velocity(const ModelSpec& model, const FpkConfig& cfg);

/// Explicit conservative finite-volume operator for
///   d_t m = -div(v m) + 1/2 sum_k d_kk(sigma_k^2 m)
/// with centered diffusive fluxes of sigma^2 m and hybrid advective fluxes:
/// centered where the cell Peclet number allows it, upwinded elsewhere.
class FpkOperator {
 public:
  FpkOperator(const ModelSpec& model, const Grid& grid, FpkConfig cfg, VelocityProvider velocity);

  /// Evaluates face velocities and diffusion at time t and returns the
  /// largest positivity-preserving step (before the safety factor).
  Scalar prepare(Scalar t, std::span<const GridDensity> fields);

  /// One forward-Euler step with the prepared coefficients. Throws on a CFL
  /// violation, naming the offending cell.
  std::vector<GridDensity> apply(std::span<const GridDensity> fields, Scalar dt) const;

  const Grid& grid() const { return grid_; }
  const FaceVelocities& velocities() const { return vel_; }

 private:
  const ModelSpec& model_;
  Grid grid_;
  FpkConfig cfg_;
  VelocityProvider velocity_;
  FaceVelocities vel_;
  std::vector<std::array<Vector, 2>> sigma2_;  // per pop, per axis, per cell
  Vector rate_;                                // scratch: outflow rate per cell
  Scalar max_rate_ = 0.0;
};

/// One explicit BRS step of size dt on the given fields.
std::vector<GridDensity> fpk_step(const ModelSpec& model, std::span<const GridDensity> fields, Scalar t, Scalar dt,
                                  const FpkConfig& cfg = {});

/// Time loop with CFL-adaptive steps landing exactly on the record times.
DensityPath solve_fpk(const ModelSpec& model, std::span<const GridDensity> m0, const FpkConfig& cfg);
DensityPath solve_fpk(const ModelSpec& model, std::span<const GridDensity> m0, const FpkConfig& cfg, VelocityProvider velocity);

/// Mass in the outermost ring of cells.
Scalar boundary_mass(const GridDensity& m);

/// Rows `t,pop,i[,j],mid0[,mid1],value`, preceded by `# key=value` lines.
void write_density_path_csv(std::ostream& os, const DensityPath& path, const std::map<std::string, std::string>& metadata = {});

}  // namespace brsmfg
