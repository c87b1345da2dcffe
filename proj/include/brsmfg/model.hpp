#pragma once

#include "brsmfg/measures.hpp"
#include "brsmfg/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace brsmfg {

/// Control penalty alpha(t) > 0 and its time derivative.
struct ControlPenalty {
  std::function<Scalar(Scalar)> alpha;
  std::function<Scalar(Scalar)> alpha_dot;

  static ControlPenalty constant(Scalar a) {
    return {[a](Scalar) { return a; }, [](Scalar) { return 0.0; }};
  }
  /// alpha(t) = a0 + a1 t
  static ControlPenalty affine(Scalar a0, Scalar a1) {
    return {[a0, a1](Scalar t) { return a0 + a1 * t; }, [a1](Scalar) { return a1; }};
  }
};

/// Scalar cost c(x, m) with its analytic spatial gradient.
struct CostFunction {
  std::function<Scalar(const Point&, const Coupling&)> value;
  std::function<Point(const Point&, const Coupling&)> gradient;

  static CostFunction zero(int d) {
    return {[](const Point&, const Coupling&) { return 0.0; }, [d](const Point&, const Coupling&) { return Point(Point::Zero(d)); }};
  }
};

struct DriftFunction {
  std::function<Point(const Point&, const Coupling&)> value;
  /// Set by zero(); lets particle loops skip the call.
  bool is_zero = false;

  static DriftFunction zero(int d) {
    return {[d](const Point&, const Coupling&) { return Point(Point::Zero(d)); }, true};
  }
};

/// Diagonal diffusion sigma(t, x), stored as the vector of diagonal entries.
struct DiffusionFunction {
  std::function<Point(Scalar, const Point&)> value;
  /// Set by constant(); lets particle loops skip the call.
  std::optional<Point> constant_value;

  static DiffusionFunction constant(Point diag) {
    return {[diag](Scalar, const Point&) { return diag; }, diag};
  }
};

/// Law of the initial states: a sampler for particles and the exact cell
/// averages for grid solvers.
struct InitialLaw {
  std::function<RowMatrix(Rng&, Eigen::Index)> sample;
  std::function<GridDensity(const Grid&)> project;
};

/// Lower bound on one state coordinate, enforced by reflection on particles.
struct StateFloor {
  int axis = 0;
  Scalar floor = 0.0;
};

struct PopulationModel {
  DriftFunction drift;
  CostFunction running_cost;   // h
  CostFunction terminal_cost;  // g
  ControlPenalty penalty;
  DiffusionFunction diffusion;
  InitialLaw initial_law;
  /// 1 on controlled coordinates, 0 elsewhere; empty means fully controlled.
  Point control_mask;
  std::vector<StateFloor> floors;
  /// c when h contains c times a pointwise density (own or other). The BRS
  /// drift then acts like a nonlinear diffusion of strength c m / alpha,
  /// which the explicit grid solver must include in its step bound.
  Scalar density_feedback = 0.0;
};

/// Immutable bundle of the game's ingredients. All stored functions must be
/// pure; a ModelSpec may be shared across threads.
class ModelSpec {
 public:
  ModelSpec(int dim, Scalar horizon, std::vector<PopulationModel> populations, std::string name = "custom");

  int dim() const { return dim_; }
  Scalar horizon() const { return horizon_; }
  std::size_t population_count() const { return pops_.size(); }
  const PopulationModel& population(std::size_t p) const { return pops_.at(p); }
  const std::string& name() const { return name_; }

  /// Projection of population p's initial law; mass checked to 1 +- 1e-10.
  GridDensity initial_density(std::size_t p, const Grid& grid) const;

  /// Samples alpha on a time grid: positive, and consistent with alpha_dot.
  void check_penalty(std::size_t p, int samples = 101) const;

 private:
  int dim_;
  Scalar horizon_;
  std::vector<PopulationModel> pops_;
  std::string name_;
};

/// Gradient of the surrogate cost (h + g/T)(x, m), restricted to the
/// controlled coordinates. Exact composition of the stored gradients.
Point surrogate_gradient(const ModelSpec& model, std::size_t pop, const Point& x, const Coupling& m);

/// Drift of the mean-field BRS dynamics: f(x, m) - (1/alpha(t)) grad(h + g/T)(x, m).
Point brs_drift(const ModelSpec& model, std::size_t pop, Scalar t, const Point& x, const Coupling& m);

// ---------------------------------------------------------------------------
// Empirical audit of the Lipschitz assumptions
// ---------------------------------------------------------------------------

struct AssumptionOptions {
  Scalar cap = 1e3;      ///< quotients above this are flagged
  int atoms = 6;         ///< atoms per sampled empirical measure (<= 10)
  Scalar spread = 1.0;   ///< Gaussian jitter added to sampled states
};

struct LipschitzQuotient {
  std::size_t pop = 0;
  std::string name;  ///< e.g. "grad_h.x", "f.W1", "sigma.t"
  Scalar value = 0.0;
  int pairs_used = 0;
  bool flagged = false;
};

struct AssumptionReport {
  std::vector<LipschitzQuotient> quotients;

  bool any_flagged() const;
  /// Throws if absent.
  const LipschitzQuotient& get(const std::string& name, std::size_t pop = 0) const;
};

/// Largest sampled Lipschitz quotients of f, grad h, grad g (in x and in W1
/// over perturbed empirical measures) and of sigma (in t and x).
AssumptionReport validate_assumptions(const ModelSpec& model, int sample_count, std::uint64_t seed,
                                      const AssumptionOptions& options = {});

}  // namespace brsmfg
