#pragma once

#include "brsmfg/ensemble.hpp"
#include "brsmfg/model.hpp"

namespace brsmfg {

/// One-window model predictive control: agents hold a constant control over
/// [t, t + dt] and re-optimize afterwards.
struct MpcConfig {
  Scalar dt = 0.01;
  /// Keep the dt * alpha'(t) correction in the denominator.
  bool use_alpha_dot = true;

  void validate(Scalar horizon) const;
};

/// Minimizer of the one-window cost with the penalty rescaled by dt:
///   u = -(1 / (alpha(t) + dt * alpha'(t))) grad(h + g/T)(x, m).
/// Throws when the denominator is not positive.
Point brs_control_finite(const ModelSpec& model, std::size_t pop, const Point& x, const Coupling& m, Scalar t,
                         const MpcConfig& cfg);

/// Same, for player i of an ensemble against its leave-one-out measure.
Point brs_control_finite(const ModelSpec& model, std::size_t pop, Eigen::Index i, const EnsembleState& state, Scalar t,
                         const MpcConfig& cfg);

/// Value-function route: the O(dt) approximation of the window value,
/// (h + g/T)(x, m).
Scalar mpc_value_surrogate(const ModelSpec& model, std::size_t pop, Scalar t, const Point& x, const Coupling& m);

/// The dt -> 0 control -(1/alpha(t)) grad(h + g/T)(x, m).
Point brs_control_limit(const ModelSpec& model, std::size_t pop, Scalar t, const Point& x, const Coupling& m);

}  // namespace brsmfg
