#include "brsmfg/brs.hpp"

#include <cmath>

namespace brsmfg {

void MpcConfig::validate(Scalar horizon) const {
  if (!(dt > 0.0) || dt > horizon) fail(ErrorKind::config, "mpc: window dt must satisfy 0 < dt <= T");
}

Point brs_control_finite(const ModelSpec& model, std::size_t pop, const Point& x, const Coupling& m, Scalar t,
                         const MpcConfig& cfg) {
  const ControlPenalty& pen = model.population(pop).penalty;
  Scalar denom = pen.alpha(t);
  if (cfg.use_alpha_dot) denom += cfg.dt * pen.alpha_dot(t);
  if (!(denom > 0.0)) fail(ErrorKind::numerical, "penalty denominator nonpositive");
  return -surrogate_gradient(model, pop, x, m) / denom;
}

Point brs_control_finite(const ModelSpec& model, std::size_t pop, Eigen::Index i, const EnsembleState& state, Scalar t,
                         const MpcConfig& cfg) {
  return brs_control_finite(model, pop, state.position(pop, i), state.coupling_for(pop, i, CouplingMode::leave_one_out), t, cfg);
}

Scalar mpc_value_surrogate(const ModelSpec& model, std::size_t pop, Scalar /*t*/, const Point& x, const Coupling& m) {
  const PopulationModel& pm = model.population(pop);
  return pm.running_cost.value(x, m) + pm.terminal_cost.value(x, m) / model.horizon();
}

Point brs_control_limit(const ModelSpec& model, std::size_t pop, Scalar t, const Point& x, const Coupling& m) {
  const Scalar a = model.population(pop).penalty.alpha(t);
  if (!(a > 0.0)) fail(ErrorKind::numerical, "penalty denominator nonpositive");
  return -surrogate_gradient(model, pop, x, m) / a;
}

}  // namespace brsmfg
