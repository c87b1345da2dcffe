#pragma once

#include "brsmfg/brs.hpp"
#include "brsmfg/ensemble.hpp"
#include "brsmfg/fokker_planck.hpp"
#include "brsmfg/model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace brsmfg {

enum class SnapshotMode { full, moments, none };

struct SimConfig {
  Scalar dt = 0.01;
  Scalar t0 = 0.0;
  Scalar t_final = 1.0;
  Eigen::Index n_particles = 100;
  std::uint64_t seed = 0;
  int record_every = 10;
  CouplingMode coupling = CouplingMode::leave_one_out;
  int workers = 1;
  SnapshotMode snapshots = SnapshotMode::full;

  /// Number of steps; dt is adjusted (with a warning) when the interval is
  /// not an integer multiple of it.
  std::int64_t resolve_steps(Scalar& dt_out, std::vector<std::string>* warnings = nullptr) const;
};

/// Control of player i of population pop at time t given the whole ensemble.
/// `m` holds the measures that player sees under the run's coupling mode.
using ControlFn =
    std::function<Point(std::size_t pop, Eigen::Index i, Scalar t, const EnsembleState& state, const Coupling& m)>;

struct EnsembleSnapshot {
  Scalar t = 0.0;
  std::vector<RowMatrix> positions;  ///< empty unless SnapshotMode::full
  std::vector<Moments> moments;      ///< per population
};

struct MetricRow {
  Scalar t = 0.0;
  std::string name;
  Scalar value = 0.0;
};

struct TrajectoryRecord {
  std::vector<Scalar> times;
  std::vector<EnsembleSnapshot> snapshots;
  std::vector<MetricRow> metrics;
  std::vector<std::string> warnings;
  EnsembleState final_state;
};

/// n particles per population drawn from the initial laws, in population order.
EnsembleState initial_ensemble(const ModelSpec& model, Eigen::Index n, Rng& rng, Scalar t0 = 0.0);

/// The d standard normals of every particle, drawn in population then
/// particle order (ziggurat sampler on the run's engine).
std::vector<RowMatrix> draw_increments(const EnsembleState& state, Rng& rng);
void draw_increments_into(const EnsembleState& state, Rng& rng, std::vector<RowMatrix>& out);

/// One Euler-Maruyama step. Normals are drawn sequentially before the
/// (possibly parallel) update, so the result does not depend on `workers`.
EnsembleState em_step(const ModelSpec& model, const EnsembleState& state, const ControlFn& control, Scalar dt, Rng& rng,
                      CouplingMode mode = CouplingMode::leave_one_out, int workers = 1);

/// Same step with caller-supplied normals.
EnsembleState em_step(const ModelSpec& model, const EnsembleState& state, const ControlFn& control, Scalar dt,
                      const std::vector<RowMatrix>& normals, CouplingMode mode, int workers);
/// Same step writing into `next`, reusing its storage.
void em_step_into(const ModelSpec& model, const EnsembleState& state, const ControlFn& control, Scalar dt,
                  const std::vector<RowMatrix>& normals, CouplingMode mode, int workers, EnsembleState& next);

/// brs_control_finite against the coupling measures the run provides.
ControlFn brs_control(const ModelSpec& model, const MpcConfig& mpc);
ControlFn zero_control(int dim);

/// Full run. When `reference` is given (d = 1), W1 to the reference density is
/// logged at every recorded time the reference also has.
TrajectoryRecord simulate(const ModelSpec& model, const SimConfig& cfg, const ControlFn& control,
                          const DensityPath* reference = nullptr);

TrajectoryRecord simulate_brs_nplayer(const ModelSpec& model, const SimConfig& cfg, const MpcConfig& mpc,
                                      const DensityPath* reference = nullptr);

TrajectoryRecord simulate_uncontrolled(const ModelSpec& model, const SimConfig& cfg);

struct ChaosRow {
  Eigen::Index n = 0;
  Scalar mean_w1 = 0.0;
  Scalar std_w1 = 0.0;     ///< sample standard deviation over seeds
  Scalar std_error = 0.0;  ///< std_w1 / sqrt(seeds)
  std::vector<Scalar> samples;
};

/// W1 at t_final between BRS particle runs and the reference density, for
/// every N and seed. Requires d = 1 and a reference snapshot at t_final.
std::vector<ChaosRow> propagation_of_chaos_study(const ModelSpec& model, const SimConfig& cfg_base, const MpcConfig& mpc,
                                                 const std::vector<Eigen::Index>& n_list, const DensityPath& reference,
                                                 const std::vector<std::uint64_t>& seeds);

/// Rows `t,metric_name,value`.
void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows);
/// Empirical snapshots as `t,pop,idx,x0..,weight`.
void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& record);

}  // namespace brsmfg
