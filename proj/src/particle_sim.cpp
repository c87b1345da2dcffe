#include "brsmfg/particle_sim.hpp"

#include "brsmfg/parallel.hpp"

#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <ostream>

namespace brsmfg {

std::int64_t SimConfig::resolve_steps(Scalar& dt_out, std::vector<std::string>* warnings) const {
  if (!(dt > 0.0)) fail(ErrorKind::config, "sim: dt must be positive");
  if (!(t_final > t0)) fail(ErrorKind::config, "sim: t_final must exceed t0");
  if (n_particles < 2) fail(ErrorKind::config, "sim: n_particles must be at least 2");
  if (record_every < 1) fail(ErrorKind::config, "sim: record_every must be at least 1");
  const Scalar span = t_final - t0;
  const auto steps = std::max<std::int64_t>(1, std::llround(span / dt));
  dt_out = span / static_cast<Scalar>(steps);
  if (std::abs(dt_out - dt) > 1e-12 * dt && warnings) {
    warnings->push_back("dt adjusted from " + format_number(dt) + " to " + format_number(dt_out) +
                        " so that the interval holds an integer number of steps");
  }
  return steps;
}

EnsembleState initial_ensemble(const ModelSpec& model, Eigen::Index n, Rng& rng, Scalar t0) {
  EnsembleState s;
  s.t0 = t0;
  s.t = t0;
  for (std::size_t p = 0; p < model.population_count(); ++p) {
    RowMatrix x = model.population(p).initial_law.sample(rng, n);
    if (x.rows() != n || x.cols() != model.dim()) fail(ErrorKind::config, "initial law sampler returned the wrong shape");
    if (!x.allFinite()) fail(ErrorKind::numerical, "initial law sampler returned non-finite points");
    s.positions.push_back(std::move(x));
  }
  return s;
}

void draw_increments_into(const EnsembleState& state, Rng& rng, std::vector<RowMatrix>& out) {
  boost::random::normal_distribution<Scalar> normal(0.0, 1.0);
  out.resize(state.population_count());
  for (std::size_t p = 0; p < state.population_count(); ++p) {
    RowMatrix& z = out[p];
    z.resize(state.size(p), state.dim());
    Scalar* data = z.data();
    for (Eigen::Index k = 0; k < z.size(); ++k) data[k] = normal(rng);
  }
}

std::vector<RowMatrix> draw_increments(const EnsembleState& state, Rng& rng) {
  std::vector<RowMatrix> out;
  draw_increments_into(state, rng, out);
  return out;
}

namespace {

[[noreturn]] void bad_value(std::size_t pop, Eigen::Index i, const char* ingredient) {
  fail(ErrorKind::numerical, std::string("non-finite ") + ingredient + " for particle " + std::to_string(i) + " of population " +
                                 std::to_string(pop));
}

void apply_floors(const std::vector<StateFloor>& floors, Point& x) {
  for (const StateFloor& fl : floors) {
    Scalar& v = x[fl.axis];
    if (v < fl.floor) v = std::max(2.0 * fl.floor - v, fl.floor);
  }
}

}  // namespace

namespace {

/// The update shared by every control: control(p, i, x, coupling) -> u.
template <class Control>
void step_impl(const ModelSpec& model, const EnsembleState& state, Control&& control, Scalar dt,
               const std::vector<RowMatrix>& normals, CouplingMode mode, int workers, EnsembleState& next) {
  if (!(dt > 0.0)) fail(ErrorKind::domain, "em_step: dt must be positive");
  if (normals.size() != state.population_count()) fail(ErrorKind::domain, "em_step: one normal block per population required");
  next.positions.resize(state.population_count());
  const Scalar t = state.t;
  const Scalar sqdt = std::sqrt(dt);
  const bool loo = mode == CouplingMode::leave_one_out;
  for (std::size_t p = 0; p < state.population_count(); ++p) {
    const PopulationModel& pm = model.population(p);
    const RowMatrix& z = normals[p];
    const RowMatrix& xs = state.positions[p];
    RowMatrix& out = next.positions[p];
    out.resize(state.size(p), state.dim());
    if (loo && state.size(p) < 2) fail(ErrorKind::domain, "empty leave-one-out");
    const Coupling full = state.full_coupling(p);
    parallel_for(state.size(p), workers, [&](Eigen::Index begin, Eigen::Index end) {
      Coupling c = full;
      const int d = state.dim();
      Point x(d), xn(d);
      const Point zero = Point::Zero(d);
      for (Eigen::Index i = begin; i < end; ++i) {
        for (int k = 0; k < d; ++k) x[k] = xs(i, k);
        if (loo) c.replace(p, MeasureView::particles(xs, i));
        const Point f = pm.drift.is_zero ? zero : pm.drift.value(x, c);
        const Point u = control(p, i, x, c);
        const Point s = pm.diffusion.constant_value ? *pm.diffusion.constant_value : pm.diffusion.value(t, x);
        bool finite = true;
        for (int k = 0; k < d; ++k) {
          xn[k] = x[k] + (f[k] + u[k]) * dt + sqdt * s[k] * z(i, k);
          finite = finite && std::isfinite(xn[k]);
        }
        if (!finite) {
          if (!f.allFinite()) bad_value(p, i, "drift f");
          if (!u.allFinite()) bad_value(p, i, "control u");
          if (!s.allFinite()) bad_value(p, i, "diffusion sigma");
          bad_value(p, i, "state update");
        }
        apply_floors(pm.floors, xn);
        for (int k = 0; k < d; ++k) out(i, k) = xn[k];
      }
    });
  }
  next.t0 = state.t0;
  next.seed = state.seed;
  next.step_index = state.step_index + 1;
  next.t = state.t0 + static_cast<Scalar>(next.step_index) * dt;
}

}  // namespace

void em_step_into(const ModelSpec& model, const EnsembleState& state, const ControlFn& control, Scalar dt,
                  const std::vector<RowMatrix>& normals, CouplingMode mode, int workers, EnsembleState& next) {
  const Scalar t = state.t;
  step_impl(
      model, state, [&](std::size_t p, Eigen::Index i, const Point&, const Coupling& c) { return control(p, i, t, state, c); }, dt,
      normals, mode, workers, next);
}

EnsembleState em_step(const ModelSpec& model, const EnsembleState& state, const ControlFn& control, Scalar dt,
                      const std::vector<RowMatrix>& normals, CouplingMode mode, int workers) {
  EnsembleState next;
  em_step_into(model, state, control, dt, normals, mode, workers, next);
  return next;
}

EnsembleState em_step(const ModelSpec& model, const EnsembleState& state, const ControlFn& control, Scalar dt, Rng& rng,
                      CouplingMode mode, int workers) {
  const std::vector<RowMatrix> z = draw_increments(state, rng);
  return em_step(model, state, control, dt, z, mode, workers);
}

ControlFn brs_control(const ModelSpec& model, const MpcConfig& mpc) {
  mpc.validate(model.horizon());
  return [&model, mpc](std::size_t pop, Eigen::Index i, Scalar t, const EnsembleState& s, const Coupling& m) {
    return brs_control_finite(model, pop, s.position(pop, i), m, t, mpc);
  };
}

ControlFn zero_control(int dim) {
  return [dim](std::size_t, Eigen::Index, Scalar, const EnsembleState&, const Coupling&) { return Point(Point::Zero(dim)); };
}

namespace {

template <class Stepper>
TrajectoryRecord run(const ModelSpec& model, const SimConfig& cfg, Stepper&& step, const DensityPath* reference) {
  TrajectoryRecord rec;
  Scalar dt = cfg.dt;
  const std::int64_t steps = cfg.resolve_steps(dt, &rec.warnings);
  if (reference && model.dim() != 1) fail(ErrorKind::domain, "W1 metrics need d = 1");

  Rng rng(cfg.seed);
  EnsembleState state = initial_ensemble(model, cfg.n_particles, rng, cfg.t0);
  state.seed = cfg.seed;

  auto record = [&] {
    const Scalar t = state.t;
    rec.times.push_back(t);
    EnsembleSnapshot snap;
    snap.t = t;
    for (std::size_t p = 0; p < state.population_count(); ++p) {
      const MeasureView view = MeasureView::particles(state.positions[p]);
      snap.moments.push_back(moments(view, 2));
      const std::string suffix = ".pop" + std::to_string(p);
      for (int k = 0; k < state.dim(); ++k) {
        rec.metrics.push_back({t, "mean" + std::to_string(k) + suffix, snap.moments.back().mean[k]});
        rec.metrics.push_back({t, "var" + std::to_string(k) + suffix, snap.moments.back().variance[k]});
      }
      if (reference) {
        for (const auto& rs : reference->snapshots) {
          if (std::abs(rs.t - t) <= 1e-9) {
            rec.metrics.push_back({t, "w1" + suffix, wasserstein_1d(view, rs.fields[p], 1)});
            break;
          }
        }
      }
    }
    if (cfg.snapshots == SnapshotMode::full) snap.positions = state.positions;
    if (cfg.snapshots != SnapshotMode::none) rec.snapshots.push_back(std::move(snap));
  };

  record();
  EnsembleState next;
  std::vector<RowMatrix> normals;
  for (std::int64_t k = 1; k <= steps; ++k) {
    draw_increments_into(state, rng, normals);
    step(state, dt, normals, next);
    std::swap(state, next);
    if (k % cfg.record_every == 0 || k == steps) record();
  }
  rec.final_state = std::move(state);
  return rec;
}

}  // namespace

TrajectoryRecord simulate(const ModelSpec& model, const SimConfig& cfg, const ControlFn& control, const DensityPath* reference) {
  return run(
      model, cfg,
      [&](const EnsembleState& s, Scalar dt, const std::vector<RowMatrix>& z, EnsembleState& next) {
        em_step_into(model, s, control, dt, z, cfg.coupling, cfg.workers, next);
      },
      reference);
}

TrajectoryRecord simulate_brs_nplayer(const ModelSpec& model, const SimConfig& cfg, const MpcConfig& mpc,
                                      const DensityPath* reference) {
  mpc.validate(model.horizon());
  // Same arithmetic as brs_control_finite with the penalty denominator
  // evaluated once per step and population.
  std::vector<Scalar> denom(model.population_count());
  return run(
      model, cfg,
      [&](const EnsembleState& s, Scalar dt, const std::vector<RowMatrix>& z, EnsembleState& next) {
        for (std::size_t p = 0; p < denom.size(); ++p) {
          const ControlPenalty& pen = model.population(p).penalty;
          denom[p] = pen.alpha(s.t);
          if (mpc.use_alpha_dot) denom[p] += mpc.dt * pen.alpha_dot(s.t);
          if (!(denom[p] > 0.0)) fail(ErrorKind::numerical, "penalty denominator nonpositive");
        }
        step_impl(
            model, s,
            [&](std::size_t p, Eigen::Index, const Point& x, const Coupling& c) {
              return Point(-surrogate_gradient(model, p, x, c) / denom[p]);
            },
            dt, z, cfg.coupling, cfg.workers, next);
      },
      reference);
}

TrajectoryRecord simulate_uncontrolled(const ModelSpec& model, const SimConfig& cfg) {
  return simulate(model, cfg, zero_control(model.dim()));
}

std::vector<ChaosRow> propagation_of_chaos_study(const ModelSpec& model, const SimConfig& cfg_base, const MpcConfig& mpc,
                                                 const std::vector<Eigen::Index>& n_list, const DensityPath& reference,
                                                 const std::vector<std::uint64_t>& seeds) {
  if (model.dim() != 1) fail(ErrorKind::domain, "propagation_of_chaos_study needs d = 1");
  if (seeds.empty() || n_list.empty()) fail(ErrorKind::config, "propagation_of_chaos_study: empty N list or seed list");
  const DensitySnapshot& ref = reference.at(cfg_base.t_final);
  if (ref.fields.size() != model.population_count()) fail(ErrorKind::domain, "reference has the wrong population count");

  std::vector<ChaosRow> rows;
  for (Eigen::Index n : n_list) {
    ChaosRow row;
    row.n = n;
    for (std::uint64_t seed : seeds) {
      SimConfig cfg = cfg_base;
      cfg.n_particles = n;
      cfg.seed = seed;
      cfg.snapshots = SnapshotMode::none;
      const TrajectoryRecord rec = simulate_brs_nplayer(model, cfg, mpc);
      Scalar w = 0.0;
      for (std::size_t p = 0; p < model.population_count(); ++p) {
        w += wasserstein_1d(MeasureView::particles(rec.final_state.positions[p]), ref.fields[p], 1);
      }
      row.samples.push_back(w / static_cast<Scalar>(model.population_count()));
    }
    const auto m = static_cast<Scalar>(row.samples.size());
    for (Scalar s : row.samples) row.mean_w1 += s / m;
    Scalar ss = 0.0;
    for (Scalar s : row.samples) ss += (s - row.mean_w1) * (s - row.mean_w1);
    row.std_w1 = row.samples.size() > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
    row.std_error = row.std_w1 / std::sqrt(m);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  os << "t,metric_name,value\n";
  for (const MetricRow& r : rows) os << format_number(r.t) << ',' << r.name << ',' << format_number(r.value) << '\n';
}

void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& record) {
  if (record.snapshots.empty() || record.snapshots.front().positions.empty()) return;
  const auto d = record.snapshots.front().positions.front().cols();
  os << "t,pop,idx";
  for (Eigen::Index k = 0; k < d; ++k) os << ",x" << k;
  os << ",weight\n";
  for (const EnsembleSnapshot& s : record.snapshots) {
    const std::string t = format_number(s.t);
    for (std::size_t p = 0; p < s.positions.size(); ++p) {
      const RowMatrix& x = s.positions[p];
      const std::string w = format_number(1.0 / static_cast<Scalar>(x.rows()));
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        os << t << ',' << p << ',' << i;
        for (Eigen::Index k = 0; k < d; ++k) os << ',' << format_number(x(i, k));
        os << ',' << w << '\n';
      }
    }
  }
}

}  // namespace brsmfg
