#include "brsmfg/mfg.hpp"

#include <cmath>
#include <limits>
#include <ostream>

namespace brsmfg {

namespace {

void require_1d(const Grid& grid) {
  if (grid.dims() != 1) fail(ErrorKind::domain, "mfg: one-dimensional grids only");
  if (grid.axis(0).cells < 8) fail(ErrorKind::config, "mfg: the grid needs at least 8 cells");
}

/// Slice index k and weight l such that t lies between times[k] and times[k+1].
std::pair<Eigen::Index, Scalar> bracket(const std::vector<Scalar>& times, Scalar t) {
  const auto n = static_cast<Eigen::Index>(times.size());
  if (n == 1 || t <= times.front()) return {0, 0.0};
  if (t >= times.back()) return {n - 2, 1.0};
  const Scalar step = (times.back() - times.front()) / static_cast<Scalar>(n - 1);
  auto k = std::min<Eigen::Index>(n - 2, static_cast<Eigen::Index>((t - times.front()) / step));
  while (k > 0 && t < times[static_cast<std::size_t>(k)]) --k;
  while (k < n - 2 && t > times[static_cast<std::size_t>(k + 1)]) ++k;
  const Scalar l = (t - times[static_cast<std::size_t>(k)]) / (times[static_cast<std::size_t>(k + 1)] - times[static_cast<std::size_t>(k)]);
  return {k, l};
}

}  // namespace

Scalar ValueField::gradient_at(Scalar t, Eigen::Index c) const {
  if (gradients.rows() == 1) return gradients(0, c);
  const auto [k, l] = bracket(times, t);
  return (1.0 - l) * gradients(k, c) + l * gradients(k + 1, c);
}

Scalar ValueField::value_at(Scalar t, Eigen::Index c) const {
  if (values.rows() == 1) return values(0, c);
  const auto [k, l] = bracket(times, t);
  return (1.0 - l) * values(k, c) + l * values(k + 1, c);
}

Vector central_gradient(const Grid& grid, const Vector& w) {
  const Eigen::Index n = w.size();
  const Scalar dx = grid.axis(0).width();
  Vector g(n);
  const Scalar lo = 3.0 * w[0] - 3.0 * w[1] + w[2];
  const Scalar hi = 3.0 * w[n - 1] - 3.0 * w[n - 2] + w[n - 3];
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar l = i == 0 ? lo : w[i - 1];
    const Scalar r = i == n - 1 ? hi : w[i + 1];
    g[i] = (r - l) / (2.0 * dx);
  }
  return g;
}

Vector central_laplacian(const Grid& grid, const Vector& w) {
  const Eigen::Index n = w.size();
  const Scalar dx = grid.axis(0).width();
  Vector lap(n);
  const Scalar lo = 3.0 * w[0] - 3.0 * w[1] + w[2];
  const Scalar hi = 3.0 * w[n - 1] - 3.0 * w[n - 2] + w[n - 3];
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar l = i == 0 ? lo : w[i - 1];
    const Scalar r = i == n - 1 ? hi : w[i + 1];
    lap[i] = (r - 2.0 * w[i] + l) / (dx * dx);
  }
  return lap;
}

ValueField solve_hjb(const HjbProblem& pb) {
  require_1d(pb.grid);
  if (pb.n_t < 1) fail(ErrorKind::config, "hjb: n_t must be at least 1");
  if (!(pb.t1 > pb.t0)) fail(ErrorKind::config, "hjb: empty time interval");
  const auto slices = static_cast<std::size_t>(pb.n_t) + 1;
  if (pb.running_cost.size() != slices || pb.drift.size() != slices) fail(ErrorKind::domain, "hjb: one h and f slice per time slice required");
  const Eigen::Index n = pb.grid.size();
  const Scalar dx = pb.grid.axis(0).width();

  ValueField vf;
  vf.grid = pb.grid;
  for (int k = 0; k <= pb.n_t; ++k) vf.times.push_back(k == pb.n_t ? pb.t1 : pb.t0 + (pb.t1 - pb.t0) * k / pb.n_t);
  vf.values.resize(static_cast<Eigen::Index>(slices), n);
  vf.gradients.resize(static_cast<Eigen::Index>(slices), n);

  Scalar scale = 1.0 + pb.terminal.cwiseAbs().maxCoeff();
  for (const Vector& h : pb.running_cost) scale += (pb.t1 - pb.t0) * h.cwiseAbs().maxCoeff() / pb.n_t;
  const Scalar limit = 1e6 * scale;

  Vector w = pb.terminal;
  vf.values.row(pb.n_t) = w.transpose();
  vf.gradients.row(pb.n_t) = central_gradient(pb.grid, w).transpose();
  for (int k = pb.n_t - 1; k >= 0; --k) {
    const Scalar lo = vf.times[static_cast<std::size_t>(k)];
    const Scalar hi = vf.times[static_cast<std::size_t>(k) + 1];
    const Vector& h_lo = pb.running_cost[static_cast<std::size_t>(k)];
    const Vector& h_hi = pb.running_cost[static_cast<std::size_t>(k) + 1];
    const Vector& f_lo = pb.drift[static_cast<std::size_t>(k)];
    const Vector& f_hi = pb.drift[static_cast<std::size_t>(k) + 1];
    Scalar t = hi;
    while (t > lo) {
      const Scalar l = (t - lo) / (hi - lo);
      const Vector h = (1.0 - l) * h_lo + l * h_hi;
      const Vector f = (1.0 - l) * f_lo + l * f_hi;
      const Scalar alpha = pb.alpha(t);
      if (!(alpha > 0.0)) fail(ErrorKind::numerical, "hjb: penalty alpha nonpositive at t=" + format_number(t));
      const Vector s2 = pb.sigma2(t);
      const Vector g = central_gradient(pb.grid, w);
      const Vector lap = central_laplacian(pb.grid, w);

      const Scalar adv = f.cwiseAbs().maxCoeff() + g.cwiseAbs().maxCoeff() / alpha;
      const Scalar diff = s2.maxCoeff();
      Scalar dt = t - lo;
      if (adv > 0.0) dt = std::min(dt, pb.cfl_safety * dx / adv);
      if (diff > 0.0) dt = std::min(dt, pb.cfl_safety * dx * dx / diff);
      const bool lands = t - dt <= lo + 1e-12 * std::max(1.0, std::abs(lo));
      if (lands) dt = t - lo;

      const Vector rate = g.cwiseAbs2() / (2.0 * alpha) - h - f.cwiseProduct(g) - 0.5 * s2.cwiseProduct(lap);
      w -= dt * rate;
      if (!w.allFinite() || w.cwiseAbs().maxCoeff() > limit) fail(ErrorKind::numerical, "HJB unstable, refine grid/time");
      t = lands ? lo : t - dt;
    }
    vf.values.row(k) = w.transpose();
    vf.gradients.row(k) = central_gradient(pb.grid, w).transpose();
  }
  return vf;
}

namespace {

void require_mfg_model(const ModelSpec& model) {
  if (model.dim() != 1 || model.population_count() != 1) fail(ErrorKind::domain, "mfg: one dimension and one population only");
}

std::vector<Scalar> slice_times(Scalar t0, Scalar t1, int n_t) {
  std::vector<Scalar> ts;
  for (int k = 0; k <= n_t; ++k) ts.push_back(k == n_t ? t1 : t0 + (t1 - t0) * k / n_t);
  return ts;
}

std::function<Vector(Scalar)> sigma2_on(const ModelSpec& model, const Grid& grid) {
  return [&model, grid](Scalar t) {
    Vector s2(grid.size());
    for (Eigen::Index c = 0; c < grid.size(); ++c) {
      const Scalar s = model.population(0).diffusion.value(t, grid.midpoint(c))[0];
      s2[c] = s * s;
    }
    return s2;
  };
}

}  // namespace

ValueField hjb_backward(const ModelSpec& model, const DensityPath& density_path, const Grid& grid, int n_t) {
  require_mfg_model(model);
  require_1d(grid);
  if (n_t < 1) fail(ErrorKind::config, "hjb: n_t must be at least 1");
  const PopulationModel& pm = model.population(0);
  HjbProblem pb;
  pb.grid = grid;
  pb.t0 = 0.0;
  pb.t1 = model.horizon();
  pb.n_t = n_t;
  const std::vector<Scalar> ts = slice_times(pb.t0, pb.t1, n_t);
  for (Scalar t : ts) {
    const GridDensity& m = density_path.at(t).fields.front();
    if (!(m.grid() == grid)) fail(ErrorKind::domain, "hjb: density path grid differs from the HJB grid");
    const Coupling c{MeasureView(m)};
    Vector h(grid.size()), f(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      const Point x = grid.midpoint(i);
      h[i] = pm.running_cost.value(x, c);
      f[i] = pm.drift.value(x, c)[0];
    }
    if (!h.allFinite()) fail(ErrorKind::numerical, "hjb: non-finite running cost h");
    if (!f.allFinite()) fail(ErrorKind::numerical, "hjb: non-finite drift f");
    pb.running_cost.push_back(std::move(h));
    pb.drift.push_back(std::move(f));
  }
  const Coupling c_final{MeasureView(density_path.at(pb.t1).fields.front())};
  pb.terminal.resize(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) pb.terminal[i] = pm.terminal_cost.value(grid.midpoint(i), c_final);
  if (!pb.terminal.allFinite()) fail(ErrorKind::numerical, "hjb: non-finite terminal cost g");
  pb.alpha = pm.penalty.alpha;
  pb.sigma2 = sigma2_on(model, grid);
  return solve_hjb(pb);
}

void PicardConfig::validate() const {
  if (max_iters < 1) fail(ErrorKind::config, "picard: max_iters must be at least 1");
  if (!(theta > 0.0 && theta <= 1.0)) fail(ErrorKind::config, "picard: theta must lie in (0, 1]");
  if (!(tol > 0.0)) fail(ErrorKind::config, "picard: tol must be positive");
}

VelocityProvider mfg_velocity(const ModelSpec& model, const ValueField& w, const FpkConfig& cfg) {
  const auto boundary = cfg.boundary[0];
  return [&model, &w, boundary](Scalar t, std::span<const GridDensity> fields, FaceVelocities& out) {
    const Grid& g = fields.front().grid();
    const PopulationModel& pm = model.population(0);
    const Coupling c{MeasureView(fields.front())};
    const int n = g.axis(0).cells;
    const Scalar alpha = pm.penalty.alpha(t);
    if (!(alpha > 0.0)) fail(ErrorKind::numerical, "mfg: penalty alpha nonpositive");
    out.resize(1);
    Vector& v = out[0][0];
    v.setZero(n + 1);
    for (int f = 0; f <= n; ++f) {
      Scalar grad;
      if (f == 0) {
        if (boundary[0] == Boundary::no_flux) continue;
        grad = w.gradient_at(t, 0);
      } else if (f == n) {
        if (boundary[1] == Boundary::no_flux) continue;
        grad = w.gradient_at(t, n - 1);
      } else {
        grad = 0.5 * (w.gradient_at(t, f - 1) + w.gradient_at(t, f));
      }
      v[f] = pm.drift.value(make_point({g.axis(0).face(f)}), c)[0] - grad / alpha;
    }
  };
}

MfgSolution solve_mfg_picard(const ModelSpec& model, const GridDensity& m0, const Grid& grid, int n_t, const PicardConfig& cfg) {
  cfg.validate();
  require_mfg_model(model);
  require_1d(grid);
  if (!(m0.grid() == grid)) fail(ErrorKind::domain, "mfg: m0 is not on the solver grid");
  if (std::abs(m0.mass() - 1.0) > 1e-10) fail(ErrorKind::domain, "mfg: m0 must have unit mass");

  FpkConfig fcfg = cfg.fpk;
  fcfg.t0 = 0.0;
  fcfg.t_final = model.horizon();
  fcfg.record_times = slice_times(0.0, model.horizon(), n_t);

  DensityPath current;
  for (Scalar t : fcfg.record_times) current.snapshots.push_back({t, {m0}});

  MfgSolution sol;
  DensityPath previous;
  const std::array<GridDensity, 1> init{m0};
  for (int it = 1; it <= cfg.max_iters; ++it) {
    ValueField w = hjb_backward(model, current, grid, n_t);
    DensityPath next = solve_fpk(model, init, fcfg, mfg_velocity(model, w, fcfg));
    const DensityPath& base = it == 1 ? current : previous;
    Scalar residual = 0.0;
    for (std::size_t s = 0; s < next.snapshots.size(); ++s) {
      residual = std::max(residual, l1_distance(next.snapshots[s].fields[0], base.snapshots[s].fields[0]));
    }
    sol.residuals.push_back(residual);
    sol.value = std::move(w);
    sol.density = next;
    if (residual <= cfg.tol) {
      sol.converged = true;
      break;
    }
    for (std::size_t s = 0; s < next.snapshots.size(); ++s) {
      current.snapshots[s].fields[0] = blend(next.snapshots[s].fields[0], current.snapshots[s].fields[0], cfg.theta);
    }
    previous = std::move(next);
  }
  return sol;
}

Scalar fit_loglog_slope(const std::vector<Scalar>& x, const std::vector<Scalar>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::numeric_limits<Scalar>::quiet_NaN();
  Scalar sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<Scalar>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) return std::numeric_limits<Scalar>::quiet_NaN();
    const Scalar lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const Scalar den = n * sxx - sx * sx;
  if (den == 0.0) return std::numeric_limits<Scalar>::quiet_NaN();
  return (n * sxy - sx * sy) / den;
}

ReductionResult mpc_reduction_check(const ModelSpec& model, const Grid& grid, const std::vector<Scalar>& dt_list, Scalar t) {
  require_mfg_model(model);
  require_1d(grid);
  if (dt_list.empty()) fail(ErrorKind::config, "mpc_reduction_check: empty dt list");
  for (std::size_t i = 0; i < dt_list.size(); ++i) {
    if (!(dt_list[i] > 0.0)) fail(ErrorKind::config, "mpc_reduction_check: dt must be positive");
    if (i > 0 && !(dt_list[i] < dt_list[i - 1])) fail(ErrorKind::config, "mpc_reduction_check: dt list must be decreasing");
  }
  const PopulationModel& pm = model.population(0);
  const GridDensity m = model.initial_density(0, grid);
  const Coupling c{MeasureView(m)};
  const Scalar T = model.horizon();
  Vector h(grid.size()), f(grid.size()), g(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const Point x = grid.midpoint(i);
    h[i] = pm.running_cost.value(x, c);
    f[i] = pm.drift.value(x, c)[0];
    g[i] = pm.terminal_cost.value(x, c);
  }
  const Vector surrogate = h + g / T;

  ReductionResult res;
  std::vector<Scalar> xs, ys;
  for (Scalar dt : dt_list) {
    HjbProblem pb;
    pb.grid = grid;
    pb.t0 = t;
    pb.t1 = t + dt;
    pb.n_t = 1;
    pb.running_cost = {h / dt, h / dt};
    pb.drift = {f, f};
    pb.terminal = g / T;
    pb.alpha = pm.penalty.alpha;
    pb.sigma2 = sigma2_on(model, grid);
    const ValueField w = solve_hjb(pb);
    const Scalar err = (w.values.row(0).transpose() - surrogate).cwiseAbs().maxCoeff();
    res.rows.push_back({dt, err});
    xs.push_back(dt);
    ys.push_back(err);
  }
  res.order = fit_loglog_slope(xs, ys);
  return res;
}

ComparisonResult compare_brs_mfg(const ModelSpec& model, const GridDensity& m0, const Grid& grid, int n_t, const PicardConfig& cfg) {
  ComparisonResult out;
  out.mfg = solve_mfg_picard(model, m0, grid, n_t, cfg);
  FpkConfig fcfg = cfg.fpk;
  fcfg.t0 = 0.0;
  fcfg.t_final = model.horizon();
  fcfg.record_times = slice_times(0.0, model.horizon(), n_t);
  const std::array<GridDensity, 1> init{m0};
  out.brs = solve_fpk(model, init, fcfg);
  for (std::size_t s = 0; s < out.brs.snapshots.size(); ++s) {
    const Scalar d = wasserstein_1d(out.brs.snapshots[s].fields[0], out.mfg.density.snapshots[s].fields[0], 1);
    out.times.push_back(out.brs.snapshots[s].t);
    out.w1.push_back(d);
    out.max_w1 = std::max(out.max_w1, d);
  }
  return out;
}

void write_value_field_csv(std::ostream& os, const ValueField& w) {
  os << "t,i,mid0,w\n";
  for (Eigen::Index k = 0; k < w.slices(); ++k) {
    const std::string t = format_number(w.times[static_cast<std::size_t>(k)]);
    for (Eigen::Index c = 0; c < w.grid.size(); ++c) {
      os << t << ',' << c << ',' << format_number(w.grid.midpoint(c)[0]) << ',' << format_number(w.values(k, c)) << '\n';
    }
  }
}

void write_iteration_log_csv(std::ostream& os, const std::vector<Scalar>& residuals) {
  os << "iter,residual\n";
  for (std::size_t k = 0; k < residuals.size(); ++k) os << k + 1 << ',' << format_number(residuals[k]) << '\n';
}

}  // namespace brsmfg
