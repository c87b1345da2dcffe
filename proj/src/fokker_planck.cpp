#include "brsmfg/fokker_planck.hpp"

#include "brsmfg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace brsmfg {

namespace {

Eigen::Index face_count(const Grid& g, int axis) {
  if (axis >= g.dims()) return 0;
  const Eigen::Index n0 = g.axis(0).cells;
  const Eigen::Index n1 = g.dims() == 2 ? g.axis(1).cells : 1;
  return axis == 0 ? (n0 + 1) * n1 : n0 * (n1 + 1);
}

void check_grid(const ModelSpec& model, const Grid& g) {
  if (g.dims() != model.dim()) fail(ErrorKind::config, "fpk: grid dimension must equal the state dimension");
  for (const Axis& a : g.axes()) {
    if (a.cells < 8) fail(ErrorKind::config, "fpk: each grid axis needs at least 8 cells");
  }
}

}  // namespace

std::vector<Scalar> FpkConfig::resolved_record_times() const {
  if (!(t_final > t0)) fail(ErrorKind::config, "fpk: t_final must exceed t0");
  std::vector<Scalar> times;
  if (!record_times.empty()) {
    times = record_times;
    std::sort(times.begin(), times.end());
    for (Scalar t : times) {
      if (t < t0 - 1e-12 || t > t_final + 1e-12) fail(ErrorKind::config, "fpk: record time outside [t0, t_final]");
    }
    return times;
  }
  if (record_every < 1) fail(ErrorKind::config, "fpk: record_every must be at least 1");
  for (int k = 0; k <= record_every; ++k) times.push_back(k == record_every ? t_final : t0 + (t_final - t0) * k / record_every);
  return times;
}

std::vector<Scalar> DensityPath::times() const {
  std::vector<Scalar> out;
  for (const auto& s : snapshots) out.push_back(s.t);
  return out;
}

const DensitySnapshot& DensityPath::at(Scalar t, Scalar tol) const {
  for (const auto& s : snapshots) {
    if (std::abs(s.t - t) <= tol) return s;
  }
  fail(ErrorKind::domain, "density path has no snapshot at t=" + format_number(t) + " (mismatched time grids)");
}

Scalar boundary_mass(const GridDensity& m) {
  const Grid& g = m.grid();
  const int n0 = g.axis(0).cells;
  const int n1 = g.dims() == 2 ? g.axis(1).cells : 1;
  Scalar acc = 0.0;
  for (Eigen::Index c = 0; c < g.size(); ++c) {
    const auto [i, j] = g.unflatten(c);
    const bool edge = i == 0 || i == n0 - 1 || (g.dims() == 2 && (j == 0 || j == n1 - 1));
    if (edge) acc += m.value(c);
  }
  return acc * g.cell_volume();
}

VelocityProvider brs_velocity(const ModelSpec& model, const FpkConfig& cfg) {
  const auto boundary = cfg.boundary;
  const int workers = cfg.workers;
  return [&model, boundary, workers](Scalar t, std::span<const GridDensity> fields, FaceVelocities& out) {
    const Grid& g = fields.front().grid();
    std::array<MeasureView, kMaxPopulations> views{};
    for (std::size_t p = 0; p < fields.size(); ++p) views[p] = MeasureView(fields[p]);
    const std::span<const MeasureView> view_span(views.data(), fields.size());
    out.resize(fields.size());
    const int n0 = g.axis(0).cells;
    const int n1 = g.dims() == 2 ? g.axis(1).cells : 1;
    for (std::size_t p = 0; p < fields.size(); ++p) {
      const Coupling coupling(view_span, p);
      for (int axis = 0; axis < g.dims(); ++axis) {
        Vector& v = out[p][static_cast<std::size_t>(axis)];
        v.setZero(face_count(g, axis));
        const int nf = axis == 0 ? n0 + 1 : n1 + 1;  // faces along the axis
        const int nt = axis == 0 ? n1 : n0;          // rows across it
        parallel_for(nt, workers, [&](int begin, int end) {
          for (int r = begin; r < end; ++r) {
            for (int f = 0; f < nf; ++f) {
              const bool lower = f == 0, upper = f == nf - 1;
              if ((lower && boundary[static_cast<std::size_t>(axis)][0] == Boundary::no_flux) ||
                  (upper && boundary[static_cast<std::size_t>(axis)][1] == Boundary::no_flux)) {
                continue;
              }
              Point x(g.dims());
              Eigen::Index idx;
              if (axis == 0) {
                x[0] = g.axis(0).face(f);
                if (g.dims() == 2) x[1] = g.axis(1).midpoint(r);
                idx = f + static_cast<Eigen::Index>(n0 + 1) * r;
              } else {
                x[0] = g.axis(0).midpoint(r);
                x[1] = g.axis(1).face(f);
                idx = r + static_cast<Eigen::Index>(n0) * f;
              }
              v[idx] = brs_drift(model, p, t, x, coupling)[axis];
            }
          }
        });
      }
    }
  };
}

// ------------------------------------------------------------- FpkOperator

FpkOperator::FpkOperator(const ModelSpec& model, const Grid& grid, FpkConfig cfg, VelocityProvider velocity)
    : model_(model), grid_(grid), cfg_(std::move(cfg)), velocity_(std::move(velocity)) {
  check_grid(model_, grid_);
  if (!(cfg_.cfl_safety > 0.0 && cfg_.cfl_safety <= 1.0)) fail(ErrorKind::config, "fpk: cfl_safety must lie in (0, 1]");
}

Scalar FpkOperator::prepare(Scalar t, std::span<const GridDensity> fields) {
  if (fields.size() != model_.population_count()) fail(ErrorKind::domain, "fpk: one field per population required");
  for (const auto& f : fields) {
    if (!(f.grid() == grid_)) fail(ErrorKind::domain, "fpk: field grid differs from solver grid");
  }
  velocity_(t, fields, vel_);
  const int dims = grid_.dims();
  const Eigen::Index cells = grid_.size();
  const int n0 = grid_.axis(0).cells;
  sigma2_.resize(fields.size());
  rate_.setZero(cells);
  Vector peak;  // largest density of any population, per cell
  for (const auto& f : fields) peak = peak.size() ? Vector(peak.cwiseMax(f.values())) : f.values();
  for (std::size_t p = 0; p < fields.size(); ++p) {
    const auto& diffusion = model_.population(p).diffusion;
    const Scalar feedback = model_.population(p).density_feedback / model_.population(p).penalty.alpha(t);
    for (int k = 0; k < dims; ++k) sigma2_[p][static_cast<std::size_t>(k)].resize(cells);
    for (Eigen::Index c = 0; c < cells; ++c) {
      const Point s = diffusion.value(t, grid_.midpoint(c));
      if (!s.allFinite() || (s.array() < 0.0).any()) fail(ErrorKind::numerical, "fpk: invalid diffusion at cell " + std::to_string(c));
      const auto [i, j] = grid_.unflatten(c);
      Scalar r = 0.0;
      for (int k = 0; k < dims; ++k) {
        const Scalar dx = grid_.axis(k).width();
        sigma2_[p][static_cast<std::size_t>(k)][c] = s[k] * s[k];
        r += (s[k] * s[k] + 2.0 * feedback * std::max(peak[c], 0.0)) / (dx * dx);
        const Vector& v = vel_[p][static_cast<std::size_t>(k)];
        Scalar lo, hi;
        if (k == 0) {
          lo = v[i + static_cast<Eigen::Index>(n0 + 1) * j];
          hi = v[i + 1 + static_cast<Eigen::Index>(n0 + 1) * j];
        } else {
          lo = v[i + static_cast<Eigen::Index>(n0) * j];
          hi = v[i + static_cast<Eigen::Index>(n0) * (j + 1)];
        }
        if (!std::isfinite(lo) || !std::isfinite(hi)) fail(ErrorKind::numerical, "fpk: non-finite face velocity next to cell " + std::to_string(c));
        r += (std::max(hi, 0.0) + std::max(-lo, 0.0)) / dx;
      }
      rate_[c] = std::max(rate_[c], r);
    }
  }
  max_rate_ = rate_.maxCoeff();
  return max_rate_ > 0.0 ? 1.0 / max_rate_ : std::numeric_limits<Scalar>::infinity();
}

std::vector<GridDensity> FpkOperator::apply(std::span<const GridDensity> fields, Scalar dt) const {
  if (dt * max_rate_ > 1.0 + 1e-12) {
    Eigen::Index worst = 0;
    rate_.maxCoeff(&worst);
    const auto [i, j] = grid_.unflatten(worst);
    fail(ErrorKind::numerical, "fpk: CFL violation at the faces of cell (" + std::to_string(i) + ", " + std::to_string(j) +
                                   "): dt=" + format_number(dt) + " exceeds " + format_number(1.0 / max_rate_));
  }
  const int dims = grid_.dims();
  const int n0 = grid_.axis(0).cells;
  const int n1 = dims == 2 ? grid_.axis(1).cells : 1;
  std::vector<GridDensity> out;
  out.reserve(fields.size());
  for (std::size_t p = 0; p < fields.size(); ++p) {
    const Vector& m = fields[p].values();
    Vector next = m;
    for (int k = 0; k < dims; ++k) {
      const Scalar dx = grid_.axis(k).width();
      const Scalar ratio = dt / dx;
      const Vector& v = vel_[p][static_cast<std::size_t>(k)];
      const Vector& s2 = sigma2_[p][static_cast<std::size_t>(k)];
      const auto lower = cfg_.boundary[static_cast<std::size_t>(k)][0];
      const auto upper = cfg_.boundary[static_cast<std::size_t>(k)][1];
      const int nf = (k == 0 ? n0 : n1) + 1;
      const int nt = k == 0 ? n1 : n0;
      for (int r = 0; r < nt; ++r) {
        auto cell = [&](int a) { return k == 0 ? grid_.flatten(a, r) : grid_.flatten(r, a); };
        auto face = [&](int f) { return k == 0 ? f + static_cast<Eigen::Index>(n0 + 1) * r : r + static_cast<Eigen::Index>(n0) * f; };
        for (int f = 0; f < nf; ++f) {
          const Scalar vf = v[face(f)];
          Scalar flux;
          if (f == 0) {
            if (lower == Boundary::no_flux) continue;
            const Eigen::Index right = cell(0);
            flux = std::min(vf, 0.0) * m[right] - 0.5 * (s2[right] * m[right]) / dx;
            next[right] += ratio * flux;
          } else if (f == nf - 1) {
            if (upper == Boundary::no_flux) continue;
            const Eigen::Index left = cell(nf - 2);
            flux = std::max(vf, 0.0) * m[left] + 0.5 * (s2[left] * m[left]) / dx;
            next[left] -= ratio * flux;
          } else {
            const Eigen::Index left = cell(f - 1), right = cell(f);
            // Hybrid differencing: centred where the cell Peclet number
            // keeps both neighbour coefficients nonnegative, upwind elsewhere.
            const Scalar adv = std::abs(vf) * dx <= std::min(s2[left], s2[right]) ? 0.5 * vf * (m[left] + m[right])
                               : vf > 0.0                                       ? vf * m[left]
                                                                                : vf * m[right];
            flux = adv - 0.5 * (s2[right] * m[right] - s2[left] * m[left]) / dx;
            next[left] -= ratio * flux;
            next[right] += ratio * flux;
          }
        }
      }
    }
    out.emplace_back(grid_, std::move(next));
  }
  return out;
}

std::vector<GridDensity> fpk_step(const ModelSpec& model, std::span<const GridDensity> fields, Scalar t, Scalar dt,
                                  const FpkConfig& cfg) {
  if (fields.empty()) fail(ErrorKind::domain, "fpk_step: no fields");
  if (!(dt > 0.0)) fail(ErrorKind::domain, "fpk_step: dt must be positive");
  FpkOperator op(model, fields.front().grid(), cfg, brs_velocity(model, cfg));
  op.prepare(t, fields);
  return op.apply(fields, dt);
}

DensityPath solve_fpk(const ModelSpec& model, std::span<const GridDensity> m0, const FpkConfig& cfg) {
  return solve_fpk(model, m0, cfg, brs_velocity(model, cfg));
}

DensityPath solve_fpk(const ModelSpec& model, std::span<const GridDensity> m0, const FpkConfig& cfg, VelocityProvider velocity) {
  if (m0.size() != model.population_count()) fail(ErrorKind::domain, "solve_fpk: one initial density per population required");
  for (const auto& m : m0) {
    if (std::abs(m.mass() - 1.0) > 1e-10) fail(ErrorKind::domain, "solve_fpk: initial density must have unit mass");
  }
  FpkOperator op(model, m0.front().grid(), cfg, std::move(velocity));
  const std::vector<Scalar> record = cfg.resolved_record_times();

  DensityPath path;
  std::vector<GridDensity> fields(m0.begin(), m0.end());
  Scalar t = cfg.t0;
  auto snapshot = [&] {
    path.snapshots.push_back({t, fields});
    for (const auto& f : fields) path.max_boundary_mass = std::max(path.max_boundary_mass, boundary_mass(f));
  };
  for (Scalar target : record) {
    while (t < target) {
      const Scalar stable = op.prepare(t, fields);
      Scalar dt = cfg.cfl_safety * stable;
      bool lands = false;
      if (t + dt >= target - 1e-12 * std::max(1.0, std::abs(target))) {
        dt = target - t;
        lands = true;
      }
      fields = op.apply(fields, dt);
      t = lands ? target : t + dt;
      ++path.steps;
    }
    snapshot();
  }
  return path;
}

void write_density_path_csv(std::ostream& os, const DensityPath& path, const std::map<std::string, std::string>& metadata) {
  for (const auto& [k, v] : metadata) os << "# " << k << '=' << v << '\n';
  os << "# steps=" << path.steps << '\n';
  os << "# max_boundary_mass=" << format_number(path.max_boundary_mass) << '\n';
  if (path.snapshots.empty()) return;
  const Grid& g = path.snapshots.front().fields.front().grid();
  os << (g.dims() == 1 ? "t,pop,i,mid0,value\n" : "t,pop,i,j,mid0,mid1,value\n");
  for (const auto& snap : path.snapshots) {
    const std::string t = format_number(snap.t);
    for (std::size_t p = 0; p < snap.fields.size(); ++p) {
      const GridDensity& m = snap.fields[p];
      for (Eigen::Index c = 0; c < g.size(); ++c) {
        const auto [i, j] = g.unflatten(c);
        const Point mid = g.midpoint(c);
        os << t << ',' << p << ',' << i;
        if (g.dims() == 2) os << ',' << j;
        for (int k = 0; k < g.dims(); ++k) os << ',' << format_number(mid[k]);
        os << ',' << format_number(m.value(c)) << '\n';
      }
    }
  }
}

}  // namespace brsmfg
