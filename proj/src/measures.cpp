#include "brsmfg/measures.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <numeric>
#include <ostream>

namespace brsmfg {

// --------------------------------------------------------------------- Grid

Grid::Grid(std::vector<Axis> axes) : axes_(std::move(axes)) {
  if (axes_.empty() || axes_.size() > 2) fail(ErrorKind::config, "grid: only 1-D and 2-D grids are supported");
  size_ = 1;
  cell_volume_ = 1.0;
  for (const Axis& a : axes_) {
    if (!(a.min < a.max)) fail(ErrorKind::config, "grid: axis min must be below max");
    if (a.cells < 1) fail(ErrorKind::config, "grid: axis needs at least one cell");
    size_ *= a.cells;
    cell_volume_ *= a.width();
  }
}

Point Grid::midpoint(Eigen::Index flat) const {
  const auto [i, j] = unflatten(flat);
  Point x(dims());
  x[0] = axes_[0].midpoint(i);
  if (dims() == 2) x[1] = axes_[1].midpoint(j);
  return x;
}

bool Grid::contains(const Point& x) const {
  if (x.size() != dims()) return false;
  for (int k = 0; k < dims(); ++k) {
    if (x[k] < axes_[static_cast<std::size_t>(k)].min || x[k] > axes_[static_cast<std::size_t>(k)].max) return false;
  }
  return true;
}

// -------------------------------------------------------------- GridDensity

GridDensity::GridDensity(Grid grid, Vector values) : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size()) fail(ErrorKind::domain, "GridDensity: value count does not match grid");
  refresh();
}

GridDensity GridDensity::uniform(const Grid& grid) {
  Scalar volume = 1.0;
  for (const Axis& a : grid.axes()) volume *= a.max - a.min;
  return GridDensity(grid, Vector::Constant(grid.size(), 1.0 / volume));
}

void GridDensity::assign(Vector values) {
  if (values.size() != grid_.size()) fail(ErrorKind::domain, "GridDensity: value count does not match grid");
  values_ = std::move(values);
  refresh();
}

void GridDensity::normalize() {
  if (!(mass_ > 0.0)) fail(ErrorKind::domain, "GridDensity: cannot normalize zero mass");
  values_ /= mass_;
  refresh();
}

void GridDensity::refresh() {
  for (Eigen::Index c = 0; c < values_.size(); ++c) {
    if (!std::isfinite(values_[c])) fail(ErrorKind::numerical, "GridDensity: non-finite value in cell " + std::to_string(c));
    if (values_[c] < -kNegativeTolerance) {
      fail(ErrorKind::numerical, "GridDensity: negative density " + format_number(values_[c]) + " in cell " + std::to_string(c));
    }
  }
  mass_ = values_.sum() * grid_.cell_volume();
}

Scalar l1_distance(const GridDensity& a, const GridDensity& b) {
  if (!(a.grid() == b.grid())) fail(ErrorKind::domain, "l1_distance: grids differ");
  return (a.values() - b.values()).cwiseAbs().sum() * a.grid().cell_volume();
}

GridDensity blend(const GridDensity& a, const GridDensity& b, Scalar theta) {
  if (!(a.grid() == b.grid())) fail(ErrorKind::domain, "blend: grids differ");
  return GridDensity(a.grid(), theta * a.values() + (1.0 - theta) * b.values());
}

// --------------------------------------------------------- EmpiricalMeasure

EmpiricalMeasure::EmpiricalMeasure(RowMatrix points) : points_(std::move(points)) {
  if (points_.rows() < 1) fail(ErrorKind::domain, "EmpiricalMeasure: needs at least one point");
  if (points_.cols() < 1 || points_.cols() > kMaxDim) fail(ErrorKind::domain, "EmpiricalMeasure: unsupported dimension");
  weights_ = Vector::Constant(points_.rows(), 1.0 / static_cast<Scalar>(points_.rows()));
}

EmpiricalMeasure::EmpiricalMeasure(RowMatrix points, Vector weights)
    : points_(std::move(points)), weights_(std::move(weights)), uniform_(false) {
  if (points_.rows() < 1) fail(ErrorKind::domain, "EmpiricalMeasure: needs at least one point");
  if (points_.cols() < 1 || points_.cols() > kMaxDim) fail(ErrorKind::domain, "EmpiricalMeasure: unsupported dimension");
  if (weights_.size() != points_.rows()) fail(ErrorKind::domain, "EmpiricalMeasure: weight count mismatch");
  if ((weights_.array() < 0.0).any()) fail(ErrorKind::domain, "EmpiricalMeasure: negative weight");
  if (std::abs(weights_.sum() - 1.0) > 1e-12) fail(ErrorKind::domain, "EmpiricalMeasure: weights must sum to one");
  const Scalar u = 1.0 / static_cast<Scalar>(points_.rows());
  uniform_ = (weights_.array() == u).all();
}

EmpiricalMeasure EmpiricalMeasure::from_values(std::span<const Scalar> xs) {
  RowMatrix p(static_cast<Eigen::Index>(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) p(static_cast<Eigen::Index>(i), 0) = xs[i];
  return EmpiricalMeasure(std::move(p));
}

EmpiricalMeasure leave_one_out(const EmpiricalMeasure& m, Eigen::Index i) {
  const Eigen::Index n = m.size();
  if (n < 2) fail(ErrorKind::domain, "empty leave-one-out");
  if (i < 0 || i >= n) fail(ErrorKind::domain, "leave_one_out: index out of range");
  if (!m.is_uniform()) fail(ErrorKind::domain, "leave_one_out: weights must be uniform");
  RowMatrix rest(n - 1, m.dim());
  rest.topRows(i) = m.points().topRows(i);
  rest.bottomRows(n - 1 - i) = m.points().bottomRows(n - 1 - i);
  return EmpiricalMeasure(std::move(rest));
}

EmpiricalMeasure translate(const EmpiricalMeasure& m, const Point& shift) {
  RowMatrix p = m.points();
  p.rowwise() += shift.transpose();
  return m.is_uniform() ? EmpiricalMeasure(std::move(p)) : EmpiricalMeasure(std::move(p), m.weights());
}

// -------------------------------------------------------------- MeasureView

Eigen::Index MeasureView::atom_count() const {
  if (grid_) return grid_->grid().size();
  return points_->rows() - (exclude_ >= 0 ? 1 : 0);
}

Coupling::Coupling(std::span<const MeasureView> views, std::size_t self) : count_(views.size()), self_(self) {
  if (views.empty() || views.size() > kMaxPopulations) fail(ErrorKind::domain, "Coupling: unsupported population count");
  if (self >= views.size()) fail(ErrorKind::domain, "Coupling: population index out of range");
  std::copy(views.begin(), views.end(), views_.begin());
}

namespace detail {
std::string describe_point(const Point& x) {
  std::string s = "(";
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (k) s += ", ";
    s += format_number(x[k]);
  }
  return s + ")";
}
}  // namespace detail

// -------------------------------------------------------------- Wasserstein

namespace {

// Piece of a quantile function: on [u0, u0 + len], q rises linearly from q0 to q1.
struct QuantilePiece {
  Scalar len;
  Scalar q0;
  Scalar q1;

  // Interpolated by fraction so tiny cell masses never produce huge slopes.
  Scalar at(Scalar offset) const {
    if (q1 == q0 || len <= 0.0) return q0;
    return q0 + (q1 - q0) * std::clamp(offset / len, 0.0, 1.0);
  }
};

std::vector<QuantilePiece> quantile_pieces(const MeasureView& m) {
  std::vector<QuantilePiece> pieces;
  if (const GridDensity* g = m.grid_density()) {
    const Axis& ax = g->grid().axis(0);
    const Scalar total = g->mass();
    if (!(total > 0.0)) fail(ErrorKind::domain, "wasserstein_1d: grid density has no mass");
    const Scalar dx = ax.width();
    for (int i = 0; i < ax.cells; ++i) {
      const Scalar w = std::max(g->value(i), 0.0) * dx / total;
      if (w <= 0.0) continue;
      pieces.push_back({w, ax.face(i), ax.face(i + 1)});
    }
    return pieces;
  }
  std::vector<std::pair<Scalar, Scalar>> atoms;
  atoms.reserve(static_cast<std::size_t>(m.atom_count()));
  m.for_each_atom([&](const Point& y, Scalar w) {
    if (w > 0.0) atoms.emplace_back(y[0], w);
  });
  std::sort(atoms.begin(), atoms.end());
  Scalar total = 0.0;
  for (const auto& a : atoms) total += a.second;
  for (const auto& [x, w] : atoms) pieces.push_back({w / total, x, x});
  return pieces;
}

// Exact integral of |c0 + c1 s|^p over s in [0, len].
Scalar integrate_abs_power(Scalar c0, Scalar c1, Scalar len, int p) {
  if (p == 2) return c0 * c0 * len + c0 * c1 * len * len + c1 * c1 * len * len * len / 3.0;
  const Scalar c_end = c0 + c1 * len;
  if ((c0 >= 0.0) == (c_end >= 0.0) || c1 == 0.0) return 0.5 * (std::abs(c0) + std::abs(c_end)) * len;
  const Scalar root = -c0 / c1;
  return 0.5 * std::abs(c0) * root + 0.5 * std::abs(c_end) * (len - root);
}

bool equal_size_uniform(const MeasureView& m, const MeasureView& n) {
  auto uniform = [](const MeasureView& v) {
    if (v.kind() != MeasureView::Kind::empirical) return false;
    bool ok = true;
    Scalar first = -1.0;
    v.for_each_atom([&](const Point&, Scalar w) {
      if (first < 0.0) first = w;
      ok = ok && (w == first);
    });
    return ok;
  };
  return m.atom_count() == n.atom_count() && uniform(m) && uniform(n);
}

std::vector<Scalar> sorted_coordinates(const MeasureView& m) {
  std::vector<Scalar> xs;
  xs.reserve(static_cast<std::size_t>(m.atom_count()));
  m.for_each_atom([&](const Point& y, Scalar) { xs.push_back(y[0]); });
  std::sort(xs.begin(), xs.end());
  return xs;
}

}  // namespace

Scalar wasserstein_1d(const MeasureView& mu, const MeasureView& nu, int p) {
  if (p != 1 && p != 2) fail(ErrorKind::domain, "wasserstein_1d: p must be 1 or 2");
  if (mu.dim() != 1 || nu.dim() != 1) fail(ErrorKind::domain, "wasserstein_1d: measures must be one-dimensional; use wasserstein_small_nd");

  if (equal_size_uniform(mu, nu)) {
    const auto xs = sorted_coordinates(mu);
    const auto ys = sorted_coordinates(nu);
    Scalar acc = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) acc += p == 1 ? std::abs(xs[k] - ys[k]) : (xs[k] - ys[k]) * (xs[k] - ys[k]);
    acc /= static_cast<Scalar>(xs.size());
    return p == 1 ? acc : std::sqrt(acc);
  }

  const auto a = quantile_pieces(mu);
  const auto b = quantile_pieces(nu);
  if (a.empty() || b.empty()) fail(ErrorKind::domain, "wasserstein_1d: empty measure");

  // Walk the merged breakpoints of both quantile functions; on each common
  // interval both are affine in u so the integrand is integrated exactly.
  auto ends = [](const std::vector<QuantilePiece>& ps) {
    std::vector<Scalar> e(ps.size());
    Scalar c = 0.0;
    for (std::size_t k = 0; k < ps.size(); ++k) e[k] = (c += ps[k].len);
    e.back() = 1.0;
    return e;
  };
  const auto end_a = ends(a);
  const auto end_b = ends(b);
  std::size_t ia = 0, ib = 0;
  Scalar u = 0.0, start_a = 0.0, start_b = 0.0, acc = 0.0;
  while (ia < a.size() && ib < b.size()) {
    const Scalar end = std::min(end_a[ia], end_b[ib]);
    if (end > u) {
      const Scalar len = end - u;
      const Scalar d0 = a[ia].at(u - start_a) - b[ib].at(u - start_b);
      const Scalar d1 = a[ia].at(end - start_a) - b[ib].at(end - start_b);
      acc += integrate_abs_power(d0, (d1 - d0) / len, len, p);
      u = end;
    }
    if (end_a[ia] <= end) start_a = end_a[ia++];
    if (end_b[ib] <= end) start_b = end_b[ib++];
  }
  acc = std::max(acc, 0.0);
  return p == 1 ? acc : std::sqrt(acc);
}

Scalar wasserstein_small_nd(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int p) {
  if (p != 1 && p != 2) fail(ErrorKind::domain, "wasserstein_small_nd: p must be 1 or 2");
  const Eigen::Index n = mu.size();
  if (n != nu.size()) fail(ErrorKind::domain, "wasserstein_small_nd: measures must have equal size");
  if (n > 10) fail(ErrorKind::domain, "oracle scale exceeded");
  if (mu.dim() != nu.dim()) fail(ErrorKind::domain, "wasserstein_small_nd: dimension mismatch");
  if (!mu.is_uniform() || !nu.is_uniform()) fail(ErrorKind::domain, "wasserstein_small_nd: weights must be uniform");

  const auto un = static_cast<std::size_t>(n);
  std::vector<Scalar> cost(un * un);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Scalar dist = (mu.points().row(i) - nu.points().row(j)).norm();
      cost[static_cast<std::size_t>(i) * un + static_cast<std::size_t>(j)] = p == 1 ? dist : dist * dist;
    }
  }
  std::vector<std::size_t> perm(un);
  std::iota(perm.begin(), perm.end(), 0);
  Scalar best = std::numeric_limits<Scalar>::infinity();
  do {
    Scalar c = 0.0;
    for (std::size_t i = 0; i < un; ++i) c += cost[i * un + perm[i]];
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  best /= static_cast<Scalar>(n);
  return p == 1 ? best : std::sqrt(best);
}

// ------------------------------------------------------------------ Moments

Moments moments(const MeasureView& m, int order) {
  if (order != 1 && order != 2) fail(ErrorKind::domain, "moments: order must be 1 or 2");
  const int d = m.dim();
  Point sum = Point::Zero(d);
  Scalar total = 0.0;
  m.for_each_atom([&](const Point& y, Scalar w) {
    sum += w * y;
    total += w;
  });
  Moments out;
  out.mean = sum / total;
  if (order == 2) {
    Point var = Point::Zero(d);
    m.for_each_atom([&](const Point& y, Scalar w) { var += w * (y - out.mean).cwiseAbs2(); });
    out.variance = var / total;
  }
  return out;
}

// ------------------------------------------------------------------ Density

namespace {

struct Bracket {
  int lo;
  Scalar t;       // weight of the upper node
  bool interior;  // false in the half-cell strips next to the boundary
};

Bracket bracket(const Axis& a, Scalar x) {
  const Scalar s = (x - a.min) / a.width() - 0.5;
  if (a.cells == 1) return {0, 0.0, false};
  if (s <= 0.0) return {0, 0.0, false};
  if (s >= a.cells - 1) return {a.cells - 2, 1.0, false};
  const int lo = static_cast<int>(std::floor(s));
  return {lo, s - lo, true};
}

constexpr Scalar kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Scalar density_at(const MeasureView& m, const Point& x, Scalar bandwidth) {
  if (const GridDensity* gd = m.grid_density()) {
    const Grid& g = gd->grid();
    if (!g.contains(x)) return 0.0;
    const Axis& ax = g.axis(0);
    const Bracket bx = bracket(ax, x[0]);
    const int hi_x = std::min(bx.lo + 1, ax.cells - 1);
    if (g.dims() == 1) return (1.0 - bx.t) * gd->value(bx.lo) + bx.t * gd->value(hi_x);
    const Axis& ay = g.axis(1);
    const Bracket by = bracket(ay, x[1]);
    const int hi_y = std::min(by.lo + 1, ay.cells - 1);
    const Scalar v00 = gd->value(g.flatten(bx.lo, by.lo)), v10 = gd->value(g.flatten(hi_x, by.lo));
    const Scalar v01 = gd->value(g.flatten(bx.lo, hi_y)), v11 = gd->value(g.flatten(hi_x, hi_y));
    return (1.0 - by.t) * ((1.0 - bx.t) * v00 + bx.t * v10) + by.t * ((1.0 - bx.t) * v01 + bx.t * v11);
  }
  if (!(bandwidth > 0.0)) fail(ErrorKind::domain, "density_at: bandwidth must be positive");
  const int d = m.dim();
  const Scalar norm = std::pow(kInvSqrt2Pi / bandwidth, d);
  const Scalar inv_h2 = 1.0 / (bandwidth * bandwidth);
  Scalar acc = 0.0;
  m.for_each_atom([&](const Point& y, Scalar w) { acc += w * std::exp(-0.5 * (x - y).squaredNorm() * inv_h2); });
  return norm * acc;
}

Point density_gradient(const MeasureView& m, const Point& x, Scalar bandwidth) {
  const int d = m.dim();
  if (const GridDensity* gd = m.grid_density()) {
    Point grad = Point::Zero(d);
    const Grid& g = gd->grid();
    if (!g.contains(x)) return grad;
    const Axis& ax = g.axis(0);
    const Bracket bx = bracket(ax, x[0]);
    const int hi_x = std::min(bx.lo + 1, ax.cells - 1);
    if (d == 1) {
      if (bx.interior) grad[0] = (gd->value(hi_x) - gd->value(bx.lo)) / ax.width();
      return grad;
    }
    const Axis& ay = g.axis(1);
    const Bracket by = bracket(ay, x[1]);
    const int hi_y = std::min(by.lo + 1, ay.cells - 1);
    const Scalar v00 = gd->value(g.flatten(bx.lo, by.lo)), v10 = gd->value(g.flatten(hi_x, by.lo));
    const Scalar v01 = gd->value(g.flatten(bx.lo, hi_y)), v11 = gd->value(g.flatten(hi_x, hi_y));
    if (bx.interior) grad[0] = ((1.0 - by.t) * (v10 - v00) + by.t * (v11 - v01)) / ax.width();
    if (by.interior) grad[1] = ((1.0 - bx.t) * (v01 - v00) + bx.t * (v11 - v10)) / ay.width();
    return grad;
  }
  if (!(bandwidth > 0.0)) fail(ErrorKind::domain, "density_gradient: bandwidth must be positive");
  const Scalar norm = std::pow(kInvSqrt2Pi / bandwidth, d);
  const Scalar inv_h2 = 1.0 / (bandwidth * bandwidth);
  Point acc = Point::Zero(d);
  m.for_each_atom([&](const Point& y, Scalar w) {
    const Point diff = x - y;
    acc -= w * std::exp(-0.5 * diff.squaredNorm() * inv_h2) * inv_h2 * diff;
  });
  return norm * acc;
}

Scalar silverman_bandwidth(const MeasureView& m) {
  const Moments mo = moments(m, 2);
  const Scalar stdev = std::max(std::sqrt(mo.variance.mean()), 1e-8);
  return 1.06 * stdev * std::pow(static_cast<Scalar>(m.atom_count()), -0.2);
}

// ---------------------------------------------------------------------- CSV

std::string format_number(Scalar x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_empirical_csv(std::ostream& os, std::span<const EmpiricalMeasure> pops, bool header) {
  if (header) {
    const int d = pops.empty() ? 1 : pops.front().dim();
    os << "pop,idx";
    for (int k = 0; k < d; ++k) os << ",x" << k;
    os << ",weight\n";
  }
  for (std::size_t p = 0; p < pops.size(); ++p) {
    const EmpiricalMeasure& m = pops[p];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      os << p << ',' << i;
      for (int k = 0; k < m.dim(); ++k) os << ',' << format_number(m.points()(i, k));
      os << ',' << format_number(m.weights()[i]) << '\n';
    }
  }
}

void write_grid_csv(std::ostream& os, std::span<const GridDensity> pops, bool header) {
  if (pops.empty()) return;
  const Grid& g = pops.front().grid();
  if (header) os << (g.dims() == 1 ? "pop,i,mid0,value\n" : "pop,i,j,mid0,mid1,value\n");
  for (std::size_t p = 0; p < pops.size(); ++p) {
    for (Eigen::Index c = 0; c < g.size(); ++c) {
      const auto [i, j] = g.unflatten(c);
      const Point mid = g.midpoint(c);
      os << p << ',' << i;
      if (g.dims() == 2) os << ',' << j;
      for (int k = 0; k < g.dims(); ++k) os << ',' << format_number(mid[k]);
      os << ',' << format_number(pops[p].value(c)) << '\n';
    }
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

Scalar parse_number(const std::string& s) {
  Scalar v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) fail(ErrorKind::config, "csv: cannot parse number '" + s + "'");
  return v;
}

}  // namespace

std::vector<EmpiricalMeasure> read_empirical_csv(std::istream& is) {
  std::string line;
  std::vector<std::vector<std::vector<Scalar>>> rows;  // pop -> particle -> coords + weight
  while (std::getline(is, line)) {
    if (line.empty() || line.rfind("pop", 0) == 0) continue;
    const auto cells = split_csv(line);
    if (cells.size() < 4) fail(ErrorKind::config, "csv: malformed empirical row");
    const auto pop = static_cast<std::size_t>(parse_number(cells[0]));
    if (rows.size() <= pop) rows.resize(pop + 1);
    std::vector<Scalar> vals;
    for (std::size_t k = 2; k < cells.size(); ++k) vals.push_back(parse_number(cells[k]));
    rows[pop].push_back(std::move(vals));
  }
  std::vector<EmpiricalMeasure> out;
  for (const auto& pop : rows) {
    const auto n = static_cast<Eigen::Index>(pop.size());
    const auto d = static_cast<Eigen::Index>(pop.front().size() - 1);
    RowMatrix pts(n, d);
    Vector w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < d; ++k) pts(i, k) = pop[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      w[i] = pop[static_cast<std::size_t>(i)].back();
    }
    out.emplace_back(std::move(pts), std::move(w));
  }
  return out;
}

std::vector<GridDensity> read_grid_csv(std::istream& is, const Grid& grid) {
  std::string line;
  std::vector<Vector> vals;
  const std::size_t idx_cols = static_cast<std::size_t>(grid.dims());
  while (std::getline(is, line)) {
    if (line.empty() || line.rfind("pop", 0) == 0) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 2 + 2 * idx_cols) fail(ErrorKind::config, "csv: malformed grid row");
    const auto pop = static_cast<std::size_t>(parse_number(cells[0]));
    if (vals.size() <= pop) vals.resize(pop + 1, Vector::Zero(grid.size()));
    const int i = static_cast<int>(parse_number(cells[1]));
    const int j = idx_cols == 2 ? static_cast<int>(parse_number(cells[2])) : 0;
    vals[pop][grid.flatten(i, j)] = parse_number(cells.back());
  }
  std::vector<GridDensity> out;
  for (auto& v : vals) out.emplace_back(grid, std::move(v));
  return out;
}

}  // namespace brsmfg
