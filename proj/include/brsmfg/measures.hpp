#pragma once

#include "brsmfg/types.hpp"

#include <array>
#include <cmath>
#include <iosfwd>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace brsmfg {

// ---------------------------------------------------------------------------
// Grids and cell-averaged densities
// ---------------------------------------------------------------------------

struct Axis {
  Scalar min = 0.0;
  Scalar max = 1.0;
  int cells = 1;

  Scalar width() const { return (max - min) / cells; }
  Scalar midpoint(int i) const { return min + (i + 0.5) * width(); }
  Scalar face(int i) const { return min + i * width(); }
  bool operator==(const Axis&) const = default;
};

/// Axis-aligned rectangular tensor grid in one or two dimensions.
/// Cells are numbered with the first axis fastest: flat = i + n0 * j.
class Grid {
 public:
  Grid() = default;
  explicit Grid(std::vector<Axis> axes);
  Grid(Scalar min, Scalar max, int cells) : Grid(std::vector<Axis>{{min, max, cells}}) {}

  int dims() const { return static_cast<int>(axes_.size()); }
  const Axis& axis(int k) const { return axes_[static_cast<std::size_t>(k)]; }
  const std::vector<Axis>& axes() const { return axes_; }
  Eigen::Index size() const { return size_; }
  Scalar cell_volume() const { return cell_volume_; }

  std::array<int, 2> unflatten(Eigen::Index flat) const {
    const int n0 = axes_[0].cells;
    return {static_cast<int>(flat % n0), static_cast<int>(flat / n0)};
  }
  Eigen::Index flatten(int i, int j = 0) const {
    return static_cast<Eigen::Index>(i) + static_cast<Eigen::Index>(axes_[0].cells) * j;
  }
  Point midpoint(Eigen::Index flat) const;
  bool contains(const Point& x) const;

  bool operator==(const Grid& o) const { return axes_ == o.axes_; }

 private:
  std::vector<Axis> axes_;
  Eigen::Index size_ = 0;
  Scalar cell_volume_ = 0.0;
};

/// Nonnegative cell-averaged density (probability per unit volume).
/// The cached mass is recomputed on every mutation.
class GridDensity {
 public:
  /// Values below this are treated as a scheme failure rather than roundoff.
  static constexpr Scalar kNegativeTolerance = 1e-13;

  GridDensity() = default;
  GridDensity(Grid grid, Vector values);

  /// Cell averages of a pointwise density evaluated at cell midpoints.
  template <class F>
  static GridDensity from_midpoints(const Grid& grid, F&& density) {
    Vector v(grid.size());
    for (Eigen::Index c = 0; c < grid.size(); ++c) v[c] = density(grid.midpoint(c));
    return GridDensity(grid, std::move(v));
  }

  static GridDensity uniform(const Grid& grid);

  const Grid& grid() const { return grid_; }
  const Vector& values() const { return values_; }
  Scalar value(Eigen::Index c) const { return values_[c]; }
  Scalar mass() const { return mass_; }
  Scalar min_value() const { return values_.size() ? values_.minCoeff() : 0.0; }

  void assign(Vector values);
  /// Scales values so that the mass is one.
  void normalize();

 private:
  void refresh();

  Grid grid_;
  Vector values_;
  Scalar mass_ = 0.0;
};

/// sum over cells of |a - b| * cell volume.
Scalar l1_distance(const GridDensity& a, const GridDensity& b);

/// theta * a + (1 - theta) * b on a shared grid.
GridDensity blend(const GridDensity& a, const GridDensity& b, Scalar theta);

// ---------------------------------------------------------------------------
// Empirical measures
// ---------------------------------------------------------------------------

class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;
  /// Uniform weights 1/N.
  explicit EmpiricalMeasure(RowMatrix points);
  EmpiricalMeasure(RowMatrix points, Vector weights);

  static EmpiricalMeasure from_values(std::span<const Scalar> xs);

  Eigen::Index size() const { return points_.rows(); }
  int dim() const { return static_cast<int>(points_.cols()); }
  const RowMatrix& points() const { return points_; }
  const Vector& weights() const { return weights_; }
  Point point(Eigen::Index i) const { return points_.row(i).transpose(); }
  bool is_uniform() const { return uniform_; }

 private:
  RowMatrix points_;
  Vector weights_;
  bool uniform_ = true;
};

/// Uniform empirical measure on all points except the i-th.
EmpiricalMeasure leave_one_out(const EmpiricalMeasure& m, Eigen::Index i);

EmpiricalMeasure translate(const EmpiricalMeasure& m, const Point& shift);

// ---------------------------------------------------------------------------
// MeasureView: read-only view over particles or a grid density
// ---------------------------------------------------------------------------

/// Non-owning view over either a (possibly leave-one-out) particle cloud or a
/// grid density. Cheap to copy; the viewed object must outlive the view.
class MeasureView {
 public:
  enum class Kind { empirical, grid };

  MeasureView() = default;
  MeasureView(const EmpiricalMeasure& m)  // NOLINT(google-explicit-constructor)
      : points_(&m.points()), weights_(m.is_uniform() ? nullptr : &m.weights()) {}
  MeasureView(const GridDensity& g) : grid_(&g) {}  // NOLINT(google-explicit-constructor)

  /// Uniform empirical measure over the rows of `points`, optionally skipping
  /// row `exclude` (the leave-one-out measure m_{-i}).
  static MeasureView particles(const RowMatrix& points, Eigen::Index exclude = -1) {
    MeasureView v;
    v.points_ = &points;
    v.exclude_ = exclude;
    return v;
  }

  Kind kind() const { return grid_ ? Kind::grid : Kind::empirical; }
  bool valid() const { return grid_ || points_; }
  int dim() const { return grid_ ? grid_->grid().dims() : static_cast<int>(points_->cols()); }
  Scalar mass() const { return grid_ ? grid_->mass() : 1.0; }
  Eigen::Index atom_count() const;
  const GridDensity* grid_density() const { return grid_; }
  const RowMatrix* points() const { return points_; }
  Eigen::Index excluded() const { return exclude_; }

  /// Calls f(point, weight) for every atom. Grid cells contribute their
  /// midpoint with weight value * cell volume.
  template <class F>
  void for_each_atom(F&& f) const {
    if (grid_) {
      const Grid& g = grid_->grid();
      const Scalar vol = g.cell_volume();
      const Vector& vals = grid_->values();
      for (Eigen::Index c = 0; c < g.size(); ++c) {
        if (vals[c] != 0.0) f(g.midpoint(c), vals[c] * vol);
      }
      return;
    }
    const Eigen::Index n = points_->rows();
    if (weights_) {
      const Scalar scale = exclude_ >= 0 ? 1.0 / (1.0 - (*weights_)[exclude_]) : 1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == exclude_) continue;
        f(Point(points_->row(j).transpose()), (*weights_)[j] * scale);
      }
    } else {
      const Scalar w = 1.0 / static_cast<Scalar>(exclude_ >= 0 ? n - 1 : n);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == exclude_) continue;
        f(Point(points_->row(j).transpose()), w);
      }
    }
  }

 private:
  const RowMatrix* points_ = nullptr;
  const Vector* weights_ = nullptr;
  Eigen::Index exclude_ = -1;
  const GridDensity* grid_ = nullptr;
};

/// The measures a cost or drift may depend on: one per population, with
/// `own()` the population of the agent being evaluated.
class Coupling {
 public:
  Coupling() = default;
  Coupling(const MeasureView& single)  // NOLINT(google-explicit-constructor)
      : count_(1) {
    views_[0] = single;
  }
  Coupling(std::span<const MeasureView> views, std::size_t self);

  std::size_t size() const { return count_; }
  std::size_t self() const { return self_; }
  const MeasureView& own() const { return views_[self_]; }
  const MeasureView& population(std::size_t p) const { return views_[p]; }
  /// The same measures seen from population p.
  Coupling as_seen_by(std::size_t p) const {
    Coupling c = *this;
    c.self_ = p;
    return c;
  }
  void replace(std::size_t p, const MeasureView& v) { views_[p] = v; }

 private:
  std::array<MeasureView, kMaxPopulations> views_{};
  std::size_t count_ = 0;
  std::size_t self_ = 0;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

namespace detail {
std::string describe_point(const Point& x);
template <class R>
bool all_finite(const R& r) {
  if constexpr (std::is_arithmetic_v<R>) {
    return std::isfinite(r);
  } else {
    return r.allFinite();
  }
}
}  // namespace detail

/// Integral of K against m: a weighted sum for particles, midpoint
/// quadrature for grid densities. K may return a scalar or an Eigen vector.
template <class K>
auto kernel_integral(const MeasureView& m, K&& kernel) {
  using R = std::decay_t<std::invoke_result_t<K&, const Point&>>;
  if constexpr (std::is_arithmetic_v<R>) {
    Scalar acc = 0.0;
    m.for_each_atom([&](const Point& y, Scalar w) {
      const Scalar k = kernel(y);
      if (!std::isfinite(k)) fail(ErrorKind::numerical, "kernel_integral: non-finite kernel value at " + detail::describe_point(y));
      acc += w * k;
    });
    return acc;
  } else {
    using Acc = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
    Acc acc;
    bool first = true;
    m.for_each_atom([&](const Point& y, Scalar w) {
      const auto k = kernel(y);
      if (!k.allFinite()) fail(ErrorKind::numerical, "kernel_integral: non-finite kernel value at " + detail::describe_point(y));
      if (first) {
        acc = w * k;
        first = false;
      } else {
        acc += w * k;
      }
    });
    return acc;
  }
}

/// Exact p-Wasserstein distance (p in {1, 2}) between one-dimensional
/// measures through the quantile coupling. Grid densities are treated as
/// piecewise-constant densities and renormalized to unit mass.
Scalar wasserstein_1d(const MeasureView& mu, const MeasureView& nu, int p);

/// Exact p-Wasserstein distance between two uniform empirical measures of the
/// same size N <= 10, by enumerating all N! assignments.
Scalar wasserstein_small_nd(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int p);

struct Moments {
  Point mean;
  Point variance;  ///< empty when only the first order was requested
};

Moments moments(const MeasureView& m, int order = 2);

/// Pointwise density. Grids: multilinear interpolation of cell values (zero
/// outside the bounding box, bandwidth ignored). Particles: Gaussian kernel
/// density estimate with the given bandwidth.
Scalar density_at(const MeasureView& m, const Point& x, Scalar bandwidth);

/// Exact spatial gradient of `density_at` (piecewise for grids).
Point density_gradient(const MeasureView& m, const Point& x, Scalar bandwidth);

/// 1.06 * stdev * N^(-1/5), stdev averaged over axes.
Scalar silverman_bandwidth(const MeasureView& m);

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Decimal rendering with 17 significant digits (round-trips doubles).
std::string format_number(Scalar x);

/// Rows `pop,idx,x0,...,x{d-1},weight`.
void write_empirical_csv(std::ostream& os, std::span<const EmpiricalMeasure> pops, bool header = true);
/// Rows `pop,i[,j],mid0[,mid1],value`.
void write_grid_csv(std::ostream& os, std::span<const GridDensity> pops, bool header = true);

/// Parses what write_empirical_csv produced, one measure per population.
std::vector<EmpiricalMeasure> read_empirical_csv(std::istream& is);
/// Parses what write_grid_csv produced onto the given grid.
std::vector<GridDensity> read_grid_csv(std::istream& is, const Grid& grid);

}  // namespace brsmfg
