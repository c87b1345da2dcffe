#include "brsmfg/model.hpp"

#include <algorithm>
#include <cmath>

namespace brsmfg {

ModelSpec::ModelSpec(int dim, Scalar horizon, std::vector<PopulationModel> populations, std::string name)
    : dim_(dim), horizon_(horizon), pops_(std::move(populations)), name_(std::move(name)) {
  if (dim_ < 1 || dim_ > kMaxDim) fail(ErrorKind::config, "model: dimension must be in [1, " + std::to_string(kMaxDim) + "]");
  if (!(horizon_ > 0.0)) fail(ErrorKind::config, "model: horizon T must be positive");
  if (pops_.empty() || pops_.size() > kMaxPopulations) fail(ErrorKind::config, "model: population count out of range");
  for (std::size_t p = 0; p < pops_.size(); ++p) {
    PopulationModel& pm = pops_[p];
    if (!pm.drift.value || !pm.running_cost.value || !pm.running_cost.gradient || !pm.terminal_cost.value ||
        !pm.terminal_cost.gradient || !pm.penalty.alpha || !pm.penalty.alpha_dot || !pm.diffusion.value) {
      fail(ErrorKind::config, "model: population " + std::to_string(p) + " has a missing ingredient");
    }
    if (pm.control_mask.size() == 0) pm.control_mask = Point::Ones(dim_);
    if (pm.control_mask.size() != dim_) fail(ErrorKind::config, "model: control mask has wrong dimension");
    for (const StateFloor& f : pm.floors) {
      if (f.axis < 0 || f.axis >= dim_) fail(ErrorKind::config, "model: state floor axis out of range");
    }
    check_penalty(p);
  }
}

GridDensity ModelSpec::initial_density(std::size_t p, const Grid& grid) const {
  const InitialLaw& law = population(p).initial_law;
  if (!law.project) fail(ErrorKind::config, "model: population has no grid projection for its initial law");
  if (grid.dims() != dim_) fail(ErrorKind::domain, "model: grid dimension differs from state dimension");
  GridDensity m0 = law.project(grid);
  if (std::abs(m0.mass() - 1.0) > 1e-10) {
    fail(ErrorKind::numerical, "model: initial law projects to mass " + format_number(m0.mass()) + ", expected 1");
  }
  return m0;
}

void ModelSpec::check_penalty(std::size_t p, int samples) const {
  const ControlPenalty& pen = population(p).penalty;
  constexpr Scalar eps = 1e-6;
  constexpr Scalar tol = 1e-4;
  for (int k = 0; k < samples; ++k) {
    const Scalar t = horizon_ * k / (samples - 1);
    const Scalar a = pen.alpha(t);
    if (!(a > 0.0)) fail(ErrorKind::config, "model: alpha(" + format_number(t) + ") is not positive");
    const Scalar fd = (pen.alpha(t + eps) - pen.alpha(t - eps)) / (2.0 * eps);
    const Scalar ad = pen.alpha_dot(t);
    if (std::abs(fd - ad) > tol * (1.0 + std::abs(ad))) {
      fail(ErrorKind::config, "model: alpha_dot inconsistent with alpha at t=" + format_number(t));
    }
  }
}

Point surrogate_gradient(const ModelSpec& model, std::size_t pop, const Point& x, const Coupling& m) {
  const PopulationModel& pm = model.population(pop);
  const Point gh = pm.running_cost.gradient(x, m);
  if (!gh.allFinite()) fail(ErrorKind::numerical, "non-finite running-cost gradient at " + detail::describe_point(x));
  const Point gg = pm.terminal_cost.gradient(x, m);
  if (!gg.allFinite()) fail(ErrorKind::numerical, "non-finite terminal-cost gradient at " + detail::describe_point(x));
  return (gh + gg / model.horizon()).cwiseProduct(pm.control_mask);
}

Point brs_drift(const ModelSpec& model, std::size_t pop, Scalar t, const Point& x, const Coupling& m) {
  const PopulationModel& pm = model.population(pop);
  const Point f = pm.drift.value(x, m);
  if (!f.allFinite()) fail(ErrorKind::numerical, "non-finite drift f at " + detail::describe_point(x));
  const Scalar a = pm.penalty.alpha(t);
  if (!std::isfinite(a) || a <= 0.0) fail(ErrorKind::numerical, "invalid penalty alpha at t=" + format_number(t));
  return f - surrogate_gradient(model, pop, x, m) / a;
}

// ------------------------------------------------------------ Assumptions

bool AssumptionReport::any_flagged() const {
  return std::any_of(quotients.begin(), quotients.end(), [](const LipschitzQuotient& q) { return q.flagged; });
}

const LipschitzQuotient& AssumptionReport::get(const std::string& name, std::size_t pop) const {
  for (const auto& q : quotients) {
    if (q.name == name && q.pop == pop) return q;
  }
  fail(ErrorKind::domain, "assumption report has no quotient '" + name + "'");
}

namespace {

class QuotientTracker {
 public:
  void add(Scalar num, Scalar den) {
    if (!(den > 0.0)) return;
    best_ = std::max(best_, num / den);
    ++used_;
  }
  LipschitzQuotient finish(std::size_t pop, std::string name, Scalar cap) const {
    if (used_ == 0) fail(ErrorKind::domain, "validate_assumptions: all sample pairs for " + name + " are degenerate");
    return {pop, std::move(name), best_, used_, best_ > cap};
  }

 private:
  Scalar best_ = 0.0;
  int used_ = 0;
};

}  // namespace

AssumptionReport validate_assumptions(const ModelSpec& model, int sample_count, std::uint64_t seed, const AssumptionOptions& opt) {
  if (sample_count < 2) fail(ErrorKind::domain, "validate_assumptions: sample_count must be at least 2");
  if (opt.atoms < 1 || opt.atoms > 10) fail(ErrorKind::domain, "validate_assumptions: atoms must be in [1, 10]");
  Rng rng(seed);
  std::normal_distribution<Scalar> normal;
  std::uniform_real_distribution<Scalar> unit;
  const int d = model.dim();
  const std::size_t pops = model.population_count();

  auto jitter = [&](Point x, Scalar scale) {
    for (int k = 0; k < d; ++k) x[k] += scale * normal(rng);
    return x;
  };
  auto sample_state = [&](std::size_t p) {
    const RowMatrix one = model.population(p).initial_law.sample(rng, 1);
    return jitter(Point(one.row(0).transpose()), opt.spread);
  };
  auto sample_measure = [&](std::size_t p) { return EmpiricalMeasure(model.population(p).initial_law.sample(rng, opt.atoms)); };

  AssumptionReport report;
  for (std::size_t p = 0; p < pops; ++p) {
    const PopulationModel& pm = model.population(p);
    QuotientTracker f_x, f_w, h_x, h_w, g_x, g_w, s_t, s_x;
    for (int s = 0; s < sample_count; ++s) {
      std::vector<EmpiricalMeasure> base;
      for (std::size_t q = 0; q < pops; ++q) base.push_back(sample_measure(q));
      std::vector<MeasureView> views(base.begin(), base.end());
      const Coupling m1(views, p);

      // Perturbed own-population measure for the W1 direction.
      RowMatrix moved = base[p].points();
      for (Eigen::Index i = 0; i < moved.rows(); ++i) {
        for (int k = 0; k < d; ++k) moved(i, k) += 0.5 * opt.spread * normal(rng);
      }
      const EmpiricalMeasure perturbed(std::move(moved));
      Coupling m2 = m1;
      m2.replace(p, perturbed);
      const Scalar w1 = wasserstein_small_nd(base[p], perturbed, 1);

      const Point x1 = sample_state(p);
      const Point x2 = sample_state(p);
      const Scalar dx = (x1 - x2).norm();

      f_x.add((pm.drift.value(x1, m1) - pm.drift.value(x2, m1)).norm(), dx);
      h_x.add((pm.running_cost.gradient(x1, m1) - pm.running_cost.gradient(x2, m1)).norm(), dx);
      g_x.add((pm.terminal_cost.gradient(x1, m1) - pm.terminal_cost.gradient(x2, m1)).norm(), dx);
      f_w.add((pm.drift.value(x1, m1) - pm.drift.value(x1, m2)).norm(), w1);
      h_w.add((pm.running_cost.gradient(x1, m1) - pm.running_cost.gradient(x1, m2)).norm(), w1);
      g_w.add((pm.terminal_cost.gradient(x1, m1) - pm.terminal_cost.gradient(x1, m2)).norm(), w1);

      const Scalar t1 = model.horizon() * unit(rng);
      const Scalar t2 = model.horizon() * unit(rng);
      s_t.add((pm.diffusion.value(t1, x1) - pm.diffusion.value(t2, x1)).norm(), std::abs(t1 - t2));
      s_x.add((pm.diffusion.value(t1, x1) - pm.diffusion.value(t1, x2)).norm(), dx);
    }
    report.quotients.push_back(f_x.finish(p, "f.x", opt.cap));
    report.quotients.push_back(f_w.finish(p, "f.W1", opt.cap));
    report.quotients.push_back(h_x.finish(p, "grad_h.x", opt.cap));
    report.quotients.push_back(h_w.finish(p, "grad_h.W1", opt.cap));
    report.quotients.push_back(g_x.finish(p, "grad_g.x", opt.cap));
    report.quotients.push_back(g_w.finish(p, "grad_g.W1", opt.cap));
    report.quotients.push_back(s_t.finish(p, "sigma.t", opt.cap));
    report.quotients.push_back(s_x.finish(p, "sigma.x", opt.cap));
  }
  return report;
}

}  // namespace brsmfg
