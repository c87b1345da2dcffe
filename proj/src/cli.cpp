#include "brsmfg/cli.hpp"

#include "brsmfg/applications.hpp"
#include "brsmfg/brs.hpp"
#include "brsmfg/fokker_planck.hpp"
#include "brsmfg/mfg.hpp"
#include "brsmfg/particle_sim.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace brsmfg {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- RunConfig

const std::map<std::string, std::string>& RunConfig::defaults() {
  static const std::map<std::string, std::string> table = {
      {"run.workers", "1"},
      {"model.preset", "lq"},
      {"lq.q", "preset"},
      {"lq.g_weight", "preset"},
      {"lq.alpha", "preset"},
      {"lq.alpha_slope", "preset"},
      {"lq.sigma", "preset"},
      {"lq.horizon", "preset"},
      {"lq.coupling", "preset"},
      {"lq.kappa", "preset"},
      {"lq.m0_mean", "preset"},
      {"lq.m0_var", "preset"},
      {"sim.dt", "0.01"},
      {"sim.t0", "0"},
      {"sim.t_final", "auto"},
      {"sim.n_particles", "1000"},
      {"sim.seed", "0"},
      {"sim.record_every", "10"},
      {"sim.coupling", "leave_one_out"},
      {"sim.snapshots", "moments"},
      {"sim.control", "brs"},
      {"sim.reference", "none"},
      {"mpc.dt", "auto"},
      {"mpc.use_alpha_dot", "true"},
      {"grid.min", "-6"},
      {"grid.max", "6"},
      {"grid.cells", "400"},
      {"fpk.cfl_safety", "0.9"},
      {"fpk.boundary", "no_flux"},
      {"fpk.record_every", "10"},
      {"fpk.t_final", "auto"},
      {"mfg.n_t", "100"},
      {"picard.max_iters", "50"},
      {"picard.theta", "0.5"},
      {"picard.tol", "1e-4"},
      {"chaos.n_list", "250,1000,4000"},
      {"chaos.seeds", "20"},
      {"chaos.seed_base", "1"},
      {"mpc_order.dt_list", "0.1,0.05,0.025,0.0125"},
      {"wealth.mode", "grid"},
      {"wealth.kappa", "0.05"},
      {"wealth.psi", "gaussian"},
      {"wealth.psi_width", "0.5"},
      {"wealth.phi", "quadratic"},
      {"wealth.xi", "identity"},
      {"wealth.v_const", "0"},
      {"wealth.v_rate", "0.5"},
      {"wealth.z_min", "1e-6"},
      {"wealth.horizon", "1"},
      {"wealth.m0_y_mean", "0"},
      {"wealth.m0_y_std", "0.5"},
      {"wealth.m0_z_mean", "1"},
      {"wealth.m0_z_std", "0.25"},
      {"wealth.y_min", "-2"},
      {"wealth.y_max", "2"},
      {"wealth.y_cells", "32"},
      {"wealth.z_max", "2.5"},
      {"wealth.z_cells", "32"},
      {"crowd.mode", "grid"},
      {"crowd.lambda", "1"},
      {"crowd.sigma_x", "0.3"},
      {"crowd.sigma_y", "0.3"},
      {"crowd.target_weight", "1"},
      {"crowd.target_1_x", "2"},
      {"crowd.target_1_y", "0"},
      {"crowd.target_2_x", "-2"},
      {"crowd.target_2_y", "0"},
      {"crowd.m0_1_x", "-1"},
      {"crowd.m0_1_y", "0"},
      {"crowd.m0_2_x", "1"},
      {"crowd.m0_2_y", "0"},
      {"crowd.m0_std", "0.4"},
      {"crowd.kde_bandwidth", "0"},
      {"crowd.horizon", "1"},
      {"crowd.x_min", "-4"},
      {"crowd.x_max", "4"},
      {"crowd.x_cells", "48"},
      {"crowd.y_min", "-3"},
      {"crowd.y_max", "3"},
      {"crowd.y_cells", "36"},
  };
  return table;
}

RunConfig::RunConfig() : values_(defaults()) {}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!values_.count(key)) fail(ErrorKind::config, "unknown config key '" + key + "'");
  values_[key] = value;
  explicit_[key] = true;
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) fail(ErrorKind::config, "expected KEY=VALUE, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.find('=') == std::string::npos) fail(ErrorKind::config, origin + ":" + std::to_string(lineno) + ": expected key = value");
    set(line);
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path);
}

const std::string& RunConfig::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorKind::config, "unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::number(const std::string& key) const {
  const std::string& s = raw(key);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail(ErrorKind::config, "config key '" + key + "' expects a number, got '" + s + "'");
  return v;
}

long long RunConfig::integer(const std::string& key) const {
  const std::string& s = raw(key);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail(ErrorKind::config, "config key '" + key + "' expects an integer, got '" + s + "'");
  return v;
}

bool RunConfig::boolean(const std::string& key) const {
  const std::string& s = raw(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  fail(ErrorKind::config, "config key '" + key + "' expects true or false, got '" + s + "'");
}

std::vector<double> RunConfig::numbers(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(raw(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size())
      fail(ErrorKind::config, "config key '" + key + "' expects a comma-separated list of numbers");
    out.push_back(v);
  }
  if (out.empty()) fail(ErrorKind::config, "config key '" + key + "' is empty");
  return out;
}

// ------------------------------------------------------------------ runner

namespace {

/// The resolved configuration plus the output directory of one run.
struct Run {
  RunConfig cfg;
  std::string subcommand;
  fs::path out;
  int workers = 1;
  std::map<std::string, std::string> report;  // ordered key=value lines

  void put(const std::string& key, Scalar v) { report[key] = format_number(v); }
  void put(const std::string& key, const std::string& v) { report[key] = v; }

  std::ofstream open(const std::string& name) const {
    std::ofstream f(out / name, std::ios::binary);
    if (!f) fail(ErrorKind::config, "cannot write '" + (out / name).string() + "'");
    return f;
  }
};

int positive_int(const RunConfig& c, const std::string& key) {
  const long long v = c.integer(key);
  if (v < 1 || v > 1'000'000'000) fail(ErrorKind::config, "config key '" + key + "' must be a positive integer");
  return static_cast<int>(v);
}

// ---- model construction

LqParams resolve_lq(Run& run) {
  const std::string preset = run.cfg.text("model.preset");
  LqParams p;
  if (preset == "lq") {
    p = lq_preset();
  } else if (preset == "ou") {
    p = ou_preset();
  } else if (preset == "mean_coupling") {
    p = mean_coupling_preset();
  } else if (preset == "interaction") {
    p = lq_preset();
    p.coupling = LqCoupling::interaction;
    p.g_weight = 0.0;
  } else {
    fail(ErrorKind::config, "config key 'model.preset' must be lq, ou, mean_coupling or interaction");
  }
  auto num = [&](const std::string& key, Scalar& field) {
    if (run.cfg.explicitly_set(key) && run.cfg.text(key) != "preset") {
      field = run.cfg.number(key);
    }
    run.cfg.set(key, format_number(field));
  };
  num("lq.q", p.q);
  num("lq.g_weight", p.g_weight);
  num("lq.alpha", p.alpha);
  num("lq.alpha_slope", p.alpha_slope);
  num("lq.sigma", p.sigma);
  num("lq.horizon", p.horizon);
  num("lq.kappa", p.kappa);
  num("lq.m0_mean", p.m0_mean);
  num("lq.m0_var", p.m0_var);
  const std::string& coupling = run.cfg.text("lq.coupling");
  if (run.cfg.explicitly_set("lq.coupling") && coupling != "preset") {
    if (coupling == "none") {
      p.coupling = LqCoupling::none;
    } else if (coupling == "mean") {
      p.coupling = LqCoupling::mean;
    } else if (coupling == "interaction") {
      p.coupling = LqCoupling::interaction;
    } else {
      fail(ErrorKind::config, "config key 'lq.coupling' must be none, mean or interaction");
    }
  }
  run.cfg.set("lq.coupling", p.coupling == LqCoupling::none ? "none" : p.coupling == LqCoupling::mean ? "mean" : "interaction");
  return p;
}

Grid grid_1d(const RunConfig& c) {
  const Scalar lo = c.number("grid.min"), hi = c.number("grid.max");
  if (!(hi > lo)) fail(ErrorKind::config, "grid.max must exceed grid.min");
  const int cells = positive_int(c, "grid.cells");
  if (cells < 8) fail(ErrorKind::config, "grid.cells must be at least 8");
  return Grid(lo, hi, cells);
}

Boundary parse_boundary(const RunConfig& c) {
  const std::string& b = c.text("fpk.boundary");
  if (b == "no_flux") return Boundary::no_flux;
  if (b == "absorbing") return Boundary::absorbing;
  fail(ErrorKind::config, "config key 'fpk.boundary' must be no_flux or absorbing");
}

Scalar resolve_time(Run& run, const std::string& key, Scalar fallback) {
  if (run.cfg.text(key) == "auto") run.cfg.set(key, format_number(fallback));
  return run.cfg.number(key);
}

FpkConfig fpk_config(Run& run, Scalar horizon) {
  FpkConfig f;
  f.cfl_safety = run.cfg.number("fpk.cfl_safety");
  f.set_boundary(parse_boundary(run.cfg));
  f.t0 = 0.0;
  f.t_final = resolve_time(run, "fpk.t_final", horizon);
  f.record_every = positive_int(run.cfg, "fpk.record_every");
  f.workers = run.workers;
  return f;
}

SimConfig sim_config(Run& run, Scalar horizon) {
  SimConfig s;
  s.dt = run.cfg.number("sim.dt");
  s.t0 = run.cfg.number("sim.t0");
  s.t_final = resolve_time(run, "sim.t_final", horizon);
  const long long n = run.cfg.integer("sim.n_particles");
  if (n < 2) fail(ErrorKind::config, "config key 'sim.n_particles' must be at least 2");
  s.n_particles = n;
  const long long seed = run.cfg.integer("sim.seed");
  if (seed < 0) fail(ErrorKind::config, "config key 'sim.seed' must be nonnegative");
  s.seed = static_cast<std::uint64_t>(seed);
  s.record_every = positive_int(run.cfg, "sim.record_every");
  const std::string& coupling = run.cfg.text("sim.coupling");
  if (coupling == "leave_one_out") {
    s.coupling = CouplingMode::leave_one_out;
  } else if (coupling == "full_empirical") {
    s.coupling = CouplingMode::full_empirical;
  } else {
    fail(ErrorKind::config, "config key 'sim.coupling' must be leave_one_out or full_empirical");
  }
  const std::string& snaps = run.cfg.text("sim.snapshots");
  if (snaps == "full") {
    s.snapshots = SnapshotMode::full;
  } else if (snaps == "moments") {
    s.snapshots = SnapshotMode::moments;
  } else if (snaps == "none") {
    s.snapshots = SnapshotMode::none;
  } else {
    fail(ErrorKind::config, "config key 'sim.snapshots' must be full, moments or none");
  }
  s.workers = run.workers;
  return s;
}

MpcConfig mpc_config(Run& run, const SimConfig& sim) {
  MpcConfig m;
  if (run.cfg.text("mpc.dt") == "auto") run.cfg.set("mpc.dt", format_number(sim.dt));
  m.dt = run.cfg.number("mpc.dt");
  m.use_alpha_dot = run.cfg.boolean("mpc.use_alpha_dot");
  return m;
}

PicardConfig picard_config(Run& run, Scalar horizon) {
  PicardConfig p;
  p.max_iters = positive_int(run.cfg, "picard.max_iters");
  p.theta = run.cfg.number("picard.theta");
  p.tol = run.cfg.number("picard.tol");
  p.fpk = fpk_config(run, horizon);
  p.validate();
  return p;
}

// ---- report helpers

void report_density(Run& run, const DensityPath& path, const std::string& prefix = "") {
  const std::size_t pops = path.final().fields.size();
  Scalar min_value = std::numeric_limits<Scalar>::infinity();
  for (std::size_t p = 0; p < pops; ++p) {
    Scalar drift = 0.0;
    for (const auto& s : path.snapshots) {
      drift = std::max(drift, std::abs(s.fields[p].mass() - 1.0));
      min_value = std::min(min_value, s.fields[p].min_value());
    }
    const std::string pp = prefix + "pop" + std::to_string(p) + ".";
    const GridDensity& m = path.final().fields[p];
    run.put(pp + "final_mass", m.mass());
    run.put(pp + "max_mass_drift", drift);
    const Moments mo = moments(m, 2);
    for (int k = 0; k < m.grid().dims(); ++k) {
      run.put(pp + "final_mean" + std::to_string(k), mo.mean[k]);
      run.put(pp + "final_variance" + std::to_string(k), mo.variance[k]);
    }
  }
  run.put(prefix + "min_density", min_value);
  run.put(prefix + "steps", static_cast<Scalar>(path.steps));
  run.put(prefix + "max_boundary_mass", path.max_boundary_mass);
  run.put(prefix + "boundary_mass_flag", path.max_boundary_mass > 1e-8 ? "exceeds_1e-8" : "ok");
}

void report_particles(Run& run, const TrajectoryRecord& rec) {
  const EnsembleState& s = rec.final_state;
  for (std::size_t p = 0; p < s.population_count(); ++p) {
    const Moments mo = moments(MeasureView::particles(s.positions[p]), 2);
    const std::string pp = "pop" + std::to_string(p) + ".";
    for (int k = 0; k < s.dim(); ++k) {
      run.put(pp + "final_mean" + std::to_string(k), mo.mean[k]);
      run.put(pp + "final_variance" + std::to_string(k), mo.variance[k]);
      run.put(pp + "final_min" + std::to_string(k), s.positions[p].col(k).minCoeff());
    }
  }
  run.put("particles", static_cast<Scalar>(s.size(0)));
  run.put("steps", static_cast<Scalar>(s.step_index));
  for (std::size_t w = 0; w < rec.warnings.size(); ++w) run.put("warning" + std::to_string(w), rec.warnings[w]);
}

void write_particle_outputs(const Run& run, const TrajectoryRecord& rec) {
  {
    auto f = run.open("metrics.csv");
    write_metrics_csv(f, rec.metrics);
  }
  {
    std::vector<EmpiricalMeasure> pops;
    for (const RowMatrix& x : rec.final_state.positions) pops.emplace_back(x);
    auto f = run.open("final.csv");
    write_empirical_csv(f, pops);
  }
  if (!rec.snapshots.empty() && !rec.snapshots.front().positions.empty()) {
    auto f = run.open("trajectory.csv");
    write_trajectory_csv(f, rec);
  }
}

std::map<std::string, std::string> path_metadata(const Run& run, const ModelSpec& model) {
  return {{"model", model.name()}, {"subcommand", run.subcommand}, {"artifact.version", kArtifactVersion}};
}

// ---- subcommands

int cmd_simulate(Run& run) {
  const ModelSpec model = build_lq_model(resolve_lq(run), run.cfg.text("model.preset"));
  const SimConfig sim = sim_config(run, model.horizon());
  const MpcConfig mpc = mpc_config(run, sim);
  const std::string& control = run.cfg.text("sim.control");
  if (control != "brs" && control != "none") fail(ErrorKind::config, "config key 'sim.control' must be brs or none");
  const std::string& reference = run.cfg.text("sim.reference");
  if (reference != "none" && reference != "fpk") fail(ErrorKind::config, "config key 'sim.reference' must be none or fpk");

  std::optional<DensityPath> ref;
  if (reference == "fpk") {
    Scalar dt = sim.dt;
    const std::int64_t steps = sim.resolve_steps(dt);
    FpkConfig f = fpk_config(run, model.horizon());
    f.t0 = sim.t0;
    f.t_final = sim.t_final;
    for (std::int64_t k = 0; k <= steps; ++k) {
      if (k % sim.record_every == 0 || k == steps) f.record_times.push_back(sim.t0 + static_cast<Scalar>(k) * dt);
    }
    const std::array<GridDensity, 1> m0{model.initial_density(0, grid_1d(run.cfg))};
    ref = solve_fpk(model, m0, f);
  }
  const TrajectoryRecord rec = control == "brs" ? simulate_brs_nplayer(model, sim, mpc, ref ? &*ref : nullptr)
                                                : simulate(model, sim, zero_control(model.dim()), ref ? &*ref : nullptr);
  write_particle_outputs(run, rec);
  report_particles(run, rec);
  for (auto it = rec.metrics.rbegin(); it != rec.metrics.rend(); ++it) {
    if (it->name == "w1.pop0") {
      run.put("final_w1", it->value);
      break;
    }
  }
  return exit_ok;
}

int cmd_fpk(Run& run) {
  const ModelSpec model = build_lq_model(resolve_lq(run), run.cfg.text("model.preset"));
  const Grid grid = grid_1d(run.cfg);
  const FpkConfig f = fpk_config(run, model.horizon());
  const std::array<GridDensity, 1> m0{model.initial_density(0, grid)};
  const DensityPath path = solve_fpk(model, m0, f);
  auto out = run.open("density.csv");
  write_density_path_csv(out, path, path_metadata(run, model));
  report_density(run, path);
  return exit_ok;
}

int cmd_mfg(Run& run) {
  const ModelSpec model = build_lq_model(resolve_lq(run), run.cfg.text("model.preset"));
  const Grid grid = grid_1d(run.cfg);
  const PicardConfig pc = picard_config(run, model.horizon());
  const int n_t = positive_int(run.cfg, "mfg.n_t");
  const MfgSolution sol = solve_mfg_picard(model, model.initial_density(0, grid), grid, n_t, pc);
  {
    auto f = run.open("value.csv");
    write_value_field_csv(f, sol.value);
  }
  {
    auto f = run.open("density.csv");
    write_density_path_csv(f, sol.density, path_metadata(run, model));
  }
  {
    auto f = run.open("iterations.csv");
    write_iteration_log_csv(f, sol.residuals);
  }
  report_density(run, sol.density);
  run.put("converged", sol.converged ? "true" : "false");
  run.put("iterations", static_cast<Scalar>(sol.residuals.size()));
  run.put("final_residual", sol.residuals.back());
  return sol.converged ? exit_ok : exit_not_converged;
}

int cmd_compare(Run& run) {
  const ModelSpec model = build_lq_model(resolve_lq(run), run.cfg.text("model.preset"));
  const Grid grid = grid_1d(run.cfg);
  const PicardConfig pc = picard_config(run, model.horizon());
  const int n_t = positive_int(run.cfg, "mfg.n_t");
  const ComparisonResult cmp = compare_brs_mfg(model, model.initial_density(0, grid), grid, n_t, pc);
  auto f = run.open("comparison.csv");
  f << "t,w1\n";
  for (std::size_t k = 0; k < cmp.times.size(); ++k) f << format_number(cmp.times[k]) << ',' << format_number(cmp.w1[k]) << '\n';
  run.put("max_w1", cmp.max_w1);
  run.put("final_w1", cmp.w1.back());
  run.put("mfg_converged", cmp.mfg.converged ? "true" : "false");
  run.put("mfg_iterations", static_cast<Scalar>(cmp.mfg.residuals.size()));
  return cmp.mfg.converged ? exit_ok : exit_not_converged;
}

int cmd_chaos(Run& run) {
  const ModelSpec model = build_lq_model(resolve_lq(run), run.cfg.text("model.preset"));
  const SimConfig sim = sim_config(run, model.horizon());
  const MpcConfig mpc = mpc_config(run, sim);
  FpkConfig f = fpk_config(run, model.horizon());
  f.t0 = sim.t0;
  f.t_final = sim.t_final;
  f.record_times = {sim.t0, sim.t_final};
  const std::array<GridDensity, 1> m0{model.initial_density(0, grid_1d(run.cfg))};
  const DensityPath ref = solve_fpk(model, m0, f);

  std::vector<Eigen::Index> ns;
  for (double v : run.cfg.numbers("chaos.n_list")) {
    if (v < 2 || v != std::floor(v)) fail(ErrorKind::config, "config key 'chaos.n_list' must hold integers >= 2");
    ns.push_back(static_cast<Eigen::Index>(v));
  }
  const int count = positive_int(run.cfg, "chaos.seeds");
  const long long base = run.cfg.integer("chaos.seed_base");
  if (base < 0) fail(ErrorKind::config, "config key 'chaos.seed_base' must be nonnegative");
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < count; ++k) seeds.push_back(static_cast<std::uint64_t>(base + k));

  const std::vector<ChaosRow> rows = propagation_of_chaos_study(model, sim, mpc, ns, ref, seeds);
  auto out = run.open("chaos.csv");
  out << "n,mean_w1,std_w1,std_error\n";
  for (const ChaosRow& r : rows) {
    out << r.n << ',' << format_number(r.mean_w1) << ',' << format_number(r.std_w1) << ',' << format_number(r.std_error) << '\n';
    run.put("mean_w1.n" + std::to_string(r.n), r.mean_w1);
  }
  bool decreasing = true;
  for (std::size_t k = 1; k < rows.size(); ++k) decreasing = decreasing && rows[k].mean_w1 < rows[k - 1].mean_w1;
  run.put("strictly_decreasing", decreasing ? "true" : "false");
  run.put("first_to_last_ratio", rows.front().mean_w1 / rows.back().mean_w1);
  return exit_ok;
}

int cmd_mpc_order(Run& run) {
  const ModelSpec model = build_lq_model(resolve_lq(run), run.cfg.text("model.preset"));
  const Grid grid = grid_1d(run.cfg);
  const ReductionResult res = mpc_reduction_check(model, grid, run.cfg.numbers("mpc_order.dt_list"));
  auto out = run.open("mpc_order.csv");
  out << "dt,error\n";
  for (const ReductionRow& r : res.rows) out << format_number(r.dt) << ',' << format_number(r.error) << '\n';
  run.put("fitted_order", res.order);
  return exit_ok;
}

WealthParams wealth_params(const RunConfig& c) {
  WealthParams p;
  p.kappa = c.number("wealth.kappa");
  const std::string& psi = c.text("wealth.psi");
  if (psi == "gaussian") {
    p.psi = Kernel1d::gaussian(c.number("wealth.psi_width"));
  } else if (psi == "one") {
    p.psi = Kernel1d::constant(1.0);
  } else {
    fail(ErrorKind::config, "config key 'wealth.psi' must be gaussian or one");
  }
  if (c.text("wealth.phi") != "quadratic") fail(ErrorKind::config, "config key 'wealth.phi' must be quadratic");
  p.phi = Kernel1d::quadratic();
  const std::string& xi = c.text("wealth.xi");
  if (xi == "identity") {
    p.xi = Kernel1d::identity();
  } else if (xi == "one") {
    p.xi = Kernel1d::constant(1.0);
  } else {
    fail(ErrorKind::config, "config key 'wealth.xi' must be identity or one");
  }
  const Scalar v0 = c.number("wealth.v_const"), v1 = c.number("wealth.v_rate");
  p.v = [v0, v1](const Point& x) { return v0 - v1 * x[0]; };
  p.z_min = c.number("wealth.z_min");
  p.horizon = c.number("wealth.horizon");
  p.m0_mean = make_point({c.number("wealth.m0_y_mean"), c.number("wealth.m0_z_mean")});
  p.m0_stdev = make_point({c.number("wealth.m0_y_std"), c.number("wealth.m0_z_std")});
  return p;
}

int cmd_wealth(Run& run) {
  const WealthParams params = wealth_params(run.cfg);
  const ModelSpec model = build_wealth_model(params);
  run.put("z_closure", "reflection at z_min (particles), no_flux at z_min (grid)");
  const std::string& mode = run.cfg.text("wealth.mode");
  if (mode == "grid") {
    const Grid grid({{run.cfg.number("wealth.y_min"), run.cfg.number("wealth.y_max"), positive_int(run.cfg, "wealth.y_cells")},
                     {params.z_min, run.cfg.number("wealth.z_max"), positive_int(run.cfg, "wealth.z_cells")}});
    FpkConfig f = fpk_config(run, model.horizon());
    f.boundary[1][0] = Boundary::no_flux;
    const std::array<GridDensity, 1> m0{model.initial_density(0, grid)};
    const DensityPath path = solve_fpk(model, m0, f);
    auto out = run.open("density.csv");
    write_density_path_csv(out, path, path_metadata(run, model));
    report_density(run, path);
    return exit_ok;
  }
  if (mode != "particles") fail(ErrorKind::config, "config key 'wealth.mode' must be grid or particles");
  const SimConfig sim = sim_config(run, model.horizon());
  const TrajectoryRecord rec = simulate_brs_nplayer(model, sim, mpc_config(run, sim));
  write_particle_outputs(run, rec);
  report_particles(run, rec);
  return exit_ok;
}

CrowdParams crowd_params(const RunConfig& c) {
  CrowdParams p;
  p.lambda = c.number("crowd.lambda");
  p.sigma = make_point({c.number("crowd.sigma_x"), c.number("crowd.sigma_y")});
  const Scalar w = c.number("crowd.target_weight");
  p.psi = {quadratic_target(make_point({c.number("crowd.target_1_x"), c.number("crowd.target_1_y")}), w),
           quadratic_target(make_point({c.number("crowd.target_2_x"), c.number("crowd.target_2_y")}), w)};
  p.kde_bandwidth = c.number("crowd.kde_bandwidth");
  p.horizon = c.number("crowd.horizon");
  p.m0_mean = {make_point({c.number("crowd.m0_1_x"), c.number("crowd.m0_1_y")}),
               make_point({c.number("crowd.m0_2_x"), c.number("crowd.m0_2_y")})};
  const Scalar s = c.number("crowd.m0_std");
  p.m0_stdev = {make_point({s, s}), make_point({s, s})};
  return p;
}

int cmd_crowd(Run& run) {
  const ModelSpec model = build_crowd_model(crowd_params(run.cfg));
  const std::string& mode = run.cfg.text("crowd.mode");
  if (mode == "grid") {
    const Grid grid({{run.cfg.number("crowd.x_min"), run.cfg.number("crowd.x_max"), positive_int(run.cfg, "crowd.x_cells")},
                     {run.cfg.number("crowd.y_min"), run.cfg.number("crowd.y_max"), positive_int(run.cfg, "crowd.y_cells")}});
    const FpkConfig f = fpk_config(run, model.horizon());
    const std::array<GridDensity, 2> m0{model.initial_density(0, grid), model.initial_density(1, grid)};
    const DensityPath path = solve_fpk(model, m0, f);
    auto out = run.open("density.csv");
    write_density_path_csv(out, path, path_metadata(run, model));
    report_density(run, path);
    run.put("overlap_initial", overlap(path.snapshots.front().fields[0], path.snapshots.front().fields[1]));
    run.put("overlap_final", overlap(path.final().fields[0], path.final().fields[1]));
    return exit_ok;
  }
  if (mode != "particles") fail(ErrorKind::config, "config key 'crowd.mode' must be grid or particles");
  const SimConfig sim = sim_config(run, model.horizon());
  const TrajectoryRecord rec = simulate_brs_nplayer(model, sim, mpc_config(run, sim));
  write_particle_outputs(run, rec);
  report_particles(run, rec);
  return exit_ok;
}

void write_manifest(const Run& run) {
  auto f = run.open("manifest.txt");
  f << "# artifact.version=" << kArtifactVersion << '\n';
  f << "# subcommand=" << run.subcommand << '\n';
  for (const auto& [k, v] : run.cfg.values()) {
    if (k == "run.workers") continue;  // results do not depend on it
    f << k << '=' << v << '\n';
  }
}

void write_report(const Run& run, int status) {
  auto f = run.open("report.txt");
  f << "subcommand=" << run.subcommand << '\n';
  f << "status=" << status << '\n';
  for (const auto& [k, v] : run.report) f << k << '=' << v << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Best reply strategy and mean-field game experiments"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::vector<std::string> overrides;
  int workers = 0;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "N-player BRS particle simulation"},
      {"fpk", "mean-field BRS Fokker-Planck solve"},
      {"mfg", "MFG forward-backward system by damped Picard iteration"},
      {"compare", "W1 between BRS and MFG densities"},
      {"chaos-study", "propagation of chaos study"},
      {"mpc-order", "O(dt) reduction check of the window HJB"},
      {"wealth", "wealth distribution model"},
      {"crowd", "two-population crowd model"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key=value configuration file");
    sub->add_option("--set", overrides, "KEY=VALUE override (repeatable)")->take_all();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? exit_ok : exit_config;
  }

  Run run;
  run.subcommand = app.get_subcommands().front()->get_name();
  try {
    if (!config_path.empty()) run.cfg.load_file(config_path);
    for (const std::string& s : overrides) run.cfg.set(s);
    if (workers > 0) run.cfg.set("run.workers", std::to_string(workers));
    run.workers = positive_int(run.cfg, "run.workers");
    if (out_dir.empty()) {
      const char* root = std::getenv("BRSMFG_OUT");
      run.out = fs::path(root && *root ? root : "brsmfg_out") / run.subcommand;
    } else {
      run.out = out_dir;
    }
    fs::create_directories(run.out);

    int status = exit_ok;
    if (run.subcommand == "simulate") status = cmd_simulate(run);
    else if (run.subcommand == "fpk") status = cmd_fpk(run);
    else if (run.subcommand == "mfg") status = cmd_mfg(run);
    else if (run.subcommand == "compare") status = cmd_compare(run);
    else if (run.subcommand == "chaos-study") status = cmd_chaos(run);
    else if (run.subcommand == "mpc-order") status = cmd_mpc_order(run);
    else if (run.subcommand == "wealth") status = cmd_wealth(run);
    else if (run.subcommand == "crowd") status = cmd_crowd(run);

    write_manifest(run);
    write_report(run, status);
    if (status == exit_not_converged) err << "warning: Picard iteration did not converge\n";
    out << "wrote " << run.out.string() << '\n';
    return status;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::numerical ? exit_numerical : exit_config;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_config;
  }
}

}  // namespace brsmfg
