#include "nmqi/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "nmqi/bath_oracle.hpp"
#include "nmqi/errors.hpp"
#include "nmqi/shipped_configs.hpp"
#include "nmqi/stochastic.hpp"

namespace nmqi {
namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

Matrix square(int n, const std::vector<double>& re, const std::vector<double>& im) {
  Matrix m = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * n + j;
      m(i, j) = cplx(k < re.size() ? re[k] : 0.0, k < im.size() ? im[k] : 0.0);
    }
  return m;
}

HierarchyRoute resolved_route(const ExperimentConfig& c, const CorrelationKernel& k) {
  const HierarchyRoute r = route_from_string(c.run.route);
  if (r != HierarchyRoute::Auto) return r;
  return k.is_exponential() ? HierarchyRoute::Exponential : HierarchyRoute::Grid;
}

std::vector<std::string> metadata(const ExperimentConfig& c, int index, const std::string& mode) {
  const SystemModel m = build_model(c);
  const CorrelationKernel k = build_kernel(c, index);
  const TimeGrid g = build_grid(c);
  std::vector<std::string> md;
  md.push_back("version: " + version());
  md.push_back("mode: " + mode);
  for (const auto& [key, value] : m.parameters) md.push_back("model." + key + ": " + value);
  md.push_back("kernel: " + k.describe());
  md.push_back("grid: dt=" + fmt(g.dt) + " t_max=" + fmt(g.t_max()) + " steps=" + std::to_string(g.n_steps));
  md.push_back("route: " + to_string(resolved_route(c, k)));
  md.push_back("time unit: 1/omega, the model's frequency unit");
  md.push_back("seed: " + std::to_string(c.run.seed));
  std::istringstream text(to_text(c));
  for (std::string line; std::getline(text, line);)
    if (!line.empty()) md.push_back("config " + line);
  return md;
}

void log_line(const CommandOptions& o, const std::string& s) {
  if (o.log) *o.log << s << '\n';
}

std::vector<double> double_range(const ExperimentConfig& c) {
  std::vector<double> r;
  const int n = c.sweep.points;
  for (int i = 0; i < n; ++i)
    r.push_back(n == 1 ? c.sweep.ratio_min
                       : c.sweep.ratio_min + (c.sweep.ratio_max - c.sweep.ratio_min) * i / (n - 1));
  return r;
}

std::string base_name(const ExperimentConfig& c, const CommandOptions& o, const std::string& fallback) {
  if (!o.out.empty()) return o.out;
  if (!c.run.output.empty()) return c.run.output;
  return fallback;
}

}  // namespace

std::string version() { return std::string("nmqi ") + NMQI_VERSION; }

int kernel_count(const ExperimentConfig& c) {
  return c.kernel.type == "ou" ? static_cast<int>(c.kernel.gamma.size()) : 1;
}

SystemModel build_model(const ExperimentConfig& c) {
  const auto& m = c.model;
  if (m.type == "cascade") return build_cascade(m.omega, m.kappa);
  if (m.type == "interference")
    return build_interference(m.Omega1, m.Omega2, m.mu, m.kappa.at(0),
                              InterferenceConvention{m.omega1, m.omega2, m.delta3});
  if (m.type == "custom") return build_custom(square(m.dim, m.H0_re, m.H0_im), square(m.dim, m.L_re, m.L_im));
  throw Error("unknown model type: " + m.type);
}

CorrelationKernel build_kernel(const ExperimentConfig& c, int index) {
  const auto& k = c.kernel;
  if (k.type == "ou") return CorrelationKernel::ou(k.gamma.at(index));
  if (k.type == "zero") return CorrelationKernel(ExponentialSum{});
  if (k.type == "table") return CorrelationKernel::load_table(k.path);
  if (k.type == "exponential") {
    ExponentialSum s;
    for (std::size_t j = 0; j < k.amp_re.size(); ++j) {
      s.amplitudes.emplace_back(k.amp_re[j], j < k.amp_im.size() ? k.amp_im[j] : 0.0);
      s.rates.emplace_back(k.rate_re.at(j), j < k.rate_im.size() ? k.rate_im[j] : 0.0);
    }
    return CorrelationKernel(s);
  }
  throw Error("unknown kernel type: " + k.type);
}

Vector initial_state(const ExperimentConfig& c) {
  const int n = model_dimension(c);
  Vector psi = Vector::Zero(n);
  if (c.initial.level > 0) {
    if (c.initial.level > n) throw Error("initial.level exceeds the model dimension");
    psi(c.initial.level - 1) = 1.0;
    return psi;
  }
  const auto& a = c.initial.amplitudes;
  if (a.size() != static_cast<std::size_t>(n)) throw Error("initial.amplitudes needs one value per level");
  for (int i = 0; i < n; ++i) psi(i) = a[i];
  const double norm = psi.norm();
  if (!(norm > 0)) throw Error("initial state is zero");
  return psi / norm;
}

TimeGrid build_grid(const ExperimentConfig& c) { return TimeGrid::covering(c.grid.dt, c.grid.t_max); }

HierarchyOptions hierarchy_options(const ExperimentConfig& c) {
  HierarchyOptions h;
  h.route = route_from_string(c.run.route);
  return h;
}

std::string output_path(const ExperimentConfig& c, const std::string& base, int index) {
  if (kernel_count(c) <= 1) return base;
  const std::filesystem::path p(base);
  char g[64];
  std::snprintf(g, sizeof g, "%g", c.kernel.gamma.at(index));
  const std::string name = p.stem().string() + "_gamma" + g + p.extension().string();
  return (p.parent_path() / name).string();
}

DensityTrajectory run_evolve(const ExperimentConfig& c, int index) {
  EvolveOptions eo;
  eo.hierarchy = hierarchy_options(c);
  eo.sample_every = c.run.sample_every;
  return evolve(build_model(c), build_kernel(c, index), pure_state(initial_state(c)), build_grid(c), eo);
}

double observable(const std::string& name, const Matrix& rho) {
  const auto index = [&](char ch) {
    const int i = ch - '0';
    if (i < 1 || i > rho.rows()) throw Error("observable " + name + " is outside the model");
    return i - 1;
  };
  if (name.size() == 2 && name[0] == 'p') return rho(index(name[1]), index(name[1])).real();
  const auto element = [&](std::size_t prefix) { return rho(index(name[prefix]), index(name[prefix + 1])); };
  if (name.rfind("abs_rho", 0) == 0 && name.size() == 9) return std::abs(element(7));
  if (name.rfind("re_rho", 0) == 0 && name.size() == 8) return element(6).real();
  if (name.rfind("im_rho", 0) == 0 && name.size() == 8) return element(6).imag();
  throw Error("unknown observable: " + name);
}

CsvTable trajectory_table(const ExperimentConfig& c, int index, const DensityTrajectory& tr) {
  CsvTable t;
  t.metadata = metadata(c, index, "evolve");
  t.metadata.push_back("min eigenvalue: " + fmt(tr.min_eigenvalue));
  for (const auto& w : tr.warnings) t.metadata.push_back("warning: " + w);
  t.header.push_back("t");
  for (const auto& o : c.run.observables) t.header.push_back(o);
  for (std::size_t i = 0; i < tr.size(); ++i) {
    std::vector<double> row{tr.times[i]};
    for (const auto& o : c.run.observables) row.push_back(observable(o, tr.states[i]));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& c, int index, std::optional<double> delta3) {
  ExperimentConfig point = c;
  point.grid.t_max = c.sweep.settle_time + c.sweep.average_window;
  if (delta3) point.model.delta3 = *delta3;
  std::vector<SweepRow> rows;
  for (double ratio : double_range(c)) {
    point.model.Omega2 = ratio * c.model.Omega1;
    const SteadyState s = trailing_average(run_evolve(point, index), c.sweep.average_window);
    SweepRow r;
    r.ratio = ratio;
    std::copy(s.p, s.p + 4, r.p);
    r.std4 = s.std4;
    r.converged = s.converged;
    rows.push_back(r);
  }
  return rows;
}

CsvTable sweep_table(const ExperimentConfig& c, int index, const std::vector<SweepRow>& rows) {
  CsvTable t;
  // Each point runs to settle_time + average_window, whatever grid.t_max says.
  ExperimentConfig resolved = c;
  resolved.grid.t_max = c.sweep.settle_time + c.sweep.average_window;
  t.metadata = metadata(resolved, index, "sweep");
  t.metadata.push_back("sweep: Omega2 = ratio * Omega1, populations averaged over the last " +
                       fmt(c.sweep.average_window) + " of " + fmt(c.sweep.settle_time + c.sweep.average_window));
  for (const auto& r : rows)
    if (!r.converged) t.metadata.push_back("warning: p4 not settled at ratio " + fmt(r.ratio));
  t.header = {"ratio", "p1", "p2", "p3", "p4", "std_p4", "converged"};
  for (const auto& r : rows)
    t.rows.push_back({r.ratio, r.p[0], r.p[1], r.p[2], r.p[3], r.std4, r.converged ? 1.0 : 0.0});
  return t;
}

CompareResult run_compare(const ExperimentConfig& c, int index) {
  const SystemModel model = build_model(c);
  const CorrelationKernel kernel = build_kernel(c, index);
  const TimeGrid grid = build_grid(c);
  const Vector psi0 = initial_state(c);
  const Matrix rho0 = pure_state(psi0);
  const double tol = c.compare.tolerance;

  CompareResult r;
  r.oracle = c.compare.oracle;
  EvolveOptions eo;
  eo.hierarchy = hierarchy_options(c);
  eo.sample_every = c.run.sample_every;

  DensityTrajectory me, other;
  std::vector<double> bars;
  double certified = grid.t_max();

  if (r.oracle == "lindblad") {
    me = evolve(model, kernel, rho0, grid, eo);
    other = lindblad_for_kernel(model, kernel, rho0, grid, c.run.sample_every);
  } else if (r.oracle == "qsd") {
    ObarTape tape;
    eo.on_step = [&](const Hierarchy& h) {
      if (tape.size() == 0) tape = ObarTape(h);
      tape.record(h);
    };
    me = evolve(model, kernel, rho0, grid, eo);
    const NoiseGenerator noise(kernel, grid, c.run.seed);
    EnsembleOptions so;
    so.trajectories = c.compare.trajectories;
    so.sample_every = c.run.sample_every;
    so.probe_indices = probe_indices(grid, 10);
    const EnsembleResult ens = run_ensemble(model, tape, noise, psi0, so);
    other = ens.mean_rho;
    bars = ens.stderr;
    r.notes.push_back("trajectories: " + std::to_string(ens.count) + " used, " + std::to_string(ens.excluded) +
                      " excluded after overflow");
    if (noise.jitter() > 0) r.notes.push_back("noise covariance jitter: " + fmt(noise.jitter()));
    r.notes.push_back("novikov: max " + fmt(ens.novikov.max_sigma) + " sigma over " +
                      std::to_string(ens.novikov.times.size()) + " probe times (side scale " +
                      fmt(ens.novikov.max_side) + ")");
  } else if (r.oracle == "bath") {
    DiscretizeOptions d;
    d.modes = c.compare.modes;
    d.omega_cutoff = c.compare.omega_cutoff;
    d.sum_rule = sum_rule_from_string(c.compare.sum_rule);
    const BathDiscretization bath = discretize_kernel(kernel, d);
    FullSolveOptions f;
    f.n_max = c.compare.n_max;
    f.sample_every = c.run.sample_every;
    const FullSolveResult full = full_solve(model, bath, psi0, grid, f);
    me = evolve(model, kernel, rho0, grid, eo);
    other = full.reduced;
    certified = full.certified_until;
    const auto& rep = bath.report;
    r.notes.push_back("bath: " + std::to_string(bath.modes.size()) + " modes, omega_c " + fmt(bath.omega_cutoff) +
                      ", sum rule " + to_string(bath.sum_rule));
    r.notes.push_back("reconstruction error: " + fmt(rep.max_error) + " on [0, " + fmt(rep.window_end) + "], " +
                      fmt(rep.gate_error) + " on [" + fmt(rep.gate_start) + ", " + fmt(rep.window_end) + "]");
    r.notes.push_back("sum rule error: " + fmt(rep.sum_rule_error));
    r.notes.push_back("basis size: " + std::to_string(full.basis_size) + ", n_max " + std::to_string(f.n_max));
    double norm_drift = 0.0, exc_drift = 0.0;
    for (std::size_t i = 0; i < full.norm.size(); ++i) {
      norm_drift = std::max(norm_drift, std::abs(full.norm[i] - full.norm[0]));
      exc_drift = std::max(exc_drift, std::abs(full.excitation[i] - full.excitation[0]));
    }
    r.notes.push_back("norm drift: " + fmt(norm_drift) + ", excitation drift: " + fmt(exc_drift));
    r.notes.push_back("certified until t = " + fmt(certified));
    for (const auto& w : full.reduced.warnings) r.notes.push_back("warning: " + w);
  } else {
    throw Error("unknown compare oracle: " + r.oracle);
  }
  for (const auto& w : me.warnings) r.notes.push_back("warning: " + w);

  const std::size_t n = std::min(me.size(), other.size());
  r.pass = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (me.times[i] > certified + 1e-12) break;
    const double bar = i < bars.size() ? bars[i] : 0.0;
    const double thr = std::max(tol, 3.0 * bar);
    const double d = trace_distance(me.states[i], other.states[i]);
    r.times.push_back(me.times[i]);
    r.distance.push_back(d);
    r.error_bar.push_back(bar);
    r.threshold.push_back(thr);
    r.max_distance = std::max(r.max_distance, d);
    if (!(d <= thr)) r.pass = false;
  }
  if (r.times.empty()) r.pass = false;
  return r;
}

CsvTable compare_table(const ExperimentConfig& c, int index, const CompareResult& r) {
  CsvTable t;
  t.metadata = metadata(c, index, "compare");
  t.metadata.push_back("oracle: " + r.oracle);
  for (const auto& n : r.notes) t.metadata.push_back(n);
  t.metadata.push_back("result: " + std::string(r.pass ? "PASS" : "FAIL") + " max trace distance " +
                       fmt(r.max_distance));
  t.header = {"t", "trace_distance", "error_bar", "threshold"};
  for (std::size_t i = 0; i < r.times.size(); ++i)
    t.rows.push_back({r.times[i], r.distance[i], r.error_bar[i], r.threshold[i]});
  return t;
}

std::vector<std::string> cmd_run(ExperimentConfig c, const CommandOptions& o) {
  if (o.seed) c.run.seed = *o.seed;
  validate_config(c);
  const std::string base = base_name(c, o, "evolve.csv");
  std::vector<std::string> files;
  for (int k = 0; k < kernel_count(c); ++k) {
    const std::string path = output_path(c, base, k);
    write_csv(path, trajectory_table(c, k, run_evolve(c, k)));
    log_line(o, "wrote " + path);
    files.push_back(path);
  }
  return files;
}

std::vector<std::string> cmd_sweep(ExperimentConfig c, const CommandOptions& o) {
  if (o.seed) c.run.seed = *o.seed;
  validate_config(c);
  const std::string base = base_name(c, o, "sweep.csv");
  std::vector<std::string> files;
  for (int k = 0; k < kernel_count(c); ++k) {
    const std::string path = output_path(c, base, k);
    write_csv(path, sweep_table(c, k, run_sweep(c, k)));
    log_line(o, "wrote " + path);
    files.push_back(path);
  }
  return files;
}

bool cmd_compare(ExperimentConfig c, const CommandOptions& o, std::vector<std::string>* files) {
  if (o.seed) c.run.seed = *o.seed;
  validate_config(c);
  const std::string base = base_name(c, o, "compare.csv");
  bool all = true;
  for (int k = 0; k < kernel_count(c); ++k) {
    const CompareResult r = run_compare(c, k);
    const std::string path = output_path(c, base, k);
    write_csv(path, compare_table(c, k, r));
    log_line(o, "compare " + r.oracle + " (" + build_kernel(c, k).describe() + "): max trace distance " +
                    fmt(r.max_distance) + " threshold " + fmt(r.threshold.empty() ? 0.0 : r.threshold.front()) +
                    " " + (r.pass ? "PASS" : "FAIL"));
    for (const auto& n : r.notes) log_line(o, "  " + n);
    log_line(o, "wrote " + path);
    if (files) files->push_back(path);
    all = all && r.pass;
  }
  return all;
}

std::string shipped_config(int figure) {
  const std::string name = "fig" + std::to_string(figure);
  for (const auto& [n, text] : shipped::kConfigs)
    if (n == name) return std::string(text);
  throw Error("no shipped config for figure " + std::to_string(figure));
}

std::vector<int> shipped_figures() {
  std::vector<int> f;
  for (const auto& entry : shipped::kConfigs) f.push_back(std::stoi(std::string(entry.first.substr(3))));
  return f;
}

std::vector<std::string> cmd_figure(int figure, const CommandOptions& o) {
  ExperimentConfig c = parse_config(shipped_config(figure));
  CommandOptions inner = o;
  const std::string dir = o.out.empty() ? "." : o.out;
  std::filesystem::create_directories(dir);
  inner.out = (std::filesystem::path(dir) / c.run.output).string();
  if (c.run.mode == "sweep") return cmd_sweep(c, inner);
  if (c.run.mode == "compare") {
    std::vector<std::string> files;
    cmd_compare(c, inner, &files);
    return files;
  }
  return cmd_run(c, inner);
}

}  // namespace nmqi
