#include "nmqi/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "nmqi/errors.hpp"

namespace nmqi {

ConfigError::ConfigError(std::vector<Diagnostic> diagnostics)
    : Error([&] {
        std::ostringstream os;
        for (std::size_t i = 0; i < diagnostics.size(); ++i) {
          if (i) os << "\n";
          if (diagnostics[i].line > 0) os << "line " << diagnostics[i].line << ": ";
          os << diagnostics[i].message;
        }
        return os.str();
      }()),
      diagnostics_(std::move(diagnostics)) {}

namespace {

using Lines = std::map<std::string, int>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw std::invalid_argument("'" + s + "' is not a number");
  return v;
}

long long to_integer(const std::string& s) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("'" + s + "' is not an integer");
  return v;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw std::invalid_argument("empty list element");
    out.push_back(item);
  }
  return out;
}

std::vector<double> to_doubles(const std::string& s) {
  std::vector<double> v;
  for (const auto& x : split(s)) v.push_back(to_double(x));
  return v;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
  return s;
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Field real(const char* sec, const char* key, T ExperimentConfig::*s, double T::*f) {
  return {sec, key, [=](ExperimentConfig& c, const std::string& v) { (c.*s).*f = to_double(v); },
          [=](const ExperimentConfig& c) { return fmt((c.*s).*f); }};
}

template <class T>
Field integer(const char* sec, const char* key, T ExperimentConfig::*s, int T::*f) {
  return {sec, key,
          [=](ExperimentConfig& c, const std::string& v) {
            const long long x = to_integer(v);
            if (x < -2147483647LL || x > 2147483647LL) throw std::invalid_argument("integer out of range");
            (c.*s).*f = static_cast<int>(x);
          },
          [=](const ExperimentConfig& c) { return std::to_string((c.*s).*f); }};
}

template <class T>
Field text(const char* sec, const char* key, T ExperimentConfig::*s, std::string T::*f) {
  return {sec, key, [=](ExperimentConfig& c, const std::string& v) { (c.*s).*f = v; },
          [=](const ExperimentConfig& c) { return (c.*s).*f; }};
}

template <class T>
Field reals(const char* sec, const char* key, T ExperimentConfig::*s, std::vector<double> T::*f) {
  return {sec, key, [=](ExperimentConfig& c, const std::string& v) { (c.*s).*f = to_doubles(v); },
          [=](const ExperimentConfig& c) { return join((c.*s).*f); }};
}

using C = ExperimentConfig;

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      text("model", "type", &C::model, &C::Model::type),
      reals("model", "omega", &C::model, &C::Model::omega),
      reals("model", "kappa", &C::model, &C::Model::kappa),
      real("model", "Omega1", &C::model, &C::Model::Omega1),
      real("model", "Omega2", &C::model, &C::Model::Omega2),
      real("model", "mu", &C::model, &C::Model::mu),
      real("model", "omega1", &C::model, &C::Model::omega1),
      real("model", "omega2", &C::model, &C::Model::omega2),
      real("model", "delta3", &C::model, &C::Model::delta3),
      integer("model", "dim", &C::model, &C::Model::dim),
      reals("model", "H0_re", &C::model, &C::Model::H0_re),
      reals("model", "H0_im", &C::model, &C::Model::H0_im),
      reals("model", "L_re", &C::model, &C::Model::L_re),
      reals("model", "L_im", &C::model, &C::Model::L_im),
      text("kernel", "type", &C::kernel, &C::Kernel::type),
      reals("kernel", "gamma", &C::kernel, &C::Kernel::gamma),
      reals("kernel", "amp_re", &C::kernel, &C::Kernel::amp_re),
      reals("kernel", "amp_im", &C::kernel, &C::Kernel::amp_im),
      reals("kernel", "rate_re", &C::kernel, &C::Kernel::rate_re),
      reals("kernel", "rate_im", &C::kernel, &C::Kernel::rate_im),
      text("kernel", "path", &C::kernel, &C::Kernel::path),
      real("grid", "dt", &C::grid, &C::Grid::dt),
      real("grid", "t_max", &C::grid, &C::Grid::t_max),
      integer("initial", "level", &C::initial, &C::Initial::level),
      reals("initial", "amplitudes", &C::initial, &C::Initial::amplitudes),
      text("run", "mode", &C::run, &C::Run::mode),
      {"run", "observables", [](C& c, const std::string& v) { c.run.observables = split(v); },
       [](const C& c) { return join(c.run.observables); }},
      text("run", "output", &C::run, &C::Run::output),
      {"run", "seed",
       [](C& c, const std::string& v) {
         std::uint64_t x = 0;
         const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
         if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("'" + v + "' is not a seed");
         c.run.seed = x;
       },
       [](const C& c) { return std::to_string(c.run.seed); }},
      text("run", "route", &C::run, &C::Run::route),
      integer("run", "sample_every", &C::run, &C::Run::sample_every),
      real("sweep", "ratio_min", &C::sweep, &C::Sweep::ratio_min),
      real("sweep", "ratio_max", &C::sweep, &C::Sweep::ratio_max),
      integer("sweep", "points", &C::sweep, &C::Sweep::points),
      real("sweep", "settle_time", &C::sweep, &C::Sweep::settle_time),
      real("sweep", "average_window", &C::sweep, &C::Sweep::average_window),
      text("compare", "oracle", &C::compare, &C::Compare::oracle),
      integer("compare", "trajectories", &C::compare, &C::Compare::trajectories),
      integer("compare", "modes", &C::compare, &C::Compare::modes),
      integer("compare", "n_max", &C::compare, &C::Compare::n_max),
      real("compare", "tolerance", &C::compare, &C::Compare::tolerance),
      text("compare", "sum_rule", &C::compare, &C::Compare::sum_rule),
      real("compare", "omega_cutoff", &C::compare, &C::Compare::omega_cutoff),
  };
  return f;
}

const Field* find_field(const std::string& sec, const std::string& key) {
  for (const Field& f : fields())
    if (sec == f.section && key == f.key) return &f;
  return nullptr;
}

bool known_section(const std::string& s) {
  for (const Field& f : fields())
    if (s == f.section) return true;
  return false;
}

// Range and consistency checks, with the line of the offending key when known.
void check(const ExperimentConfig& c, const Lines& lines) {
  std::vector<Diagnostic> d;
  auto fail = [&](const std::string& key, const std::string& msg) {
    const auto it = lines.find(key);
    d.push_back({it == lines.end() ? 0 : it->second, msg});
  };
  const auto& m = c.model;
  int dim = 0;
  if (m.type == "cascade") {
    dim = static_cast<int>(m.omega.size());
    if (dim < 2 || dim > 16) fail("model.omega", "model.omega must list between 2 and 16 level energies");
    if (m.kappa.size() + 1 != m.omega.size())
      fail("model.kappa", "model.kappa must have one entry fewer than model.omega");
  } else if (m.type == "interference") {
    dim = 4;
    if (m.kappa.size() != 1) fail("model.kappa", "model.kappa must be a single channel ratio for the interference model");
  } else if (m.type == "custom") {
    dim = m.dim;
    if (dim < 2 || dim > 16) fail("model.dim", "model.dim must be in [2, 16]");
    const std::size_t n2 = static_cast<std::size_t>(std::max(dim, 0)) * std::max(dim, 0);
    if (m.H0_re.size() != n2) fail("model.H0_re", "model.H0_re must have dim^2 entries");
    if (!m.H0_im.empty() && m.H0_im.size() != n2) fail("model.H0_im", "model.H0_im must be empty or have dim^2 entries");
    if (m.L_re.size() != n2) fail("model.L_re", "model.L_re must have dim^2 entries");
    if (!m.L_im.empty() && m.L_im.size() != n2) fail("model.L_im", "model.L_im must be empty or have dim^2 entries");
  } else {
    fail("model.type", "model.type must be cascade, interference or custom");
  }

  const auto& k = c.kernel;
  if (k.type == "ou") {
    if (k.gamma.empty()) fail("kernel.gamma", "kernel.gamma must list at least one value");
    for (double g : k.gamma)
      if (!(g > 0)) fail("kernel.gamma", "kernel.gamma must be positive");
  } else if (k.type == "exponential") {
    if (k.amp_re.empty() || k.amp_re.size() != k.rate_re.size())
      fail("kernel.amp_re", "kernel.amp_re and kernel.rate_re must be non-empty and of equal length");
    if (!k.amp_im.empty() && k.amp_im.size() != k.amp_re.size())
      fail("kernel.amp_im", "kernel.amp_im must be empty or match kernel.amp_re");
    if (!k.rate_im.empty() && k.rate_im.size() != k.rate_re.size())
      fail("kernel.rate_im", "kernel.rate_im must be empty or match kernel.rate_re");
    for (double r : k.rate_re)
      if (!(r > 0)) fail("kernel.rate_re", "kernel.rate_re must be positive");
  } else if (k.type == "table") {
    if (k.path.empty()) fail("kernel.path", "kernel.path is required for a table kernel");
  } else if (k.type != "zero") {
    fail("kernel.type", "kernel.type must be ou, exponential, table or zero");
  }

  if (!(c.grid.dt > 0)) fail("grid.dt", "grid.dt must be positive");
  if (!(c.grid.t_max > 0)) fail("grid.t_max", "grid.t_max must be positive");
  if (c.grid.dt > 0 && c.grid.t_max > 0 && c.grid.t_max / c.grid.dt > 1e7)
    fail("grid.dt", "grid.t_max / grid.dt exceeds 1e7 steps");

  const auto& in = c.initial;
  if (in.level != 0 && !in.amplitudes.empty())
    fail("initial.level", "give either initial.level or initial.amplitudes, not both");
  if (in.level == 0 && in.amplitudes.empty()) fail("initial.level", "initial.level or initial.amplitudes is required");
  if (in.level != 0 && dim > 0 && (in.level < 1 || in.level > dim))
    fail("initial.level", "initial.level must be in [1, " + std::to_string(dim) + "]");
  if (!in.amplitudes.empty()) {
    if (dim > 0 && static_cast<int>(in.amplitudes.size()) != dim)
      fail("initial.amplitudes", "initial.amplitudes must have " + std::to_string(dim) + " entries");
    double n2 = 0.0;
    for (double a : in.amplitudes) n2 += a * a;
    if (!(n2 > 0)) fail("initial.amplitudes", "initial.amplitudes must not all be zero");
  }

  const auto& r = c.run;
  if (r.mode != "evolve" && r.mode != "sweep" && r.mode != "compare")
    fail("run.mode", "run.mode must be evolve, sweep or compare");
  if (r.route != "auto" && r.route != "grid" && r.route != "exponential")
    fail("run.route", "run.route must be auto, grid or exponential");
  if (r.sample_every < 1) fail("run.sample_every", "run.sample_every must be at least 1");
  if (r.observables.empty()) fail("run.observables", "run.observables must not be empty");
  for (const auto& o : r.observables) {
    bool ok = false;
    if (o.size() >= 2 && o[0] == 'p') {
      const int lv = std::atoi(o.c_str() + 1);
      ok = o.find_first_not_of("0123456789", 1) == std::string::npos && lv >= 1 && (dim == 0 || lv <= dim);
    }
    for (const char* pre : {"abs_rho", "re_rho", "im_rho"}) {
      const std::string p(pre);
      if (o.rfind(p, 0) == 0 && o.size() == p.size() + 2) {
        const int a = o[p.size()] - '0', b = o[p.size() + 1] - '0';
        ok = a >= 1 && b >= 1 && a <= 9 && b <= 9 && (dim == 0 || (a <= dim && b <= dim));
      }
    }
    if (!ok) fail("run.observables", "run.observables: unknown or out-of-range observable '" + o + "'");
  }

  const auto& s = c.sweep;
  if (!(s.ratio_min > 0)) fail("sweep.ratio_min", "sweep.ratio_min must be positive");
  if (!(s.ratio_max >= s.ratio_min)) fail("sweep.ratio_max", "sweep.ratio_max must not be below sweep.ratio_min");
  if (s.points < 1) fail("sweep.points", "sweep.points must be at least 1");
  if (!(s.settle_time >= 0)) fail("sweep.settle_time", "sweep.settle_time must be non-negative");
  if (!(s.average_window > 0)) fail("sweep.average_window", "sweep.average_window must be positive");
  if (r.mode == "sweep" && m.type != "interference") fail("run.mode", "sweeps need the interference model");

  const auto& cp = c.compare;
  if (cp.oracle != "lindblad" && cp.oracle != "qsd" && cp.oracle != "bath")
    fail("compare.oracle", "compare.oracle must be lindblad, qsd or bath");
  if (cp.trajectories < 2) fail("compare.trajectories", "compare.trajectories must be at least 2");
  if (cp.modes < 2 || cp.modes > 255) fail("compare.modes", "compare.modes must be in [2, 255]");
  if (cp.n_max < 0 || cp.n_max > 7) fail("compare.n_max", "compare.n_max must be in [0, 7]");
  if (!(cp.tolerance > 0)) fail("compare.tolerance", "compare.tolerance must be positive");
  if (cp.sum_rule != "none" && cp.sum_rule != "rescale") fail("compare.sum_rule", "compare.sum_rule must be none or rescale");
  if (!(cp.omega_cutoff >= 0)) fail("compare.omega_cutoff", "compare.omega_cutoff must be non-negative");

  if (!d.empty()) throw ConfigError(std::move(d));
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  Lines lines;
  std::vector<Diagnostic> d;
  std::string section;
  bool section_ok = false;
  std::istringstream in(text);
  std::string raw;
  int no = 0;
  while (std::getline(in, raw)) {
    ++no;
    std::string line = raw;
    if (const auto h = line.find('#'); h != std::string::npos) line = line.substr(0, h);
    line = trim(line);
    if (line.empty() || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        d.push_back({no, "syntax error: section header is missing ']'"});
        section_ok = false;
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      section_ok = known_section(section);
      if (!section_ok) d.push_back({no, "unknown section [" + section + "]"});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      d.push_back({no, "syntax error: expected 'key = value'"});
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      d.push_back({no, "key '" + key + "' appears before any section"});
      continue;
    }
    if (!section_ok) continue;
    const Field* f = find_field(section, key);
    if (!f) {
      d.push_back({no, "unknown key '" + key + "' in section [" + section + "]"});
      continue;
    }
    const std::string full = section + "." + key;
    if (lines.count(full)) {
      d.push_back({no, "duplicate key " + full + " (first set on line " + std::to_string(lines[full]) + ")"});
      continue;
    }
    lines[full] = no;
    try {
      f->set(c, value);
    } catch (const std::exception& e) {
      d.push_back({no, full + ": " + e.what()});
    }
  }
  if (!d.empty()) throw ConfigError(std::move(d));
  check(c, lines);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void validate_config(const ExperimentConfig& c) { check(c, {}); }

std::string to_text(const ExperimentConfig& c) {
  std::string out, section;
  for (const Field& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(c) + "\n";
  }
  return out;
}

int model_dimension(const ExperimentConfig& c) {
  if (c.model.type == "cascade") return static_cast<int>(c.model.omega.size());
  if (c.model.type == "interference") return 4;
  return c.model.dim;
}

}  // namespace nmqi
