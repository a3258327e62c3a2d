#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "nmqi/errors.hpp"
#include "nmqi/experiments.hpp"

using namespace nmqi;
namespace fs = std::filesystem;

namespace {

const char* kCascade = R"([model]
type = cascade
omega = 1, 2, 3, 4
kappa = 1, 1, 1
[kernel]
type = ou
gamma = 2
[grid]
dt = 0.02
t_max = 1
[initial]
amplitudes = 0.5, 0.5, 0.5, 0.5
[run]
observables = p1, p2, p3, p4, abs_rho23, abs_rho14
)";

const char* kInterference = R"([model]
type = interference
Omega1 = 5
Omega2 = 10
mu = 2
kappa = 2
[kernel]
type = ou
gamma = 10
[grid]
dt = 0.01
[initial]
level = 4
[run]
mode = sweep
[sweep]
ratio_min = 2
ratio_max = 2
points = 1
settle_time = 1
average_window = 1
)";

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "nmqi_test_experiments";
  fs::create_directories(d);
  return d / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string without_version(const std::string& text) {
  std::istringstream in(text);
  std::string out;
  for (std::string line; std::getline(in, line);)
    if (line.rfind("# version:", 0) != 0) out += line + "\n";
  return out;
}

struct CliResult {
  int code = -1;
  std::string out, err;
};

CliResult cli(const std::string& args) {
  const fs::path out = scratch("cli_stdout.txt"), err = scratch("cli_stderr.txt");
  const std::string cmd = std::string(NMQI_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = scratch(name);
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("observables read the right matrix elements") {
  Matrix rho(3, 3);
  rho << 0.5, cplx(0.1, 0.2), 0, cplx(0.1, -0.2), 0.3, cplx(0, 0.05), 0, cplx(0, -0.05), 0.2;
  CHECK(observable("p1", rho) == 0.5);
  CHECK(observable("p3", rho) == 0.2);
  CHECK(observable("re_rho12", rho) == 0.1);
  CHECK(observable("im_rho21", rho) == -0.2);
  CHECK(observable("abs_rho12", rho) == doctest::Approx(std::sqrt(0.05)));
  CHECK(observable("im_rho23", rho) == 0.05);
  CHECK_THROWS_AS(observable("p4", rho), Error);
  CHECK_THROWS_AS(observable("abs_rho40", rho), Error);
  CHECK_THROWS_AS(observable("trace", rho), Error);
}

TEST_CASE("output paths carry the kernel when there are several") {
  ExperimentConfig c = parse_config(shipped_config(1));
  CHECK(output_path(c, "out/fig1.csv", 0) == "out/fig1_gamma0.2.csv");
  CHECK(output_path(c, "out/fig1.csv", 2) == "out/fig1_gamma2.csv");
  CHECK(output_path(c, "plain", 1) == "plain_gamma0.5");
  c.kernel.gamma = {0.5};
  CHECK(output_path(c, "out/fig1.csv", 0) == "out/fig1.csv");
}

TEST_CASE("shipped configs build their models and states") {
  for (int f : shipped_figures()) {
    INFO("figure " << f);
    const ExperimentConfig c = parse_config(shipped_config(f));
    const SystemModel m = build_model(c);
    const Vector psi = initial_state(c);
    CHECK(psi.size() == model_dimension(c));
    CHECK(psi.norm() == doctest::Approx(1.0));
    for (int k = 0; k < kernel_count(c); ++k) CHECK(build_kernel(c, k).is_exponential());
  }
  const ExperimentConfig c = parse_config(shipped_config(1));
  CHECK(initial_state(c)(2) == cplx(0.5));
}

TEST_CASE("run writes the requested columns with a self-describing header") {
  const ExperimentConfig c = parse_config(kCascade);
  CommandOptions o;
  o.out = scratch("run.csv").string();
  const auto files = cmd_run(c, o);
  REQUIRE(files == std::vector<std::string>{o.out});
  const CsvTable t = read_csv(o.out);
  CHECK(t.header == std::vector<std::string>{"t", "p1", "p2", "p3", "p4", "abs_rho23", "abs_rho14"});
  REQUIRE(t.rows.size() == 51);
  CHECK(t.rows.back()[0] == doctest::Approx(1.0));
  const auto has_meta = [&](const std::string& s) {
    for (const auto& m : t.metadata)
      if (m.find(s) != std::string::npos) return true;
    return false;
  };
  CHECK(has_meta("version: " + version()));
  CHECK(has_meta("config dt = 0.02"));
  CHECK(has_meta("config delta3 = -1"));
  CHECK(has_meta("time unit"));
  CHECK(has_meta("route: exponential"));
  CHECK(has_meta("min eigenvalue"));
  // Rows satisfy the density-matrix invariants that survive the projection to observables.
  for (const auto& r : t.rows) {
    double sum = 0.0;
    for (int k = 1; k <= 4; ++k) {
      CHECK(r[k] >= -1e-6);
      CHECK(r[k] <= 1 + 1e-6);
      sum += r[k];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r[5] * r[5] <= r[2] * r[3] + 1e-6);
    CHECK(r[6] * r[6] <= r[1] * r[4] + 1e-6);
  }
  // The CSV values are the trajectory values at 12 digits.
  const DensityTrajectory tr = run_evolve(c);
  CHECK(t.rows[25][4] == doctest::Approx(tr.population(25, 4)).epsilon(1e-11));
}

TEST_CASE("identical config and seed give byte-identical output") {
  ExperimentConfig c = parse_config(kCascade);
  CommandOptions o;
  o.out = scratch("same_a.csv").string();
  cmd_run(c, o);
  o.out = scratch("same_b.csv").string();
  cmd_run(c, o);
  const std::string a = slurp(scratch("same_a.csv")), b = slurp(scratch("same_b.csv"));
  CHECK(without_version(a) == without_version(b));
  CHECK(without_version(a) != a);
  // The seed is part of the recorded config.
  o.seed = 99;
  o.out = scratch("same_c.csv").string();
  cmd_run(c, o);
  CHECK(slurp(scratch("same_c.csv")).find("# seed: 99") != std::string::npos);
}

TEST_CASE("several kernels give one file each") {
  ExperimentConfig c = parse_config(kCascade);
  c.kernel.gamma = {1, 3};
  c.grid.t_max = 0.2;
  CommandOptions o;
  o.out = scratch("multi.csv").string();
  const auto files = cmd_run(c, o);
  REQUIRE(files.size() == 2);
  CHECK(fs::path(files[0]).filename() == "multi_gamma1.csv");
  CHECK(fs::path(files[1]).filename() == "multi_gamma3.csv");
  CHECK(read_csv(files[1]).metadata.size() > 0);
  CHECK(slurp(files[0]) != slurp(files[1]));
}

TEST_CASE("a one-point sweep is a trailing average of a plain run") {
  const ExperimentConfig c = parse_config(kInterference);
  const auto rows = run_sweep(c);
  REQUIRE(rows.size() == 1);
  ExperimentConfig point = c;
  point.grid.t_max = 2.0;
  point.model.Omega2 = 10.0;
  const SteadyState s = trailing_average(run_evolve(point), 1.0);
  CHECK(rows[0].ratio == 2.0);
  for (int k = 0; k < 4; ++k) CHECK(rows[0].p[k] == doctest::Approx(s.p[k]).epsilon(1e-14));
  CHECK(rows[0].std4 == doctest::Approx(s.std4).epsilon(1e-14));
  CHECK(rows[0].p[0] + rows[0].p[1] + rows[0].p[2] + rows[0].p[3] == doctest::Approx(1.0).epsilon(1e-8));

  // A detuning override changes the model only through delta3.
  const auto shifted = run_sweep(c, 0, 0.0);
  point.model.delta3 = 0.0;
  CHECK(shifted[0].p[3] == doctest::Approx(trailing_average(run_evolve(point), 1.0).p[3]).epsilon(1e-14));

  const CsvTable t = sweep_table(c, 0, rows);
  CHECK(t.header == std::vector<std::string>{"ratio", "p1", "p2", "p3", "p4", "std_p4", "converged"});
  CHECK(t.rows[0][4] == rows[0].p[3]);
  CHECK(std::find(t.metadata.begin(), t.metadata.end(), "grid: dt=0.01 t_max=2 steps=200") != t.metadata.end());
}

TEST_CASE("sweep ratios span the configured range") {
  ExperimentConfig c = parse_config(kInterference);
  c.sweep.ratio_min = 1;
  c.sweep.ratio_max = 2;
  c.sweep.points = 3;
  c.sweep.settle_time = 0;
  c.sweep.average_window = 0.1;
  const auto rows = run_sweep(c);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].ratio == 1.0);
  CHECK(rows[1].ratio == 1.5);
  CHECK(rows[2].ratio == 2.0);
}

TEST_CASE("compare against Lindblad for a closed system") {
  ExperimentConfig c = parse_config(kCascade);
  c.kernel.type = "zero";
  c.run.mode = "compare";
  c.compare.oracle = "lindblad";
  c.compare.tolerance = 1e-6;
  const CompareResult r = run_compare(c);
  CHECK(r.pass);
  CHECK(r.max_distance < 1e-6);
  CHECK(r.times.size() == 51);

  // With memory the Markov comparator disagrees at a tight tolerance.
  c.kernel.type = "ou";
  c.kernel.gamma = {0.5};
  c.compare.tolerance = 1e-4;
  const CompareResult memory = run_compare(c);
  CHECK_FALSE(memory.pass);
  const CsvTable t = compare_table(c, 0, memory);
  CHECK(t.header == std::vector<std::string>{"t", "trace_distance", "error_bar", "threshold"});
  CHECK(t.metadata.back().find("result: FAIL") == 0);
}

TEST_CASE("command line exit codes") {
  const fs::path good = write_config("good.cfg", kCascade);
  const fs::path bad = write_config("bad.cfg", std::string(kCascade).replace(std::string(kCascade).find("dt = 0.02"), 9,
                                                                             "dt = 0"));
  std::string missing_table = kCascade;
  missing_table.replace(missing_table.find("type = ou"), 9, "type = table\npath = /nonexistent/kernel.txt");
  const fs::path broken = write_config("broken.cfg", missing_table);

  SUBCASE("success prints the written file") {
    const fs::path out = scratch("cli_run.csv");
    const CliResult r = cli("run " + good.string() + " --out " + out.string() + " --threads 1");
    CHECK(r.code == 0);
    CHECK(r.out == out.string() + "\n");
    CHECK(fs::exists(out));
  }
  SUBCASE("validation failure exits with 2 and names the line") {
    const CliResult r = cli("run " + bad.string());
    CHECK(r.code == 2);
    CHECK(r.err.find("line 9: grid.dt must be positive") != std::string::npos);
  }
  SUBCASE("runtime error exits with 1") {
    const CliResult r = cli("run " + broken.string() + " --out " + scratch("never.csv").string());
    CHECK(r.code == 1);
    CHECK(r.err.find("error: ") == 0);
  }
  SUBCASE("failed comparison exits with 2") {
    std::string text = kCascade;
    text += "[compare]\noracle = lindblad\ntolerance = 1e-9\n";
    const fs::path cfg = write_config("compare.cfg", text);
    const CliResult r = cli("compare " + cfg.string() + " --out " + scratch("cmp.csv").string());
    CHECK(r.code == 2);
    CHECK(r.out.find("FAIL") != std::string::npos);
  }
  SUBCASE("passing comparison exits with 0") {
    std::string text = kCascade;
    text.replace(text.find("type = ou"), 9, "type = zero");
    text += "[compare]\noracle = lindblad\ntolerance = 1e-6\n";
    const fs::path cfg = write_config("compare_ok.cfg", text);
    const CliResult r = cli("compare " + cfg.string() + " --out " + scratch("cmp_ok.csv").string());
    CHECK(r.code == 0);
    CHECK(r.out.find("PASS") != std::string::npos);
  }
  SUBCASE("usage errors") {
    CHECK(cli("").code != 0);
    CHECK(cli("figure 2").code != 0);
    CHECK(cli("run /nonexistent.cfg").code != 0);
    const CliResult v = cli("--version");
    CHECK(v.code == 0);
    CHECK(v.out.find(version()) != std::string::npos);
  }
}
