#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nmqi/config.hpp"
#include "nmqi/csv.hpp"
#include "nmqi/master_equation.hpp"

namespace nmqi {

std::string version();

/// Number of kernels a config describes (one per listed gamma for OU).
int kernel_count(const ExperimentConfig& c);

SystemModel build_model(const ExperimentConfig& c);
CorrelationKernel build_kernel(const ExperimentConfig& c, int index = 0);
Vector initial_state(const ExperimentConfig& c);
TimeGrid build_grid(const ExperimentConfig& c);
HierarchyOptions hierarchy_options(const ExperimentConfig& c);

/// Output path for kernel `index`: the base name itself when there is one
/// kernel, otherwise "<stem>_gamma<value><ext>".
std::string output_path(const ExperimentConfig& c, const std::string& base, int index);

/// Master-equation run for kernel `index`.
DensityTrajectory run_evolve(const ExperimentConfig& c, int index = 0);

/// Value of an observable name (p3, abs_rho14, re_rho21, ...) on a state.
double observable(const std::string& name, const Matrix& rho);

/// Observables table with the metadata block.
CsvTable trajectory_table(const ExperimentConfig& c, int index, const DensityTrajectory& tr);

struct SweepRow {
  double ratio = 0.0;
  double p[4] = {0, 0, 0, 0};  // p1..p4
  double std4 = 0.0;
  bool converged = true;
};

/// Steady-state populations for Omega2 = ratio * Omega1 over the sweep range.
/// `delta3` overrides the model's detuning convention when given.
std::vector<SweepRow> run_sweep(const ExperimentConfig& c, int index = 0, std::optional<double> delta3 = {});
CsvTable sweep_table(const ExperimentConfig& c, int index, const std::vector<SweepRow>& rows);

struct CompareResult {
  std::string oracle;
  std::vector<double> times, distance, error_bar, threshold;
  double max_distance = 0.0;
  bool pass = false;
  std::vector<std::string> notes;
};

CompareResult run_compare(const ExperimentConfig& c, int index = 0);
CsvTable compare_table(const ExperimentConfig& c, int index, const CompareResult& r);

struct CommandOptions {
  std::optional<std::uint64_t> seed;
  /// File name (run/sweep/compare) or directory (figure). Empty: config value.
  std::string out;
  std::ostream* log = nullptr;
};

/// Each returns the files written.
std::vector<std::string> cmd_run(ExperimentConfig c, const CommandOptions& o = {});
std::vector<std::string> cmd_sweep(ExperimentConfig c, const CommandOptions& o = {});
/// Returns true when every kernel passes.
bool cmd_compare(ExperimentConfig c, const CommandOptions& o, std::vector<std::string>* files = nullptr);

/// Text of a shipped figure config (1, 3, 4, 5 or 6).
std::string shipped_config(int figure);
std::vector<int> shipped_figures();
std::vector<std::string> cmd_figure(int figure, const CommandOptions& o = {});

}  // namespace nmqi
