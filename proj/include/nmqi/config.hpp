#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nmqi {

/// A parsed experiment file. Every field has a default, so to_text() writes a
/// complete file and parse_config(to_text(c)) == c.
struct ExperimentConfig {
  struct Model {
    std::string type = "cascade";  // cascade | interference | custom
    // cascade
    std::vector<double> omega{1, 2, 3, 4};
    std::vector<double> kappa{1, 1, 1};  // interference: one value, the channel ratio
    // interference
    double Omega1 = 5.0;
    double Omega2 = 10.0;
    double mu = 2.0;
    double omega1 = 0.0;
    double omega2 = 0.0;
    double delta3 = -1.0;
    // custom: row-major N x N real and imaginary parts
    int dim = 0;
    std::vector<double> H0_re, H0_im, L_re, L_im;
    bool operator==(const Model&) const = default;
  } model;

  struct Kernel {
    std::string type = "ou";  // ou | exponential | table | zero
    std::vector<double> gamma{1.0};  // one run per value
    std::vector<double> amp_re, amp_im, rate_re, rate_im;
    std::string path;
    bool operator==(const Kernel&) const = default;
  } kernel;

  struct Grid {
    double dt = 0.01;
    double t_max = 10.0;
    bool operator==(const Grid&) const = default;
  } grid;

  struct Initial {
    int level = 0;  // 1-based; 0 means use amplitudes
    std::vector<double> amplitudes;
    bool operator==(const Initial&) const = default;
  } initial;

  struct Run {
    std::string mode = "evolve";  // evolve | sweep | compare
    std::vector<std::string> observables{"p1", "p2", "p3", "p4"};
    std::string output;
    std::uint64_t seed = 1;
    std::string route = "auto";
    int sample_every = 1;
    bool operator==(const Run&) const = default;
  } run;

  struct Sweep {
    double ratio_min = 0.5;
    double ratio_max = 4.0;
    int points = 8;
    double settle_time = 20.0;
    double average_window = 10.0;
    bool operator==(const Sweep&) const = default;
  } sweep;

  struct Compare {
    std::string oracle = "lindblad";  // lindblad | qsd | bath
    int trajectories = 5000;
    int modes = 60;
    int n_max = 3;
    double tolerance = 0.02;
    std::string sum_rule = "none";
    double omega_cutoff = 0.0;
    bool operator==(const Compare&) const = default;
  } compare;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses and validates; throws ConfigError with every diagnostic found.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Checks value ranges and cross-field consistency; throws ConfigError.
void validate_config(const ExperimentConfig& c);

/// Complete text form with every key, doubles at 17 significant digits.
std::string to_text(const ExperimentConfig& c);

/// Number of system levels implied by the model section.
int model_dimension(const ExperimentConfig& c);

}  // namespace nmqi
