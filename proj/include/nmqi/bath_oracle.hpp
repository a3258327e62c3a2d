#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "nmqi/master_equation.hpp"

namespace nmqi {

struct BathMode {
  double omega;
  double g;
};

/// None keeps the raw midpoint sum g_k^2 = J(omega_k) d_omega. Rescale
/// multiplies every g_k^2 by one factor so that sum g_k^2 = alpha(0).
enum class SumRule { None, Rescale };

std::string to_string(SumRule r);
SumRule sum_rule_from_string(const std::string& s);

struct ReconstructionReport {
  /// max |alpha_modes(tau) - alpha(tau)| / alpha(0) over [0, window_end].
  double max_error = 0.0;
  /// The same over the gate window [gate_start, window_end].
  double gate_error = 0.0;
  double gate_start = 0.0;
  double window_end = 0.0;
  /// |sum g_k^2 - alpha(0)| / alpha(0).
  double sum_rule_error = 0.0;
};

struct BathDiscretization {
  std::vector<BathMode> modes;
  SumRule sum_rule = SumRule::None;
  double omega_cutoff = 0.0;
  ReconstructionReport report;

  /// sum_k g_k^2 exp(-i omega_k tau).
  cplx alpha(double tau) const;
};

struct DiscretizeOptions {
  int modes = 60;
  /// 0 picks 8 gamma (the largest decay rate of the kernel plus its largest
  /// oscillation frequency for exponential sums).
  double omega_cutoff = 0.0;
  SumRule sum_rule = SumRule::None;
  /// Window gate: WindowTooSmallError when the reconstruction error on
  /// [pi / omega_c, 5 / gamma] exceeds this.
  double gate_tolerance = 0.02;
};

/// Spectral density of an exponential kernel; its Fourier transform is alpha.
double spectral_density(const CorrelationKernel& kernel, double omega);

/// Uniform midpoint frequency grid on [-omega_c, omega_c] with
/// g_k^2 = J(omega_k) d_omega. Negative frequencies are kept on purpose: this
/// reproduces alpha as a mathematical check, it is not a physical bath.
BathDiscretization discretize_kernel(const CorrelationKernel& kernel, const DiscretizeOptions& opts = {});

/// Reconstruction error of `bath` against `kernel` over [t0, t1], relative to alpha(0).
double reconstruction_error(const BathDiscretization& bath, const CorrelationKernel& kernel, double t0, double t1,
                            int samples = 2001);

/// System level plus bath occupations, restricted to sum n_k <= n_max and to
/// states connected to the initial support.
class FockBasis {
 public:
  FockBasis(int levels, int modes, int n_max);

  /// Grows the basis from the given system levels (bath in vacuum) along the
  /// couplings of L (nonzero columns and rows) and of the system Hamiltonian.
  void build(const SystemModel& model, const std::vector<int>& seed_levels, std::size_t cap);

  std::size_t size() const { return states_.size(); }
  int levels() const { return levels_; }
  int modes() const { return modes_; }
  int n_max() const { return n_max_; }

  int level(std::size_t i) const;          // 0-based system level
  int excitations(std::size_t i) const;    // sum of bath occupations
  int occupation(std::size_t i, int k) const;
  /// Index of a state or -1 when it is outside the basis.
  std::int64_t find(int level, const std::vector<std::uint8_t>& modes) const;
  std::vector<std::uint8_t> mode_list(std::size_t i) const;  // sorted mode indices, with repeats

 private:
  std::uint64_t key(int level, const std::vector<std::uint8_t>& modes) const;
  void insert(std::uint64_t key);

  int levels_, modes_, n_max_;
  std::vector<std::uint64_t> states_;
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
};

struct FullSolveOptions {
  int n_max = 3;
  std::size_t basis_cap = 100000;
  int sample_every = 1;
  /// Krylov subspace size per step and its error target.
  int krylov_dim = 30;
  double krylov_tol = 1e-12;
};

struct FullSolveResult {
  DensityTrajectory reduced;
  std::vector<double> norm;        // |Psi| per sample
  std::vector<double> excitation;  // <(level - 1) + sum n_k> per sample
  std::vector<double> leak;        // population on truncation-open states per sample
  std::size_t basis_size = 0;
  /// Largest t up to which the leak stayed below 1%.
  double certified_until = 0.0;
};

/// Schroedinger evolution of system plus discretized bath, bath in vacuum at
/// t = 0, with a Lanczos exponential of the midpoint Hamiltonian per step.
FullSolveResult full_solve(const SystemModel& model, const BathDiscretization& bath, const Vector& psi0,
                           const TimeGrid& grid, const FullSolveOptions& opts = {});

}  // namespace nmqi
