#pragma once

#include <cstdint>
#include <vector>

#include "nmqi/hierarchy.hpp"
#include "nmqi/master_equation.hpp"

namespace nmqi {

/// One sample of the process z*_t on a grid.
struct NoiseRealization {
  TimeGrid grid;
  std::vector<cplx> z_star;
};

/// splitmix64 step; used to derive per-trajectory seeds from one root seed.
std::uint64_t splitmix64(std::uint64_t x);

/// Draws z = A xi with A A^dag = alpha(t_i, t_j) and xi circular standard
/// normal, and stores z* = conj(z). Then M[z_t z*_s] = alpha(t, s), which is
/// the pairing the functional derivative in Obar requires; equivalently
/// M[z*_t z_s] = alpha(s, t). Realization k depends only on (seed, k).
class NoiseGenerator {
 public:
  NoiseGenerator(const CorrelationKernel& kernel, const TimeGrid& grid, std::uint64_t seed);

  NoiseRealization operator()(std::uint64_t index) const;
  /// Writes realization `index` into out[0 .. points).
  void fill(std::uint64_t index, cplx* out) const;

  const TimeGrid& grid() const { return grid_; }
  double jitter() const { return jitter_; }

 private:
  TimeGrid grid_;
  std::uint64_t seed_;
  Matrix factor_;
  double jitter_ = 0.0;
};

std::vector<NoiseRealization> sample_noise(const CorrelationKernel& kernel, const TimeGrid& grid,
                                           std::uint64_t seed, int count);

/// Obar_0(t_m), Obar_1(t_m, .) and Obar_2(t_m, ., .) for every grid index,
/// as subspace coefficients.
class ObarTape {
 public:
  ObarTape() = default;
  explicit ObarTape(const Hierarchy& h);

  /// Appends the hierarchy's current contractions; h.index() must equal size().
  /// Index 0 is filled in implicitly, since every contraction vanishes there.
  void record(const Hierarchy& h);

  int size() const { return static_cast<int>(ob0_.size()); }
  int dim(int level) const { return d_[level]; }
  const TimeGrid& grid() const { return grid_; }
  const std::vector<OperatorBasis>& bases() const { return bases_; }

  const cplx* obar0(int m) const { return ob0_[m].data(); }
  const cplx* obar1(int m, int s1) const { return ob1_[m].data() + static_cast<std::size_t>(s1) * d_[1]; }
  const cplx* obar2(int m, int s1, int s2) const { return ob2_[m].data() + tri(s1, s2) * d_[2]; }

  /// Obar(t_m, z*) with trapezoid noise integrals.
  Matrix contract(int m, const cplx* z_star) const;

 private:
  TimeGrid grid_{};
  int d_[3] = {0, 0, 0};
  std::vector<OperatorBasis> bases_;
  std::vector<std::vector<cplx>> ob0_, ob1_, ob2_;
};

/// Runs the hierarchy alone and records its tape.
ObarTape record_tape(const SystemModel& model, const CorrelationKernel& kernel, const TimeGrid& grid,
                     const HierarchyOptions& opts = {});

struct QsdPath {
  std::vector<Vector> psi;  // one state per grid point
  bool overflow = false;
};

/// Linear QSD, d psi = (-i H + L z*_t - L^dag Obar(t, z*)) psi dt, by Heun's
/// method. The norm is not restored. Stops with overflow set when |psi| > 1e6.
QsdPath qsd_trajectory(const SystemModel& model, const ObarTape& tape, const NoiseRealization& noise,
                       const Vector& psi0);

struct NovikovReport {
  std::vector<double> times;
  /// Largest |mean| / stderr over the real and imaginary parts of
  /// z*_t P - P Obar^dag(t, z*) at each probe time.
  std::vector<double> sigma;
  double max_sigma = 0.0;
  /// Largest |mean| of the two sides, for scale.
  double max_side = 0.0;
};

struct EnsembleResult {
  DensityTrajectory mean_rho;
  /// Jackknife standard error of mean_rho in Frobenius norm, per sample.
  std::vector<double> stderr;
  int count = 0;
  int excluded = 0;
  NovikovReport novikov;
};

/// Mean of |psi><psi| over trajectories, without normalising each one.
/// Overflowed paths are excluded and counted.
EnsembleResult ensemble_average(const std::vector<QsdPath>& paths, const TimeGrid& grid, int sample_every = 1);

struct EnsembleOptions {
  int trajectories = 1000;
  int sample_every = 1;
  /// Trajectories advanced together. The fold over batches is ordered, so
  /// results do not depend on the thread count.
  int batch = 64;
  /// Grid indices at which to accumulate the Novikov probe.
  std::vector<int> probe_indices;
};

/// Batched, OpenMP-parallel ensemble run.
EnsembleResult run_ensemble(const SystemModel& model, const ObarTape& tape, const NoiseGenerator& noise,
                            const Vector& psi0, const EnsembleOptions& opts);

/// `count` probe indices spread evenly over (0, n_steps].
std::vector<int> probe_indices(const TimeGrid& grid, int count);

NovikovReport novikov_probe(const SystemModel& model, const CorrelationKernel& kernel, const TimeGrid& grid,
                            int trajectories, const Vector& psi0, std::uint64_t seed = 1, int times = 10);

}  // namespace nmqi
