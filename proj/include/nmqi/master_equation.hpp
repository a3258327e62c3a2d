#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nmqi/hierarchy.hpp"

namespace nmqi {

/// R(t) as a linear map of rho: R = rho Obar0^dag + sum_i X_i rho Y_i^dag.
struct RSuperop {
  Matrix obar0;
  std::vector<std::pair<Matrix, Matrix>> pairs;

  Matrix apply(const Matrix& rho) const;
};

/// Builds R at the hierarchy's current index from its grids and contractions.
RSuperop assemble_R(const Hierarchy& h);

/// R(t) for a density matrix at time t; throws TimeMismatchError when t is
/// not the hierarchy's current time.
Matrix compute_R(const Hierarchy& h, double t, const Matrix& rho);

/// -i[H(t), rho] + [L, R] + [L, R]^dag.
Matrix master_rhs(const SystemModel& m, double t, const Matrix& rho, const RSuperop& r);
/// [L, R] + [L, R]^dag, the non-Hamiltonian part of master_rhs.
Matrix dissipator(const SystemModel& m, const Matrix& rho, const RSuperop& r);

struct DensityTrajectory {
  std::vector<double> times;
  std::vector<Matrix> states;
  std::vector<std::string> warnings;
  double min_eigenvalue = 0.0;

  std::size_t size() const { return times.size(); }
  double population(std::size_t i, int level) const { return states[i](level - 1, level - 1).real(); }
  double coherence(std::size_t i, int j, int k) const { return std::abs(states[i](j - 1, k - 1)); }
};

/// InteractionHeun propagates -i[H, rho] exactly over each step with
/// U = exp(-i dt H(t + dt/2)) and applies Heun to the [L, R] terms in that
/// frame, so the unitary part never costs positivity. Heun applies Heun to
/// the whole right-hand side. Both are second order.
enum class Stepper { InteractionHeun, Heun };

struct EvolveOptions {
  HierarchyOptions hierarchy;
  Stepper stepper = Stepper::InteractionHeun;
  /// Keep every k-th state.
  int sample_every = 1;
  /// Called after each committed step with the hierarchy at the new index.
  std::function<void(const Hierarchy&)> on_step;
};

DensityTrajectory evolve(const SystemModel& model, const CorrelationKernel& kernel, const Matrix& rho0,
                         const TimeGrid& grid, const EvolveOptions& opts = {});

/// Gamma (2 L rho L^dag - L^dag L rho - rho L^dag L), plus the Hamiltonian
/// shift lamb * L^dag L. Integrated with classical RK4.
DensityTrajectory lindblad_evolve(const SystemModel& model, double gamma, const Matrix& rho0,
                                  const TimeGrid& grid, double lamb = 0.0, int sample_every = 1);

/// Markov comparator for a kernel: gamma = Re, lamb = Im of its half-line integral.
DensityTrajectory lindblad_for_kernel(const SystemModel& model, const CorrelationKernel& kernel,
                                      const Matrix& rho0, const TimeGrid& grid, int sample_every = 1);

double trace_distance(const Matrix& a, const Matrix& b);
double min_eigenvalue(const Matrix& rho);
Matrix pure_state(const Vector& psi);

struct SteadyState {
  double p[4] = {0, 0, 0, 0};  // p1..p4 trailing averages
  double std4 = 0.0;
  bool converged = true;
};

/// Trailing-window averages of populations over the last `window` time units.
SteadyState trailing_average(const DensityTrajectory& tr, double window, double tol = 0.02);

}  // namespace nmqi
