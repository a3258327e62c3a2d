#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nmqi/operator_core.hpp"

namespace nmqi {

/// H(t) gains amplitude * exp(-i frequency t) * op plus its adjoint.
struct Drive {
  Matrix op;
  double amplitude = 0.0;
  double frequency = 0.0;
};

/// Level energies for the driven four-level model: omega3 = omega2 + mu +
/// delta3 and omega4 = omega3 + 1.
struct InterferenceConvention {
  double omega1 = 0.0;
  double omega2 = 0.0;
  double delta3 = -1.0;
};

struct SystemModel {
  std::string kind = "custom";
  int dim = 0;
  Matrix H0;
  std::vector<Drive> drives;
  Matrix L;
  std::vector<std::string> labels;
  /// Resolved parameters, written into output metadata.
  std::vector<std::pair<std::string, std::string>> parameters;

  Matrix hamiltonian_at(double t) const;
  /// N - 2 clamped to [0, 2].
  int truncation_order() const;
  /// H0, then each drive operator followed by its adjoint.
  std::vector<Matrix> hamiltonian_terms() const;
  /// Scalars multiplying hamiltonian_terms() at time t.
  std::vector<cplx> hamiltonian_scalars(double t) const;
  HierarchyGenerators generators() const;
  /// Throws nmqi::Error on structural problems (shape, hermiticity, size).
  void validate() const;
};

SystemModel build_cascade(const std::vector<double>& omega, const std::vector<double>& kappa);
SystemModel build_interference(double omega1_rabi, double omega2_rabi, double mu, double kappa,
                               const InterferenceConvention& conv = {});
SystemModel build_custom(const Matrix& H0, const Matrix& L, std::vector<Drive> drives = {});

struct ForbiddenEntry {
  int j = 0;
  int k = 0;
  double max_product = 0.0;
};

struct ForbiddenReport {
  bool pass = true;
  std::vector<ForbiddenEntry> entries;
  std::vector<std::string> diagnostics;
};

/// Max |entry| of products S_j S_k with j + k > N - 2 over the detected
/// subspaces, plus the nilpotency requirement L^N = 0.
ForbiddenReport verify_forbidden(const SystemModel& m, const std::vector<OperatorBasis>& subspaces,
                                 double tol = 1e-10);
ForbiddenReport verify_forbidden(const SystemModel& m, double tol = 1e-10);

}  // namespace nmqi
