#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "nmqi/operator_core.hpp"

namespace nmqi {

struct OrnsteinUhlenbeck {
  double gamma = 1.0;
};

/// alpha(tau) = sum_j G_j exp(-lambda_j tau) for tau >= 0.
struct ExponentialSum {
  std::vector<cplx> amplitudes;
  std::vector<cplx> rates;  // Re > 0
};

/// Samples of alpha(tau) on tau >= 0, linearly interpolated.
struct Tabulated {
  std::vector<double> tau;
  std::vector<cplx> values;
};

/// Bath correlation alpha(t, s). Stationary; alpha(s, t) = conj(alpha(t, s)).
class CorrelationKernel {
 public:
  using Variant = std::variant<OrnsteinUhlenbeck, ExponentialSum, Tabulated>;

  CorrelationKernel() : v_(OrnsteinUhlenbeck{}) {}
  explicit CorrelationKernel(Variant v);

  static CorrelationKernel ou(double gamma) { return CorrelationKernel(OrnsteinUhlenbeck{gamma}); }
  /// Whitespace-separated "tau re im" rows, '#' starts a comment.
  static CorrelationKernel load_table(const std::string& path);

  const Variant& variant() const { return v_; }

  cplx operator()(double t, double s) const { return at(t - s); }
  /// alpha as a function of tau = t - s, any sign.
  cplx at(double tau) const;
  /// Integral of alpha over [0, inf).
  cplx markov_rate() const;
  /// Largest |tau| the kernel can be evaluated at.
  double range() const;

  /// Exponential decomposition (G_j, lambda_j) when one exists exactly.
  bool is_exponential() const;
  std::vector<std::pair<cplx, cplx>> exponential_terms() const;

  /// Short text form used in CSV metadata.
  std::string describe() const;

 private:
  Variant v_;
};

struct TimeGrid {
  double dt = 0.01;
  int n_steps = 1;

  double t_max() const { return dt * n_steps; }
  int points() const { return n_steps + 1; }
  double time(int i) const { return dt * i; }
  /// Validates and builds a grid covering [0, t_max].
  static TimeGrid covering(double dt, double t_max);
};

/// C[i][j] = alpha(t_i, t_j) over the grid points.
Matrix noise_covariance(const CorrelationKernel& k, const TimeGrid& grid);

struct CovarianceFactor {
  Matrix factor;  // lower triangular A with A A^dag = C + jitter
  double jitter = 0.0;
};

/// Cholesky factor of a covariance, retrying once with a diagonal jitter of
/// 1e-10 * alpha(0). Throws NotPositiveDefiniteError if that is not enough.
CovarianceFactor factor_covariance(const Matrix& c, double alpha0);

/// Weights for integrating exp(-lambda u) times a linear interpolant over one
/// step h: near is the weight of the sample at u = 0, far of the sample at u = h.
struct ExpWeights {
  cplx decay;  // exp(-lambda h)
  cplx near;
  cplx far;
};
ExpWeights exp_product_weights(cplx lambda, double h);

enum class QuadratureKind { Trapezoid, Exponential };

/// Quadrature of kernel integrals on a uniform grid. Trapezoid uses point
/// values of alpha; Exponential integrates each exponential term exactly
/// against a piecewise-linear integrand.
class KernelQuadrature {
 public:
  KernelQuadrature(const CorrelationKernel& k, double dt, int n_steps, QuadratureKind kind);

  QuadratureKind kind() const { return kind_; }
  double dt() const { return dt_; }
  int n_steps() const { return n_steps_; }
  const CorrelationKernel& kernel() const { return kernel_; }

  /// alpha(k dt) for k = 0..n_steps.
  cplx alpha_lag(int k) const { return k >= 0 ? lags_[k] : std::conj(lags_[-k]); }

  /// Trapezoid weights w_i with int_0^{t_m} alpha(t_m, s) f(s) ds ~ sum_i w_i f(s_i).
  void bar_weights(int m, std::vector<cplx>& w) const;

  /// out(i, :) = int_0^{t_m} alpha(s_i, s') f(s') ds' for i = 0..m.
  /// `f` and `out` are row-major with m + 1 rows of `cols` entries.
  void convolve(int m, const cplx* f, int cols, cplx* out) const;

  int terms() const { return static_cast<int>(exp_.size()); }
  cplx term_amplitude(int j) const { return exp_[j].first; }
  cplx term_rate(int j) const { return exp_[j].second; }
  const ExpWeights& term_weights(int j) const { return w_[j]; }
  /// int_0^{t_m} G_j exp(-lambda_j (t_m - s)) f(s) ds (Exponential kind only).
  void endpoint(int m, int j, const cplx* f, int cols, cplx* out) const;

 private:
  CorrelationKernel kernel_;
  double dt_;
  int n_steps_;
  QuadratureKind kind_;
  std::vector<cplx> lags_;
  std::vector<std::pair<cplx, cplx>> exp_;
  std::vector<ExpWeights> w_;
  std::vector<ExpWeights> wc_;  // weights for the conjugate rates
};

}  // namespace nmqi
