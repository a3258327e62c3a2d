#pragma once

#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace nmqi {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr int kMaxLevels = 16;
inline constexpr cplx kI{0.0, 1.0};

/// Zeroes components below 1e-250. Decaying recursions otherwise drift into
/// subnormal range, where arithmetic is very slow.
inline cplx flush_tiny(cplx z) {
  constexpr double tiny = 1e-250;
  const double re = z.real(), im = z.imag();
  return {re > -tiny && re < tiny ? 0.0 : re, im > -tiny && im < tiny ? 0.0 : im};
}

Matrix commutator(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& m);
bool is_hermitian(const Matrix& m, double tol);
bool is_zero(const Matrix& m, double tol);
/// |i><j| on an n-level space, 1-based labels.
Matrix outer(int n, int i, int j);

/// Smallest p with every entry of L^p below `tol`; empty if no p <= dim works.
std::optional<int> nilpotency_index(const Matrix& L, double tol = 1e-12);

/// Trace-orthonormal set of dim x dim matrices, grown by Gram-Schmidt.
class OperatorBasis {
 public:
  OperatorBasis() = default;
  explicit OperatorBasis(int dim) : dim_(dim) {}

  /// Matrix units |i><j| in row-major order.
  static OperatorBasis full(int dim);

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(elements_.size()); }
  bool empty() const { return elements_.empty(); }
  const Matrix& operator[](int i) const { return elements_[static_cast<std::size_t>(i)]; }
  const std::vector<Matrix>& elements() const { return elements_; }

  /// Orthogonalizes `x` against the basis and appends the remainder when its
  /// norm exceeds `tol * max(1, ||x||)`. Returns whether the basis grew.
  bool try_add(const Matrix& x, double tol = 1e-10);

  /// Coefficients Tr(E_a^dag x) without a membership check.
  Vector coefficients(const Matrix& x) const;
  /// Frobenius norm of x minus its projection.
  double residual(const Matrix& x) const;
  /// Coefficients of x; throws SubspaceEscapeError when the residual exceeds
  /// `tol * max(1, ||x||)`.
  Vector project(const Matrix& x, double tol = 1e-10) const;
  Matrix reconstruct(const Vector& coeffs) const;

 private:
  int dim_ = 0;
  std::vector<Matrix> elements_;
};

/// Generator data the hierarchy equations act with.
struct HierarchyGenerators {
  Matrix coupling;                       // L
  std::vector<Matrix> hamiltonian_terms;  // H0 and each drive operator and its adjoint
  int order = 0;                          // truncation order K
};

struct SubspaceOptions {
  bool compress = true;
  double tolerance = 1e-10;
  /// Fall back to the full basis when a subspace would exceed this size.
  /// Zero means N^2.
  int cap = 0;
};

/// Smallest subspaces S_0 (containing L), S_1 (containing [L, S_0]) and
/// S_2 (containing [L, S_1]) closed under every map in the hierarchy
/// equations. Returns order + 1 bases; with compression off each is the full
/// basis.
std::vector<OperatorBasis> detect_invariant_subspaces(const HierarchyGenerators& gens,
                                                      const SubspaceOptions& opts = {});

/// Matrix of the linear map `f` restricted to `from` and expressed in `to`.
/// Throws SubspaceEscapeError if an image leaves `to`.
template <class F>
Matrix restrict_map(const OperatorBasis& from, const OperatorBasis& to, F&& f, double tol = 1e-8) {
  Matrix m = Matrix::Zero(to.size(), from.size());
  for (int b = 0; b < from.size(); ++b) m.col(b) = to.project(f(from[b]), tol);
  return m;
}

}  // namespace nmqi
