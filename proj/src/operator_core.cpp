#include "nmqi/operator_core.hpp"

#include <algorithm>
#include <sstream>

#include "nmqi/errors.hpp"

namespace nmqi {

Matrix commutator(const Matrix& a, const Matrix& b) { return a * b - b * a; }

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

bool is_hermitian(const Matrix& m, double tol) {
  return m.rows() == m.cols() && max_abs(m - m.adjoint()) <= tol;
}

bool is_zero(const Matrix& m, double tol) { return max_abs(m) <= tol; }

Matrix outer(int n, int i, int j) {
  Matrix m = Matrix::Zero(n, n);
  m(i - 1, j - 1) = 1.0;
  return m;
}

std::optional<int> nilpotency_index(const Matrix& L, double tol) {
  const int n = static_cast<int>(L.rows());
  Matrix p = L;
  for (int k = 1; k <= n; ++k) {
    if (max_abs(p) < tol) return k;
    p = p * L;
  }
  return std::nullopt;
}

OperatorBasis OperatorBasis::full(int dim) {
  OperatorBasis b(dim);
  for (int i = 1; i <= dim; ++i)
    for (int j = 1; j <= dim; ++j) b.elements_.push_back(outer(dim, i, j));
  return b;
}

Vector OperatorBasis::coefficients(const Matrix& x) const {
  Vector c(size());
  for (int a = 0; a < size(); ++a) c(a) = (elements_[a].conjugate().cwiseProduct(x)).sum();
  return c;
}

Matrix OperatorBasis::reconstruct(const Vector& coeffs) const {
  Matrix m = Matrix::Zero(dim_, dim_);
  for (int a = 0; a < size(); ++a) m += coeffs(a) * elements_[a];
  return m;
}

double OperatorBasis::residual(const Matrix& x) const {
  return (x - reconstruct(coefficients(x))).norm();
}

bool OperatorBasis::try_add(const Matrix& x, double tol) {
  const double scale = std::max(1.0, x.norm());
  Matrix r = x;
  // Two passes of classical Gram-Schmidt keep the set orthonormal to round-off.
  for (int pass = 0; pass < 2; ++pass) r -= reconstruct(coefficients(r));
  const double nr = r.norm();
  if (nr <= tol * scale) return false;
  elements_.push_back(r / nr);
  return true;
}

Vector OperatorBasis::project(const Matrix& x, double tol) const {
  Vector c = coefficients(x);
  const double res = (x - reconstruct(c)).norm();
  if (res > tol * std::max(1.0, x.norm())) {
    std::ostringstream os;
    os << "operator leaves its subspace (dim " << size() << "), residual " << res;
    throw SubspaceEscapeError(os.str());
  }
  return c;
}

namespace {

struct Closure {
  const HierarchyGenerators& g;
  double tol;
  std::vector<OperatorBasis> s;

  // Adds every image of the hierarchy maps; returns whether any basis grew.
  bool sweep() {
    bool grew = false;
    const Matrix Ld = g.coupling.adjoint();
    const int K = g.order;
    auto images_level = [&](int k) {
      // Snapshot: bases grow while we iterate.
      const std::vector<Matrix> xs = s[k].elements();
      const std::vector<Matrix> y0 = s[0].elements();
      for (const Matrix& x : xs) {
        for (const Matrix& h : g.hamiltonian_terms) grew |= s[k].try_add(commutator(h, x), tol);
        for (const Matrix& y : y0) grew |= s[k].try_add(commutator(Ld * y, x), tol);
      }
    };
    for (int k = 0; k <= K; ++k) images_level(k);
    if (K >= 1) {
      const std::vector<Matrix> x0 = s[0].elements();
      const std::vector<Matrix> x1 = s[1].elements();
      for (const Matrix& x : x0) grew |= s[1].try_add(commutator(g.coupling, x), tol);
      for (const Matrix& x : x1) grew |= s[0].try_add(Ld * x, tol);
      for (const Matrix& a : x1)
        for (const Matrix& y : x0) grew |= s[1].try_add(commutator(Ld * a, y), tol);
    }
    if (K >= 2) {
      const std::vector<Matrix> x0 = s[0].elements();
      const std::vector<Matrix> x1 = s[1].elements();
      const std::vector<Matrix> x2 = s[2].elements();
      for (const Matrix& x : x1) grew |= s[2].try_add(commutator(g.coupling, x), tol);
      for (const Matrix& x : x2) grew |= s[1].try_add(Ld * x, tol);
      for (const Matrix& a : x1)
        for (const Matrix& z : x1) grew |= s[2].try_add(commutator(Ld * a, z), tol);
      for (const Matrix& a : x2)
        for (const Matrix& y : x0) grew |= s[2].try_add(commutator(Ld * a, y), tol);
    }
    return grew;
  }
};

}  // namespace

std::vector<OperatorBasis> detect_invariant_subspaces(const HierarchyGenerators& gens,
                                                      const SubspaceOptions& opts) {
  const int n = static_cast<int>(gens.coupling.rows());
  const int K = std::clamp(gens.order, 0, 2);
  auto full_set = [&] { return std::vector<OperatorBasis>(K + 1, OperatorBasis::full(n)); };
  if (!opts.compress) return full_set();

  const int cap = opts.cap > 0 ? opts.cap : n * n;
  HierarchyGenerators g = gens;
  g.order = K;
  Closure c{g, opts.tolerance, std::vector<OperatorBasis>(K + 1, OperatorBasis(n))};
  c.s[0].try_add(gens.coupling, opts.tolerance);
  while (c.sweep()) {
    for (const auto& b : c.s)
      if (b.size() > cap) return full_set();
  }
  return c.s;
}

}  // namespace nmqi
