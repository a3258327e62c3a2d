#include "nmqi/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nmqi/errors.hpp"

namespace nmqi {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

}  // namespace

Matrix SystemModel::hamiltonian_at(double t) const {
  Matrix h = H0;
  for (const Drive& d : drives) {
    const Matrix term = d.amplitude * std::exp(-kI * d.frequency * t) * d.op;
    h += term + term.adjoint();
  }
  return h;
}

int SystemModel::truncation_order() const { return std::clamp(dim - 2, 0, 2); }

std::vector<Matrix> SystemModel::hamiltonian_terms() const {
  std::vector<Matrix> terms{H0};
  for (const Drive& d : drives) {
    terms.push_back(d.op);
    terms.push_back(d.op.adjoint());
  }
  return terms;
}

std::vector<cplx> SystemModel::hamiltonian_scalars(double t) const {
  std::vector<cplx> s{1.0};
  for (const Drive& d : drives) {
    const cplx e = d.amplitude * std::exp(-kI * d.frequency * t);
    s.push_back(e);
    s.push_back(std::conj(e));
  }
  return s;
}

HierarchyGenerators SystemModel::generators() const {
  return HierarchyGenerators{L, hamiltonian_terms(), truncation_order()};
}

void SystemModel::validate() const {
  if (dim < 2 || dim > kMaxLevels)
    throw Error("model dimension must be in [2, " + std::to_string(kMaxLevels) + "], got " +
                std::to_string(dim));
  auto square = [&](const Matrix& m, const char* what) {
    if (m.rows() != dim || m.cols() != dim)
      throw Error(std::string(what) + " must be " + std::to_string(dim) + "x" + std::to_string(dim));
  };
  square(H0, "H0");
  square(L, "L");
  for (const Drive& d : drives) square(d.op, "drive operator");
  if (!is_hermitian(H0, 1e-12)) throw Error("H0 must be hermitian");
}

SystemModel build_cascade(const std::vector<double>& omega, const std::vector<double>& kappa) {
  if (omega.size() < 2 || kappa.size() + 1 != omega.size())
    throw Error("cascade needs N energies and N-1 couplings");
  SystemModel m;
  m.kind = "cascade";
  m.dim = static_cast<int>(omega.size());
  m.H0 = Matrix::Zero(m.dim, m.dim);
  m.L = Matrix::Zero(m.dim, m.dim);
  for (int i = 0; i < m.dim; ++i) {
    m.H0(i, i) = omega[i];
    m.labels.push_back(std::to_string(i + 1));
  }
  for (int i = 0; i + 1 < m.dim; ++i) m.L(i, i + 1) = kappa[i];
  m.parameters = {{"model", "cascade"}, {"omega", fmt_list(omega)}, {"kappa", fmt_list(kappa)}};
  return m;
}

SystemModel build_interference(double omega1_rabi, double omega2_rabi, double mu, double kappa,
                               const InterferenceConvention& conv) {
  SystemModel m;
  m.kind = "interference";
  m.dim = 4;
  const double w3 = conv.omega2 + mu + conv.delta3;
  const double w4 = w3 + 1.0;
  m.H0 = Matrix::Zero(4, 4);
  m.H0.diagonal() << conv.omega1, conv.omega2, w3, w4;
  m.drives = {Drive{outer(4, 3, 2), omega1_rabi, mu}, Drive{outer(4, 4, 2), omega2_rabi, mu}};
  m.L = outer(4, 1, 3) + kappa * outer(4, 1, 4);
  m.labels = {"1", "2", "3", "4"};
  m.parameters = {{"model", "interference"},
                  {"Omega1", fmt(omega1_rabi)},
                  {"Omega2", fmt(omega2_rabi)},
                  {"mu", fmt(mu)},
                  {"kappa", fmt(kappa)},
                  {"omega", fmt_list({conv.omega1, conv.omega2, w3, w4})},
                  {"convention", "omega1=" + fmt(conv.omega1) + " omega2=" + fmt(conv.omega2) +
                                     " delta3=" + fmt(conv.delta3) + " omega4-omega3=1"}};
  return m;
}

SystemModel build_custom(const Matrix& H0, const Matrix& L, std::vector<Drive> drives) {
  SystemModel m;
  m.kind = "custom";
  m.dim = static_cast<int>(H0.rows());
  m.H0 = H0;
  m.L = L;
  m.drives = std::move(drives);
  for (int i = 0; i < m.dim; ++i) m.labels.push_back(std::to_string(i + 1));
  m.parameters = {{"model", "custom"}};
  m.validate();
  return m;
}

ForbiddenReport verify_forbidden(const SystemModel& m, const std::vector<OperatorBasis>& subspaces,
                                 double tol) {
  ForbiddenReport r;
  const auto nil = nilpotency_index(m.L);
  if (!nil || *nil > m.dim) {
    r.pass = false;
    r.diagnostics.push_back("coupling operator is not nilpotent: L^" + std::to_string(m.dim) +
                            " != 0");
  }
  const int K = static_cast<int>(subspaces.size()) - 1;
  for (int j = 0; j <= K; ++j) {
    for (int k = 0; k <= K; ++k) {
      if (j + k <= m.dim - 2) continue;
      ForbiddenEntry e{j, k, 0.0};
      for (const Matrix& a : subspaces[j].elements())
        for (const Matrix& b : subspaces[k].elements()) e.max_product = std::max(e.max_product, max_abs(a * b));
      if (e.max_product >= tol) {
        r.pass = false;
        std::ostringstream os;
        os << "S" << j << " S" << k << " products reach " << e.max_product;
        r.diagnostics.push_back(os.str());
      }
      r.entries.push_back(e);
    }
  }
  return r;
}

ForbiddenReport verify_forbidden(const SystemModel& m, double tol) {
  return verify_forbidden(m, detect_invariant_subspaces(m.generators()), tol);
}

}  // namespace nmqi
