#include "nmqi/bath_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <sstream>

#include <Eigen/Sparse>

#include "nmqi/errors.hpp"

namespace nmqi {

namespace {

using Sparse = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

constexpr int kLevelBits = 4;
constexpr int kSlotBits = 8;
constexpr double kLeakThreshold = 0.01;

}  // namespace

std::string to_string(SumRule r) { return r == SumRule::Rescale ? "rescale" : "none"; }

SumRule sum_rule_from_string(const std::string& s) {
  if (s == "none") return SumRule::None;
  if (s == "rescale") return SumRule::Rescale;
  throw Error("unknown sum rule '" + s + "' (expected none or rescale)");
}

cplx BathDiscretization::alpha(double tau) const {
  cplx a = 0.0;
  for (const BathMode& m : modes) a += m.g * m.g * std::exp(-kI * m.omega * tau);
  return a;
}

double spectral_density(const CorrelationKernel& kernel, double omega) {
  if (!kernel.is_exponential()) throw Error("bath discretization needs an OU or exponential-sum kernel");
  double j = 0.0;
  for (const auto& [g, lam] : kernel.exponential_terms())
    j += (g / cplx(lam.real(), lam.imag() - omega)).real() / std::numbers::pi;
  return j;
}

double reconstruction_error(const BathDiscretization& bath, const CorrelationKernel& kernel, double t0, double t1,
                            int samples) {
  const double a0 = std::abs(kernel.at(0.0));
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double tau = t0 + (t1 - t0) * i / std::max(1, samples - 1);
    worst = std::max(worst, std::abs(bath.alpha(tau) - kernel.at(tau)) / a0);
  }
  return worst;
}

BathDiscretization discretize_kernel(const CorrelationKernel& kernel, const DiscretizeOptions& opts) {
  if (!kernel.is_exponential()) throw Error("bath discretization needs an OU or exponential-sum kernel");
  if (opts.modes < 2 || opts.modes > 255) throw Error("mode count must be in [2, 255]");
  const auto terms = kernel.exponential_terms();
  double slowest = std::numeric_limits<double>::infinity(), fastest = 0.0, shift = 0.0;
  for (const auto& [g, lam] : terms) {
    slowest = std::min(slowest, lam.real());
    fastest = std::max(fastest, lam.real());
    shift = std::max(shift, std::abs(lam.imag()));
  }
  BathDiscretization b;
  b.sum_rule = opts.sum_rule;
  b.omega_cutoff = opts.omega_cutoff > 0 ? opts.omega_cutoff : 8.0 * fastest + shift;
  const double wc = b.omega_cutoff;
  const double dw = 2.0 * wc / opts.modes;
  double total = 0.0;
  for (int k = 0; k < opts.modes; ++k) {
    const double w = -wc + (k + 0.5) * dw;
    const double j = spectral_density(kernel, w);
    if (j < -1e-14) throw Error("kernel spectrum is negative at omega = " + std::to_string(w));
    const double g2 = std::max(0.0, j) * dw;
    b.modes.push_back({w, std::sqrt(g2)});
    total += g2;
  }
  const double a0 = kernel.at(0.0).real();
  if (opts.sum_rule == SumRule::Rescale && total > 0) {
    const double f = std::sqrt(a0 / total);
    for (BathMode& m : b.modes) m.g *= f;
  }
  double sum = 0.0;
  for (const BathMode& m : b.modes) sum += m.g * m.g;
  ReconstructionReport& r = b.report;
  r.window_end = 5.0 / slowest;
  r.gate_start = std::numbers::pi / wc;
  r.sum_rule_error = std::abs(sum - a0) / a0;
  r.max_error = reconstruction_error(b, kernel, 0.0, r.window_end);
  r.gate_error = reconstruction_error(b, kernel, r.gate_start, r.window_end);
  if (r.gate_error > opts.gate_tolerance) {
    std::ostringstream os;
    os << "bath reconstruction error " << r.gate_error << " on tau in [" << r.gate_start << ", " << r.window_end
       << "] exceeds " << opts.gate_tolerance << "; use more modes or a wider window";
    throw WindowTooSmallError(os.str());
  }
  return b;
}

FockBasis::FockBasis(int levels, int modes, int n_max) : levels_(levels), modes_(modes), n_max_(n_max) {
  if (levels < 1 || levels > (1 << kLevelBits)) throw Error("too many system levels for the Fock basis");
  if (modes < 0 || modes > 255) throw Error("the Fock basis supports at most 255 modes");
  if (n_max < 0 || n_max > 7) throw Error("n_max must be in [0, 7]");
}

std::uint64_t FockBasis::key(int level, const std::vector<std::uint8_t>& modes) const {
  std::uint64_t k = static_cast<std::uint64_t>(level);
  for (std::size_t i = 0; i < modes.size(); ++i)
    k |= static_cast<std::uint64_t>(modes[i] + 1) << (kLevelBits + kSlotBits * i);
  return k;
}

void FockBasis::insert(std::uint64_t k) {
  index_.emplace(k, static_cast<std::uint32_t>(states_.size()));
  states_.push_back(k);
}

int FockBasis::level(std::size_t i) const { return static_cast<int>(states_[i] & ((1u << kLevelBits) - 1)); }

std::vector<std::uint8_t> FockBasis::mode_list(std::size_t i) const {
  std::vector<std::uint8_t> m;
  std::uint64_t k = states_[i] >> kLevelBits;
  while (k) {
    m.push_back(static_cast<std::uint8_t>((k & 0xff) - 1));
    k >>= kSlotBits;
  }
  return m;
}

int FockBasis::excitations(std::size_t i) const { return static_cast<int>(mode_list(i).size()); }

int FockBasis::occupation(std::size_t i, int k) const {
  const auto m = mode_list(i);
  return static_cast<int>(std::count(m.begin(), m.end(), static_cast<std::uint8_t>(k)));
}

std::int64_t FockBasis::find(int level, const std::vector<std::uint8_t>& modes) const {
  if (static_cast<int>(modes.size()) > n_max_) return -1;
  const auto it = index_.find(key(level, modes));
  return it == index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

namespace {

// Nonzero (to, from) pairs of a system operator.
std::vector<std::pair<int, int>> support(const Matrix& m) {
  std::vector<std::pair<int, int>> s;
  for (int j = 0; j < m.cols(); ++j)
    for (int i = 0; i < m.rows(); ++i)
      if (m(i, j) != 0.0) s.emplace_back(i, j);
  return s;
}

Matrix system_pattern(const SystemModel& model) {
  Matrix p = model.H0;
  for (const Drive& d : model.drives) p += d.op + d.op.adjoint();
  return p;
}

std::vector<std::uint8_t> with_mode(std::vector<std::uint8_t> m, int k) {
  m.insert(std::upper_bound(m.begin(), m.end(), static_cast<std::uint8_t>(k)), static_cast<std::uint8_t>(k));
  return m;
}

}  // namespace

void FockBasis::build(const SystemModel& model, const std::vector<int>& seed_levels, std::size_t cap) {
  states_.clear();
  index_.clear();
  const auto sys = support(system_pattern(model));
  const auto lsup = support(model.L);
  std::deque<std::uint32_t> queue;
  auto visit = [&](int level, const std::vector<std::uint8_t>& modes) {
    if (static_cast<int>(modes.size()) > n_max_) return;
    const std::uint64_t k = key(level, modes);
    if (index_.count(k)) return;
    if (states_.size() >= cap) {
      std::ostringstream os;
      os << "Fock basis exceeds the cap of " << cap << " states; lower n_max or the mode count";
      throw MemoryBudgetError(os.str());
    }
    insert(k);
    queue.push_back(static_cast<std::uint32_t>(states_.size() - 1));
  };
  for (int l : seed_levels) visit(l, {});
  while (!queue.empty()) {
    const std::uint32_t i = queue.front();
    queue.pop_front();
    const int l = level(i);
    const auto m = mode_list(i);
    for (const auto& [to, from] : sys)
      if (from == l) visit(to, m);
    for (const auto& [to, from] : lsup) {
      if (from == l && static_cast<int>(m.size()) < n_max_)
        for (int k = 0; k < modes_; ++k) visit(to, with_mode(m, k));  // L b_k^dag
      if (to == l)
        for (std::size_t p = 0; p < m.size(); ++p) {  // L^dag b_k
          if (p > 0 && m[p] == m[p - 1]) continue;
          auto r = m;
          r.erase(r.begin() + static_cast<std::ptrdiff_t>(p));
          visit(from, r);
        }
    }
  }
}

namespace {

struct TotalHamiltonian {
  Sparse fixed;
  std::vector<Sparse> drive_ops;  // one per drive; the adjoint is applied too
  std::vector<Sparse> drive_adj;
  const SystemModel* model = nullptr;

  void apply(double t, const Vector& x, Vector& y) const {
    y.noalias() = fixed * x;
    for (std::size_t d = 0; d < drive_ops.size(); ++d) {
      const Drive& dr = model->drives[d];
      const cplx f = dr.amplitude * std::exp(-kI * dr.frequency * t);
      y.noalias() += f * (drive_ops[d] * x);
      y.noalias() += std::conj(f) * (drive_adj[d] * x);
    }
  }
};

Sparse system_term(const FockBasis& basis, const Matrix& op) {
  std::vector<Eigen::Triplet<cplx>> trip;
  const auto sup = support(op);
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const int l = basis.level(i);
    const auto m = basis.mode_list(i);
    for (const auto& [to, from] : sup) {
      if (from != l) continue;
      const std::int64_t j = basis.find(to, m);
      if (j >= 0) trip.emplace_back(static_cast<int>(j), static_cast<int>(i), op(to, from));
    }
  }
  Sparse s(static_cast<Eigen::Index>(basis.size()), static_cast<Eigen::Index>(basis.size()));
  s.setFromTriplets(trip.begin(), trip.end());
  return s;
}

TotalHamiltonian build_hamiltonian(const SystemModel& model, const BathDiscretization& bath, const FockBasis& basis) {
  const Eigen::Index n = static_cast<Eigen::Index>(basis.size());
  std::vector<Eigen::Triplet<cplx>> trip;
  const auto h0 = support(model.H0);
  const auto lsup = support(model.L);
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const int col = static_cast<int>(i);
    const int l = basis.level(i);
    const auto m = basis.mode_list(i);
    double bath_energy = 0.0;
    for (std::uint8_t k : m) bath_energy += bath.modes[k].omega;
    if (bath_energy != 0.0) trip.emplace_back(col, col, bath_energy);
    for (const auto& [to, from] : h0) {
      if (from != l) continue;
      const std::int64_t j = basis.find(to, m);
      if (j >= 0) trip.emplace_back(static_cast<int>(j), col, model.H0(to, from));
    }
    for (const auto& [to, from] : lsup) {
      if (from == l && static_cast<int>(m.size()) < basis.n_max()) {
        // L (x) sum_k g_k b_k^dag
        for (int k = 0; k < basis.modes(); ++k) {
          const auto r = with_mode(m, k);
          const std::int64_t j = basis.find(to, r);
          if (j < 0) continue;
          const double nk = static_cast<double>(std::count(r.begin(), r.end(), static_cast<std::uint8_t>(k)));
          trip.emplace_back(static_cast<int>(j), col, model.L(to, from) * bath.modes[k].g * std::sqrt(nk));
        }
      }
      if (to == l) {
        // L^dag (x) sum_k g_k b_k
        for (std::size_t p = 0; p < m.size(); ++p) {
          if (p > 0 && m[p] == m[p - 1]) continue;
          const int k = m[p];
          const double nk = static_cast<double>(std::count(m.begin(), m.end(), m[p]));
          auto r = m;
          r.erase(r.begin() + static_cast<std::ptrdiff_t>(p));
          const std::int64_t j = basis.find(from, r);
          if (j < 0) continue;
          trip.emplace_back(static_cast<int>(j), col, std::conj(model.L(to, from)) * bath.modes[k].g * std::sqrt(nk));
        }
      }
    }
  }
  TotalHamiltonian h;
  h.model = &model;
  h.fixed.resize(n, n);
  h.fixed.setFromTriplets(trip.begin(), trip.end());
  for (const Drive& d : model.drives) {
    h.drive_ops.push_back(system_term(basis, d.op));
    h.drive_adj.push_back(system_term(basis, d.op.adjoint()));
  }
  return h;
}

// exp(-i h H) v by Lanczos with full reorthogonalisation. Returns false when the
// Krylov error estimate misses the tolerance.
bool lanczos_step(const TotalHamiltonian& H, double t_mid, double h, Vector& v, int kdim, double tol) {
  const double beta0 = v.norm();
  if (beta0 == 0.0) return true;
  const Eigen::Index n = v.size();
  kdim = static_cast<int>(std::min<Eigen::Index>(kdim, n));
  std::vector<Vector> V;
  V.reserve(kdim + 1);
  V.push_back(v / beta0);
  std::vector<double> alpha, beta;
  Vector w(n);
  for (int j = 0; j < kdim; ++j) {
    H.apply(t_mid, V[j], w);
    const double a = V[j].dot(w).real();
    alpha.push_back(a);
    for (const Vector& q : V) w -= q * q.dot(w);
    for (const Vector& q : V) w -= q * q.dot(w);
    const double b = w.norm();
    const int m = j + 1;
    // exp(-i h T) e1 for the current tridiagonal block.
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) T(i, i) = alpha[i];
    for (int i = 0; i + 1 < m; ++i) T(i, i + 1) = T(i + 1, i) = beta[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    const Eigen::VectorXcd phase = (-kI * h * es.eigenvalues().cast<cplx>()).array().exp();
    const Eigen::VectorXcd c = es.eigenvectors().cast<cplx>() * phase.cwiseProduct(es.eigenvectors().row(0).transpose().cast<cplx>());
    const double err = b * std::abs(c[m - 1]);
    if (err < tol || b < 1e-14) {
      Vector out = Vector::Zero(n);
      for (int i = 0; i < m; ++i) out += c[i] * V[i];
      v = beta0 * out;
      return true;
    }
    beta.push_back(b);
    V.push_back(w / b);
  }
  return false;
}

void propagate(const TotalHamiltonian& H, double t, double h, Vector& v, int kdim, double tol, int depth = 0) {
  Vector trial = v;
  if (lanczos_step(H, t + 0.5 * h, h, trial, kdim, tol)) {
    v = trial;
    return;
  }
  if (depth > 12) throw Error("Krylov propagation did not converge; reduce the time step");
  propagate(H, t, 0.5 * h, v, kdim, tol, depth + 1);
  propagate(H, t + 0.5 * h, 0.5 * h, v, kdim, tol, depth + 1);
}

}  // namespace

FullSolveResult full_solve(const SystemModel& model, const BathDiscretization& bath, const Vector& psi0,
                           const TimeGrid& grid, const FullSolveOptions& opts) {
  model.validate();
  if (psi0.size() != model.dim) throw Error("initial state has the wrong dimension");
  if (std::abs(psi0.norm() - 1.0) > 1e-8) throw Error("initial state must be normalised");
  const int N = model.dim;
  std::vector<int> seeds;
  for (int l = 0; l < N; ++l)
    if (psi0[l] != 0.0) seeds.push_back(l);
  FockBasis basis(N, static_cast<int>(bath.modes.size()), opts.n_max);
  basis.build(model, seeds, opts.basis_cap);
  const TotalHamiltonian H = build_hamiltonian(model, bath, basis);

  // Per-state bookkeeping: bath configuration group, excitation count, and
  // whether L b^dag can leave the truncated space from here.
  const std::size_t dim = basis.size();
  std::vector<int> group(dim), exc(dim);
  std::vector<char> open(dim, 0);
  std::vector<char> l_source(N, 0);
  for (const auto& [to, from] : support(model.L)) l_source[from] = 1;
  std::unordered_map<std::uint64_t, int> groups;
  for (std::size_t i = 0; i < dim; ++i) {
    const auto m = basis.mode_list(i);
    std::uint64_t g = 0;
    for (std::uint8_t k : m) g = g * 256 + (k + 1u);
    const auto it = groups.emplace(g, static_cast<int>(groups.size())).first;
    group[i] = it->second;
    exc[i] = basis.level(i) + static_cast<int>(m.size());
    open[i] = static_cast<int>(m.size()) == opts.n_max && l_source[basis.level(i)];
  }

  Vector psi = Vector::Zero(static_cast<Eigen::Index>(dim));
  for (int l = 0; l < N; ++l)
    if (psi0[l] != 0.0) psi[basis.find(l, {})] = psi0[l];

  FullSolveResult res;
  res.basis_size = dim;
  res.certified_until = grid.t_max();
  bool leaked = false;
  const int every = std::max(1, opts.sample_every);
  auto observe = [&](int step) {
    const double t = grid.time(step);
    double ex = 0.0, lk = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double p = std::norm(psi[static_cast<Eigen::Index>(i)]);
      ex += p * exc[i];
      if (open[i]) lk += p;
    }
    if (!leaked && lk > kLeakThreshold) {
      leaked = true;
      res.certified_until = step > 0 ? grid.time(step - 1) : 0.0;
      std::ostringstream os;
      os << "truncation leak " << lk << " exceeds 1% at t = " << t << "; results are certified up to t = "
         << res.certified_until;
      res.reduced.warnings.push_back(os.str());
    }
    if (step % every != 0 && step != grid.n_steps) return;
    // Partial trace: columns of amp are the system amplitudes per bath configuration.
    Matrix amp = Matrix::Zero(N, static_cast<Eigen::Index>(groups.size()));
    for (std::size_t i = 0; i < dim; ++i) amp(basis.level(i), group[i]) = psi[static_cast<Eigen::Index>(i)];
    const Matrix rho = amp * amp.adjoint();
    res.reduced.times.push_back(t);
    res.reduced.states.push_back(rho);
    res.reduced.min_eigenvalue = std::min(res.reduced.min_eigenvalue, min_eigenvalue(rho));
    res.norm.push_back(psi.norm());
    res.excitation.push_back(ex);
    res.leak.push_back(lk);
  };
  res.reduced.min_eigenvalue = 1.0;
  observe(0);
  for (int s = 0; s < grid.n_steps; ++s) {
    propagate(H, grid.time(s), grid.dt, psi, opts.krylov_dim, opts.krylov_tol);
    observe(s + 1);
  }
  return res;
}

}  // namespace nmqi
