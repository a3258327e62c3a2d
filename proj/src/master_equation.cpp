#include "nmqi/master_equation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nmqi/errors.hpp"

namespace nmqi {

namespace {

using CVec = std::vector<cplx>;

std::vector<double> trapezoid_weights(int v, double dt) {
  std::vector<double> w(static_cast<std::size_t>(v) + 1, dt);
  w.front() *= 0.5;
  w.back() *= 0.5;
  if (v == 0) w[0] = 0.0;
  return w;
}

}  // namespace

Matrix RSuperop::apply(const Matrix& rho) const {
  Matrix r = rho * obar0.adjoint();
  for (const auto& [x, y] : pairs) r.noalias() += x * rho * y.adjoint();
  return r;
}

RSuperop assemble_R(const Hierarchy& h) {
  const int N = h.model().dim;
  const int v = h.index();
  const int d0 = h.dim(0), d1 = h.dim(1), d2 = h.dim(2);
  RSuperop r;
  r.obar0 = h.Obar0();
  if (v == 0 || d1 == 0) return r;

  const auto& E0 = h.bases()[0];
  const auto& E1 = h.bases()[1];
  const KernelQuadrature& q = h.quadrature();
  const auto wt = trapezoid_weights(v, h.grid().dt);
  const std::size_t P = static_cast<std::size_t>(v) + 1;

  // G(s1) = int alpha(s1, s2) O0(s2).
  CVec g(P * d0);
  q.convolve(v, h.o0(0), d0, g.data());

  // Second term.
  for (int a = 0; a < d0; ++a) {
    Matrix y = Matrix::Zero(N, N);
    for (int b = 0; b < d1; ++b) {
      cplx k = 0.0;
      for (std::size_t i = 0; i < P; ++i) k += wt[i] * g[i * d0 + a] * std::conj(h.obar1(static_cast<int>(i))[b]);
      y += std::conj(k) * E1[b];
    }
    r.pairs.emplace_back(E0[a], y);
  }

  // Third term: W(s2) = int O1(s2, s3) rho G(s3)^dag, then alpha-convolved.
  const int c3 = d1 * d0;
  CVec w(P * c3, 0.0), u(P * c3);
#pragma omp parallel for schedule(static)
  for (int s2 = 0; s2 <= v; ++s2) {
    cplx* dst = w.data() + static_cast<std::size_t>(s2) * c3;
    for (int s3 = 0; s3 <= v; ++s3) {
      const cplx* o = h.o1(s2, s3);
      const cplx* gs = g.data() + static_cast<std::size_t>(s3) * d0;
      for (int a = 0; a < d1; ++a) {
        const cplx oa = wt[s3] * o[a];
        for (int b = 0; b < d0; ++b) dst[a * d0 + b] += oa * std::conj(gs[b]);
      }
    }
  }
  q.convolve(v, w.data(), c3, u.data());
  for (int a = 0; a < d1; ++a) {
    for (int b = 0; b < d0; ++b) {
      Matrix y = Matrix::Zero(N, N);
      for (int c = 0; c < d1; ++c) {
        cplx k = 0.0;
        for (std::size_t i = 0; i < P; ++i)
          k += wt[i] * u[i * c3 + a * d0 + b] * std::conj(h.obar1(static_cast<int>(i))[c]);
        y += std::conj(k) * E1[c] * E0[b];
      }
      r.pairs.emplace_back(E1[a], y);
    }
  }
  if (d2 == 0) return r;

  const auto& E2 = h.bases()[2];
  // Fourth term: sum over (s1, s2) of G(s1) G(s2) rho Obar2(s1, s2)^dag.
  const int c4 = d0 * d2;
  CVec pbc(P * c4, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i <= v; ++i) {
    cplx* dst = pbc.data() + static_cast<std::size_t>(i) * c4;
    for (int j = 0; j <= v; ++j) {
      const cplx* ob = h.obar2(i, j);
      const cplx* gj = g.data() + static_cast<std::size_t>(j) * d0;
      for (int b = 0; b < d0; ++b)
        for (int c = 0; c < d2; ++c) dst[b * d2 + c] += wt[j] * gj[b] * std::conj(ob[c]);
    }
  }
  for (int a = 0; a < d0; ++a) {
    for (int b = 0; b < d0; ++b) {
      Matrix y = Matrix::Zero(N, N);
      for (int c = 0; c < d2; ++c) {
        cplx k = 0.0;
        for (std::size_t i = 0; i < P; ++i) k += wt[i] * g[i * d0 + a] * pbc[i * c4 + b * d2 + c];
        y += std::conj(k) * E2[c];
      }
      r.pairs.emplace_back(E0[a] * E0[b], y);
    }
  }

  // Fifth term: H(s1, s2) = double alpha-convolution of O1.
  const std::size_t row = P * d1;
  CVec h1(P * row), hh(P * row);
#pragma omp parallel for schedule(static)
  for (int s3 = 0; s3 <= v; ++s3) q.convolve(v, h.o1(s3, 0), d1, h1.data() + s3 * row);
  q.convolve(v, h1.data(), static_cast<int>(row), hh.data());
  for (int a = 0; a < d1; ++a) {
    Matrix y = Matrix::Zero(N, N);
    for (int c = 0; c < d2; ++c) {
      cplx k = 0.0;
      for (int i = 0; i <= v; ++i)
        for (int j = 0; j <= v; ++j)
          k += wt[i] * wt[j] * hh[i * row + static_cast<std::size_t>(j) * d1 + a] * std::conj(h.obar2(i, j)[c]);
      y += std::conj(k) * E2[c];
    }
    r.pairs.emplace_back(E1[a], y);
  }
  return r;
}

Matrix compute_R(const Hierarchy& h, double t, const Matrix& rho) {
  if (std::abs(t - h.time()) > 1e-9 * (1.0 + std::abs(t))) {
    std::ostringstream os;
    os << "R requested at t = " << t << " but the hierarchy is at t = " << h.time();
    throw TimeMismatchError(os.str());
  }
  return assemble_R(h).apply(rho);
}

Matrix master_rhs(const SystemModel& m, double t, const Matrix& rho, const RSuperop& r) {
  const Matrix H = m.hamiltonian_at(t);
  return -kI * (H * rho - rho * H) + dissipator(m, rho, r);
}

Matrix dissipator(const SystemModel& m, const Matrix& rho, const RSuperop& r) {
  const Matrix R = r.apply(rho);
  const Matrix x = m.L * R - R * m.L;
  return x + x.adjoint();
}

double trace_distance(const Matrix& a, const Matrix& b) {
  const Matrix d = a - b;
  const Matrix hd = 0.5 * (d + d.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(hd, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

double min_eigenvalue(const Matrix& rho) {
  const Matrix hr = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(hr, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Matrix pure_state(const Vector& psi) { return psi * psi.adjoint(); }

namespace {

void check_initial(const SystemModel& m, const Matrix& rho0) {
  if (rho0.rows() != m.dim || rho0.cols() != m.dim) throw Error("initial state has the wrong dimension");
  if (std::abs(rho0.trace() - 1.0) > 1e-8) throw Error("initial state must have unit trace");
  if (!is_hermitian(rho0, 1e-10)) throw Error("initial state must be hermitian");
  if (min_eigenvalue(rho0) < -1e-10) throw Error("initial state must be positive semidefinite");
}

// exp(-i dt H) for hermitian H.
Matrix unitary_step(const Matrix& H, double dt) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (H + H.adjoint()));
  const Eigen::VectorXcd phase = (-kI * dt * es.eigenvalues().cast<cplx>()).array().exp();
  return es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint();
}

void record(DensityTrajectory& tr, double t, const Matrix& rho, bool keep) {
  const double me = min_eigenvalue(rho);
  tr.min_eigenvalue = std::min(tr.min_eigenvalue, me);
  if (me < -1e-4 && tr.warnings.empty()) {
    std::ostringstream os;
    os << "positivity violated at t = " << t << " (min eigenvalue " << me << "); the grid may be too coarse";
    tr.warnings.push_back(os.str());
  }
  if (keep) {
    tr.times.push_back(t);
    tr.states.push_back(rho);
  }
}

}  // namespace

DensityTrajectory evolve(const SystemModel& model, const CorrelationKernel& kernel, const Matrix& rho0,
                         const TimeGrid& grid, const EvolveOptions& opts) {
  check_initial(model, rho0);
  Hierarchy h(model, kernel, grid, opts.hierarchy);
  const int every = std::max(1, opts.sample_every);
  const double dt = grid.dt;
  DensityTrajectory tr;
  tr.min_eigenvalue = min_eigenvalue(rho0);
  Matrix rho = rho0;
  record(tr, 0.0, rho, true);
  RSuperop r0 = assemble_R(h);
  const bool interaction = opts.stepper == Stepper::InteractionHeun;
  const bool driven = !model.drives.empty();
  Matrix U = interaction ? unitary_step(model.hamiltonian_at(0.5 * dt), dt) : Matrix();
  for (int m = 0; m < grid.n_steps; ++m) {
    if (interaction) {
      if (driven && m > 0) U = unitary_step(model.hamiltonian_at(grid.time(m) + 0.5 * dt), dt);
      const Matrix k0 = dissipator(model, rho, r0);
      h.predict();
      const RSuperop r1 = assemble_R(h);
      const Matrix trial = U * (rho + dt * k0) * U.adjoint();
      const Matrix k1 = dissipator(model, trial, r1);
      h.correct();
      rho = U * (rho + 0.5 * dt * k0) * U.adjoint() + 0.5 * dt * k1;
    } else {
      const Matrix k0 = master_rhs(model, grid.time(m), rho, r0);
      h.predict();
      const RSuperop r1 = assemble_R(h);
      const Matrix trial = rho + dt * k0;
      const Matrix k1 = master_rhs(model, grid.time(m + 1), trial, r1);
      h.correct();
      rho += 0.5 * dt * (k0 + k1);
    }
    r0 = assemble_R(h);
    if (opts.on_step) opts.on_step(h);
    record(tr, grid.time(m + 1), rho, (m + 1) % every == 0 || m + 1 == grid.n_steps);
  }
  return tr;
}

DensityTrajectory lindblad_evolve(const SystemModel& model, double gamma, const Matrix& rho0,
                                  const TimeGrid& grid, double lamb, int sample_every) {
  if (gamma < 0) throw Error("Lindblad rate must be non-negative");
  check_initial(model, rho0);
  const Matrix& L = model.L;
  const Matrix LdL = L.adjoint() * L;
  auto rhs = [&](double t, const Matrix& rho) {
    const Matrix H = model.hamiltonian_at(t) + lamb * LdL;
    return Matrix(-kI * (H * rho - rho * H) +
                  gamma * (2.0 * L * rho * L.adjoint() - LdL * rho - rho * LdL));
  };
  const int every = std::max(1, sample_every);
  const double dt = grid.dt;
  DensityTrajectory tr;
  tr.min_eigenvalue = min_eigenvalue(rho0);
  Matrix rho = rho0;
  record(tr, 0.0, rho, true);
  for (int m = 0; m < grid.n_steps; ++m) {
    const double t = grid.time(m);
    const Matrix k1 = rhs(t, rho);
    const Matrix k2 = rhs(t + 0.5 * dt, rho + 0.5 * dt * k1);
    const Matrix k3 = rhs(t + 0.5 * dt, rho + 0.5 * dt * k2);
    const Matrix k4 = rhs(t + dt, rho + dt * k3);
    rho += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    record(tr, grid.time(m + 1), rho, (m + 1) % every == 0 || m + 1 == grid.n_steps);
  }
  return tr;
}

DensityTrajectory lindblad_for_kernel(const SystemModel& model, const CorrelationKernel& kernel,
                                      const Matrix& rho0, const TimeGrid& grid, int sample_every) {
  const cplx c = kernel.markov_rate();
  return lindblad_evolve(model, c.real(), rho0, grid, c.imag(), sample_every);
}

SteadyState trailing_average(const DensityTrajectory& tr, double window, double tol) {
  SteadyState s;
  if (tr.times.empty()) return s;
  const double t0 = tr.times.back() - window;
  const int dim = static_cast<int>(tr.states.front().rows());
  const int levels = std::min(dim, 4);
  double sum[4] = {0, 0, 0, 0}, sq[4] = {0, 0, 0, 0};
  int count = 0;
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    if (tr.times[i] < t0 - 1e-12) continue;
    ++count;
    for (int k = 0; k < levels; ++k) {
      const double p = tr.population(i, k + 1);
      sum[k] += p;
      sq[k] += p * p;
    }
  }
  double worst = 0.0;
  for (int k = 0; k < levels; ++k) {
    s.p[k] = sum[k] / count;
    const double var = std::max(0.0, sq[k] / count - s.p[k] * s.p[k]);
    worst = std::max(worst, std::sqrt(var));
    if (k == 3) s.std4 = std::sqrt(var);
  }
  s.converged = worst <= tol;
  return s;
}

}  // namespace nmqi
