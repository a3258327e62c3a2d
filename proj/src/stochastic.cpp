#include "nmqi/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "nmqi/errors.hpp"

namespace nmqi {

namespace {

using CVec = std::vector<cplx>;
using RowMajor = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kOverflowNorm = 1e6;

std::vector<double> noise_weights(int m, double dt) {
  std::vector<double> w(static_cast<std::size_t>(m) + 1, dt);
  w.front() *= 0.5;
  w.back() *= 0.5;
  if (m == 0) w[0] = 0.0;
  return w;
}

std::vector<int> sample_indices(const TimeGrid& g, int every) {
  every = std::max(1, every);
  std::vector<int> idx;
  for (int i = 0; i <= g.n_steps; ++i)
    if (i % every == 0 || i == g.n_steps) idx.push_back(i);
  return idx;
}

// Per-sample sums of P and |P|_F^2, plus the Novikov probe sums.
struct Accumulator {
  std::vector<Matrix> sum;
  std::vector<double> sumsq;
  std::vector<Matrix> probe_lhs, probe_rhs;  // sums of z* P and P Obar^dag
  std::vector<Eigen::MatrixXd> probe_re2, probe_im2;  // sums of squared parts of the difference
  int count = 0;
  int excluded = 0;

  Accumulator(int samples, int probes, int n) {
    sum.assign(samples, Matrix::Zero(n, n));
    sumsq.assign(samples, 0.0);
    probe_lhs.assign(probes, Matrix::Zero(n, n));
    probe_rhs.assign(probes, Matrix::Zero(n, n));
    probe_re2.assign(probes, Eigen::MatrixXd::Zero(n, n));
    probe_im2.assign(probes, Eigen::MatrixXd::Zero(n, n));
  }

  void add_state(int k, const Vector& psi) {
    const Matrix p = psi * psi.adjoint();
    sum[k] += p;
    sumsq[k] += p.squaredNorm();
  }

  void add_probe(int k, const Matrix& lhs, const Matrix& rhs) {
    probe_lhs[k] += lhs;
    probe_rhs[k] += rhs;
    const Matrix d = lhs - rhs;
    probe_re2[k] += d.real().cwiseAbs2();
    probe_im2[k] += d.imag().cwiseAbs2();
  }

  void merge(const Accumulator& o) {
    for (std::size_t k = 0; k < sum.size(); ++k) {
      sum[k] += o.sum[k];
      sumsq[k] += o.sumsq[k];
    }
    for (std::size_t k = 0; k < probe_lhs.size(); ++k) {
      probe_lhs[k] += o.probe_lhs[k];
      probe_rhs[k] += o.probe_rhs[k];
      probe_re2[k] += o.probe_re2[k];
      probe_im2[k] += o.probe_im2[k];
    }
    count += o.count;
    excluded += o.excluded;
  }
};

double part_sigma(double mean, double mean_sq, int count) {
  const double var = std::max(0.0, mean_sq - mean * mean) * count / std::max(1, count - 1);
  const double se = std::sqrt(var / count);
  if (se > 0) return std::abs(mean) / se;
  return mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

EnsembleResult finish(const Accumulator& acc, const TimeGrid& grid, const std::vector<int>& samples,
                      const std::vector<int>& probes) {
  if (acc.count < 2) throw Error("ensemble needs at least two finite trajectories");
  EnsembleResult r;
  r.count = acc.count;
  r.excluded = acc.excluded;
  const double M = acc.count;
  r.mean_rho.min_eigenvalue = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const Matrix mean = acc.sum[k] / M;
    r.mean_rho.times.push_back(grid.time(samples[k]));
    r.mean_rho.states.push_back(mean);
    r.mean_rho.min_eigenvalue = std::min(r.mean_rho.min_eigenvalue, min_eigenvalue(mean));
    // Delete-one jackknife of a mean, in closed form.
    const double ss = std::max(0.0, acc.sumsq[k] - M * mean.squaredNorm());
    r.stderr.push_back(std::sqrt(ss / (M * (M - 1.0))));
  }
  if (acc.excluded > 0)
    r.mean_rho.warnings.push_back(std::to_string(acc.excluded) + " trajectories exceeded |psi| = 1e6 and were excluded");
  NovikovReport& nv = r.novikov;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    const Matrix d = (acc.probe_lhs[k] - acc.probe_rhs[k]) / M;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      for (Eigen::Index j = 0; j < d.cols(); ++j) {
        worst = std::max(worst, part_sigma(d(i, j).real(), acc.probe_re2[k](i, j) / M, acc.count));
        worst = std::max(worst, part_sigma(d(i, j).imag(), acc.probe_im2[k](i, j) / M, acc.count));
      }
    nv.times.push_back(grid.time(probes[k]));
    nv.sigma.push_back(worst);
    nv.max_sigma = std::max(nv.max_sigma, worst);
    nv.max_side = std::max({nv.max_side, max_abs(acc.probe_lhs[k] / M), max_abs(acc.probe_rhs[k] / M)});
  }
  return r;
}

void check_state(const SystemModel& model, const Vector& psi0) {
  if (psi0.size() != model.dim) throw Error("initial state has the wrong dimension");
  if (std::abs(psi0.norm() - 1.0) > 1e-8) throw Error("initial state must be normalised");
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

NoiseGenerator::NoiseGenerator(const CorrelationKernel& kernel, const TimeGrid& grid, std::uint64_t seed)
    : grid_(grid), seed_(seed) {
  const CovarianceFactor f = factor_covariance(noise_covariance(kernel, grid), kernel.at(0.0).real());
  factor_ = f.factor;
  jitter_ = f.jitter;
}

void NoiseGenerator::fill(std::uint64_t index, cplx* out) const {
  const int n = grid_.points();
  std::mt19937_64 rng(splitmix64(seed_ ^ splitmix64(index)));
  std::normal_distribution<double> normal;
  Vector xi(n);
  const double s = std::sqrt(0.5);
  for (int i = 0; i < n; ++i) {
    const double re = normal(rng);
    const double im = normal(rng);
    xi[i] = cplx(s * re, s * im);
  }
  Eigen::Map<Vector> z(out, n);
  // z = A xi carries M[z_t z*_s] = alpha(t, s); the stored process is its conjugate.
  z.noalias() = (factor_.triangularView<Eigen::Lower>() * xi).conjugate();
}

NoiseRealization NoiseGenerator::operator()(std::uint64_t index) const {
  NoiseRealization r{grid_, CVec(grid_.points())};
  fill(index, r.z_star.data());
  return r;
}

std::vector<NoiseRealization> sample_noise(const CorrelationKernel& kernel, const TimeGrid& grid,
                                           std::uint64_t seed, int count) {
  const NoiseGenerator gen(kernel, grid, seed);
  std::vector<NoiseRealization> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) out.push_back(gen(static_cast<std::uint64_t>(k)));
  return out;
}

ObarTape::ObarTape(const Hierarchy& h) : grid_(h.grid()), bases_(h.bases()) {
  for (int k = 0; k <= h.order(); ++k) d_[k] = h.dim(k);
}

void ObarTape::record(const Hierarchy& h) {
  const int v = h.index();
  if (ob0_.empty() && v > 0) {
    ob0_.emplace_back(d_[0], 0.0);
    ob1_.emplace_back(static_cast<std::size_t>(d_[1]), 0.0);
    ob2_.emplace_back(static_cast<std::size_t>(d_[2]), 0.0);
  }
  if (v != size()) throw Error("tape expects grid index " + std::to_string(size()) + ", got " + std::to_string(v));
  ob0_.emplace_back(h.obar0(), h.obar0() + d_[0]);
  ob1_.emplace_back(h.obar1(0), h.obar1(0) + static_cast<std::size_t>(v + 1) * d_[1]);
  ob2_.emplace_back(h.obar2(0, 0), h.obar2(0, 0) + tri_size(v + 1) * d_[2]);
}

Matrix ObarTape::contract(int m, const cplx* z) const {
  Vector c0 = Eigen::Map<const Vector>(obar0(m), d_[0]);
  Matrix out = bases_[0].reconstruct(c0);
  if (m == 0 || d_[1] == 0) return out;
  const auto w = noise_weights(m, grid_.dt);
  Vector c1 = Vector::Zero(d_[1]);
  for (int s1 = 0; s1 <= m; ++s1) c1 += (w[s1] * z[s1]) * Eigen::Map<const Vector>(obar1(m, s1), d_[1]);
  out += bases_[1].reconstruct(c1);
  if (d_[2] == 0) return out;
  Vector c2 = Vector::Zero(d_[2]);
  for (int s1 = 0; s1 <= m; ++s1)
    for (int s2 = 0; s2 <= m; ++s2)
      c2 += (w[s1] * w[s2] * z[s1] * z[s2]) * Eigen::Map<const Vector>(obar2(m, s1, s2), d_[2]);
  out += bases_[2].reconstruct(c2);
  return out;
}

ObarTape record_tape(const SystemModel& model, const CorrelationKernel& kernel, const TimeGrid& grid,
                     const HierarchyOptions& opts) {
  Hierarchy h(model, kernel, grid, opts);
  ObarTape tape(h);
  tape.record(h);
  while (h.committed_index() < grid.n_steps) {
    h.step();
    tape.record(h);
  }
  return tape;
}

QsdPath qsd_trajectory(const SystemModel& model, const ObarTape& tape, const NoiseRealization& noise,
                       const Vector& psi0) {
  check_state(model, psi0);
  const TimeGrid& g = tape.grid();
  if (tape.size() != g.points()) throw Error("tape does not cover its grid");
  if (noise.grid.points() != g.points() || noise.grid.dt != g.dt) throw Error("noise grid does not match the tape");
  const Matrix Ld = model.L.adjoint();
  const cplx* z = noise.z_star.data();
  auto K = [&](int m) {
    return Matrix(-kI * model.hamiltonian_at(g.time(m)) + z[m] * model.L - Ld * tape.contract(m, z));
  };
  QsdPath path;
  path.psi.reserve(g.points());
  path.psi.push_back(psi0);
  Vector psi = psi0;
  Matrix k_now = K(0);
  for (int m = 0; m < g.n_steps; ++m) {
    const Vector f0 = k_now * psi;
    const Matrix k_next = K(m + 1);
    const Vector f1 = k_next * (psi + g.dt * f0);
    psi += 0.5 * g.dt * (f0 + f1);
    k_now = k_next;
    if (!(psi.norm() <= kOverflowNorm)) {
      path.overflow = true;
      return path;
    }
    path.psi.push_back(psi);
  }
  return path;
}

EnsembleResult ensemble_average(const std::vector<QsdPath>& paths, const TimeGrid& grid, int sample_every) {
  if (paths.size() < 2) throw Error("ensemble needs at least two trajectories");
  const auto samples = sample_indices(grid, sample_every);
  const int n = static_cast<int>(paths.front().psi.front().size());
  Accumulator acc(static_cast<int>(samples.size()), 0, n);
  for (const QsdPath& p : paths) {
    if (p.overflow) {
      ++acc.excluded;
      continue;
    }
    if (static_cast<int>(p.psi.size()) != grid.points()) throw Error("trajectory does not cover the grid");
    for (std::size_t k = 0; k < samples.size(); ++k) acc.add_state(static_cast<int>(k), p.psi[samples[k]]);
    ++acc.count;
  }
  return finish(acc, grid, samples, {});
}

std::vector<int> probe_indices(const TimeGrid& grid, int count) {
  std::vector<int> idx;
  for (int k = 1; k <= count; ++k) {
    const int i = static_cast<int>(std::lround(static_cast<double>(k) * grid.n_steps / count));
    if (i > 0 && (idx.empty() || i != idx.back())) idx.push_back(i);
  }
  return idx;
}

namespace {

// A batch of trajectories advanced together; states are the columns of psi.
class Batch {
 public:
  Batch(const SystemModel& model, const ObarTape& tape, int size)
      : model_(model), tape_(tape), size_(size), n_(model.dim), Ld_(model.L.adjoint()) {
    for (int k = 1; k <= 2; ++k)
      for (int a = 0; a < tape.dim(k); ++a) lift_[k].push_back(Ld_ * tape.bases()[k][a]);
    z_.resize(size, tape.grid().points());
  }

  RowMajor& noise() { return z_; }

  // Noise-contracted coefficients of Obar(t_m, z*) for every trajectory.
  void coefficients(int m, Matrix& c1, Matrix& c2) const {
    const int d1 = tape_.dim(1), d2 = tape_.dim(2);
    c1.setZero(size_, d1);
    c2.setZero(size_, d2);
    if (m == 0 || d1 == 0) return;
    const auto w = noise_weights(m, tape_.grid().dt);
    const Eigen::Map<const Eigen::VectorXd> wv(w.data(), m + 1);
    const Matrix zw = z_.leftCols(m + 1) * wv.cast<cplx>().asDiagonal();
    const Eigen::Map<const RowMajor> ob1(tape_.obar1(m, 0), m + 1, d1);
    c1.noalias() = zw * ob1;
    if (d2 == 0) return;
    Matrix s(m + 1, m + 1), y;
    for (int a = 0; a < d2; ++a) {
      for (int j = 0; j <= m; ++j)
        for (int i = 0; i <= j; ++i) s(i, j) = s(j, i) = tape_.obar2(m, i, j)[a];
      y.noalias() = zw * s;
      c2.col(a) = y.cwiseProduct(zw).rowwise().sum();
    }
  }

  Matrix obar0(int m) const {
    return tape_.bases()[0].reconstruct(Eigen::Map<const Vector>(tape_.obar0(m), tape_.dim(0)));
  }

  // K(t_m) applied to each column.
  Matrix apply(int m, const Matrix& psi) const {
    Matrix c1, c2;
    coefficients(m, c1, c2);
    const Matrix a0 = -kI * model_.hamiltonian_at(tape_.grid().time(m)) - Ld_ * obar0(m);
    Matrix out = a0 * psi + (model_.L * psi) * z_.col(m).asDiagonal();
    for (int a = 0; a < tape_.dim(1); ++a) out.noalias() -= (lift_[1][a] * psi) * c1.col(a).asDiagonal();
    for (int a = 0; a < tape_.dim(2); ++a) out.noalias() -= (lift_[2][a] * psi) * c2.col(a).asDiagonal();
    return out;
  }

  // Obar(t_m, z*) of trajectory i.
  Matrix obar(int i, const Matrix& c1, const Matrix& c2, const Matrix& ob0) const {
    Matrix o = ob0;
    if (tape_.dim(1) > 0) o += tape_.bases()[1].reconstruct(c1.row(i).transpose());
    if (tape_.dim(2) > 0) o += tape_.bases()[2].reconstruct(c2.row(i).transpose());
    return o;
  }

 private:
  const SystemModel& model_;
  const ObarTape& tape_;
  int size_;
  int n_;
  Matrix Ld_;
  std::vector<Matrix> lift_[3];
  RowMajor z_;
};

}  // namespace

EnsembleResult run_ensemble(const SystemModel& model, const ObarTape& tape, const NoiseGenerator& noise,
                            const Vector& psi0, const EnsembleOptions& opts) {
  check_state(model, psi0);
  const TimeGrid& g = tape.grid();
  if (tape.size() != g.points()) throw Error("tape does not cover its grid");
  if (noise.grid().points() != g.points() || noise.grid().dt != g.dt) throw Error("noise grid does not match the tape");
  if (opts.trajectories < 2) throw Error("ensemble needs at least two trajectories");
  const int bsize = std::max(1, opts.batch);
  const int nbatches = (opts.trajectories + bsize - 1) / bsize;
  const auto samples = sample_indices(g, opts.sample_every);
  const auto& probes = opts.probe_indices;
  for (int p : probes)
    if (p < 0 || p > g.n_steps) throw Error("probe index outside the grid");
  const int n = model.dim;
  std::vector<Accumulator> partial(nbatches, Accumulator(static_cast<int>(samples.size()),
                                                         static_cast<int>(probes.size()), n));

#pragma omp parallel for schedule(dynamic, 1)
  for (int b = 0; b < nbatches; ++b) {
    const int first = b * bsize;
    const int size = std::min(bsize, opts.trajectories - first);
    Batch batch(model, tape, size);
    for (int i = 0; i < size; ++i) {
      noise.fill(static_cast<std::uint64_t>(first + i), batch.noise().row(i).data());
    }
    Matrix psi = psi0.replicate(1, size);
    std::vector<char> dead(size, 0);
    std::vector<Matrix> at_sample;
    std::vector<Matrix> lhs(probes.size() * size), rhs(probes.size() * size);
    std::size_t next_sample = 0;

    auto observe = [&](int m) {
      if (next_sample < samples.size() && samples[next_sample] == m) {
        at_sample.push_back(psi);
        ++next_sample;
      }
      for (std::size_t p = 0; p < probes.size(); ++p) {
        if (probes[p] != m) continue;
        Matrix c1, c2;
        batch.coefficients(m, c1, c2);
        const Matrix ob0 = batch.obar0(m);
        for (int i = 0; i < size; ++i) {
          const Matrix P = psi.col(i) * psi.col(i).adjoint();
          lhs[p * size + i] = batch.noise()(i, m) * P;
          rhs[p * size + i] = P * batch.obar(i, c1, c2, ob0).adjoint();
        }
      }
    };

    observe(0);
    Matrix f0 = batch.apply(0, psi);
    for (int m = 0; m < g.n_steps; ++m) {
      const Matrix trial = psi + g.dt * f0;
      const Matrix f1 = batch.apply(m + 1, trial);
      psi += 0.5 * g.dt * (f0 + f1);
      for (int i = 0; i < size; ++i) {
        if (!dead[i] && !(psi.col(i).norm() <= kOverflowNorm)) dead[i] = 1;
        if (dead[i]) psi.col(i).setZero();
      }
      observe(m + 1);
      if (m + 1 < g.n_steps) f0 = batch.apply(m + 1, psi);
    }

    Accumulator& acc = partial[b];
    for (int i = 0; i < size; ++i) {
      if (dead[i]) {
        ++acc.excluded;
        continue;
      }
      for (std::size_t k = 0; k < samples.size(); ++k) acc.add_state(static_cast<int>(k), at_sample[k].col(i));
      for (std::size_t p = 0; p < probes.size(); ++p) acc.add_probe(static_cast<int>(p), lhs[p * size + i], rhs[p * size + i]);
      ++acc.count;
    }
  }

  Accumulator total(static_cast<int>(samples.size()), static_cast<int>(probes.size()), n);
  for (const Accumulator& a : partial) total.merge(a);
  return finish(total, g, samples, probes);
}

NovikovReport novikov_probe(const SystemModel& model, const CorrelationKernel& kernel, const TimeGrid& grid,
                            int trajectories, const Vector& psi0, std::uint64_t seed, int times) {
  const ObarTape tape = record_tape(model, kernel, grid);
  const NoiseGenerator noise(kernel, grid, seed);
  EnsembleOptions opts;
  opts.trajectories = trajectories;
  opts.sample_every = grid.n_steps;
  opts.probe_indices = probe_indices(grid, times);
  return run_ensemble(model, tape, noise, psi0, opts).novikov;
}

}  // namespace nmqi
