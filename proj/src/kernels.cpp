#include "nmqi/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <sstream>

#include "nmqi/errors.hpp"

namespace nmqi {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

cplx tabulated_at(const Tabulated& t, double tau) {
  const double a = std::abs(tau);
  if (t.tau.empty() || a > t.tau.back() + 1e-12 * (1.0 + t.tau.back()))
    throw OutOfRangeError("tabulated kernel evaluated at |tau| = " + std::to_string(a) +
                          " beyond table end " + std::to_string(t.tau.empty() ? 0.0 : t.tau.back()));
  const auto it = std::upper_bound(t.tau.begin(), t.tau.end(), a);
  const std::size_t hi = std::clamp<std::size_t>(static_cast<std::size_t>(it - t.tau.begin()), 1,
                                                 t.tau.size() - 1);
  cplx v;
  if (t.tau.size() == 1) {
    v = t.values[0];
  } else {
    const std::size_t lo = hi - 1;
    const double x = std::clamp((a - t.tau[lo]) / (t.tau[hi] - t.tau[lo]), 0.0, 1.0);
    v = (1.0 - x) * t.values[lo] + x * t.values[hi];
  }
  return tau >= 0 ? v : std::conj(v);
}

}  // namespace

CorrelationKernel::CorrelationKernel(Variant v) : v_(std::move(v)) {
  std::visit(overloaded{
                 [](const OrnsteinUhlenbeck& k) {
                   if (!(k.gamma > 0)) throw Error("OU kernel needs gamma > 0");
                 },
                 [](const ExponentialSum& k) {
                   if (k.amplitudes.size() != k.rates.size())
                     throw Error("exponential kernel: amplitude and rate counts differ");
                   for (cplx r : k.rates)
                     if (!(r.real() > 0)) throw Error("exponential kernel rates need Re > 0");
                   cplx a0 = 0.0;
                   for (cplx g : k.amplitudes) a0 += g;
                   if (std::abs(a0.imag()) > 1e-14 * (1.0 + std::abs(a0)))
                     throw Error("exponential kernel needs real alpha(0) = sum of amplitudes");
                 },
                 [](const Tabulated& k) {
                   if (k.tau.empty() || k.tau.size() != k.values.size())
                     throw Error("tabulated kernel needs matching, non-empty columns");
                   if (k.tau.front() != 0.0) throw Error("tabulated kernel must start at tau = 0");
                   for (std::size_t i = 1; i < k.tau.size(); ++i)
                     if (!(k.tau[i] > k.tau[i - 1]))
                       throw Error("tabulated kernel tau must increase strictly");
                   if (std::abs(k.values[0].imag()) > 1e-14)
                     throw Error("tabulated kernel needs real alpha(0)");
                 },
             },
             v_);
}

CorrelationKernel CorrelationKernel::load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open kernel table " + path);
  Tabulated t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream is(line);
    double tau, re, im = 0.0;
    if (!(is >> tau)) continue;
    if (!(is >> re)) throw Error(path + ":" + std::to_string(lineno) + ": expected tau re [im]");
    is >> im;
    t.tau.push_back(tau);
    t.values.emplace_back(re, im);
  }
  return CorrelationKernel(std::move(t));
}

cplx CorrelationKernel::at(double tau) const {
  return std::visit(overloaded{
                        [&](const OrnsteinUhlenbeck& k) {
                          return cplx(0.5 * k.gamma * std::exp(-k.gamma * std::abs(tau)), 0.0);
                        },
                        [&](const ExponentialSum& k) {
                          cplx s = 0.0;
                          const double a = std::abs(tau);
                          for (std::size_t j = 0; j < k.rates.size(); ++j)
                            s += k.amplitudes[j] * std::exp(-k.rates[j] * a);
                          return tau >= 0 ? s : std::conj(s);
                        },
                        [&](const Tabulated& k) { return tabulated_at(k, tau); },
                    },
                    v_);
}

cplx CorrelationKernel::markov_rate() const {
  return std::visit(overloaded{
                        [](const OrnsteinUhlenbeck&) { return cplx(0.5, 0.0); },
                        [](const ExponentialSum& k) {
                          cplx s = 0.0;
                          for (std::size_t j = 0; j < k.rates.size(); ++j)
                            s += k.amplitudes[j] / k.rates[j];
                          return s;
                        },
                        [](const Tabulated& k) {
                          cplx s = 0.0;
                          for (std::size_t i = 1; i < k.tau.size(); ++i)
                            s += 0.5 * (k.tau[i] - k.tau[i - 1]) * (k.values[i] + k.values[i - 1]);
                          return s;
                        },
                    },
                    v_);
}

double CorrelationKernel::range() const {
  if (const auto* t = std::get_if<Tabulated>(&v_)) return t->tau.back();
  return std::numeric_limits<double>::infinity();
}

bool CorrelationKernel::is_exponential() const { return !std::holds_alternative<Tabulated>(v_); }

std::vector<std::pair<cplx, cplx>> CorrelationKernel::exponential_terms() const {
  std::vector<std::pair<cplx, cplx>> out;
  if (const auto* ou = std::get_if<OrnsteinUhlenbeck>(&v_)) {
    out.emplace_back(0.5 * ou->gamma, ou->gamma);
  } else if (const auto* es = std::get_if<ExponentialSum>(&v_)) {
    for (std::size_t j = 0; j < es->rates.size(); ++j) out.emplace_back(es->amplitudes[j], es->rates[j]);
  }
  return out;
}

std::string CorrelationKernel::describe() const {
  std::ostringstream os;
  os.precision(17);
  std::visit(overloaded{
                 [&](const OrnsteinUhlenbeck& k) { os << "ou gamma=" << k.gamma; },
                 [&](const ExponentialSum& k) {
                   os << "exponential terms=" << k.rates.size();
                   for (std::size_t j = 0; j < k.rates.size(); ++j)
                     os << " (" << k.amplitudes[j].real() << "," << k.amplitudes[j].imag() << ";"
                        << k.rates[j].real() << "," << k.rates[j].imag() << ")";
                 },
                 [&](const Tabulated& k) {
                   os << "tabulated samples=" << k.tau.size() << " tau_max=" << k.tau.back();
                 },
             },
             v_);
  return os.str();
}

TimeGrid TimeGrid::covering(double dt, double t_max) {
  if (!(dt > 0)) throw Error("grid.dt must be positive");
  if (!(t_max > 0)) throw Error("grid.t_max must be positive");
  const double steps = std::round(t_max / dt);
  if (std::abs(steps * dt - t_max) > 1e-9 * t_max)
    throw Error("grid.t_max must be a whole number of steps");
  return TimeGrid{dt, static_cast<int>(steps)};
}

Matrix noise_covariance(const CorrelationKernel& k, const TimeGrid& grid) {
  const int n = grid.points();
  Matrix c(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) c(i, j) = k(grid.time(i), grid.time(j));
  return c;
}

CovarianceFactor factor_covariance(const Matrix& c, double alpha0) {
  if (alpha0 == 0.0 && max_abs(c) == 0.0) return {Matrix::Zero(c.rows(), c.cols()), 0.0};
  Eigen::LLT<Matrix> llt(c);
  if (llt.info() == Eigen::Success) return {llt.matrixL(), 0.0};
  const double jitter = 1e-10 * alpha0;
  Matrix cj = c;
  cj.diagonal().array() += jitter;
  llt.compute(cj);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefiniteError("noise covariance is not positive semidefinite");
  return {llt.matrixL(), jitter};
}

ExpWeights exp_product_weights(cplx lambda, double h) {
  const cplx z = lambda * h;
  ExpWeights w;
  w.decay = std::exp(-z);
  if (std::abs(z) < 0.1) {
    // Series (-z)^k / (k+2)! and (k+1) (-z)^k / (k+2)! of the two closed forms.
    cplx near = 0.0, far = 0.0, term = 0.5;
    for (int k = 0; k <= 12; ++k) {
      near += term;
      far += (k + 1.0) * term;
      term *= -z / (k + 3.0);
    }
    w.near = h * near;
    w.far = h * far;
  } else {
    w.near = h * (z - 1.0 + w.decay) / (z * z);
    w.far = h * (1.0 - w.decay - z * w.decay) / (z * z);
  }
  return w;
}

KernelQuadrature::KernelQuadrature(const CorrelationKernel& k, double dt, int n_steps, QuadratureKind kind)
    : kernel_(k), dt_(dt), n_steps_(n_steps), kind_(kind) {
  if (k.range() < dt * n_steps * (1.0 - 1e-12))
    throw OutOfRangeError("kernel table ends at tau = " + std::to_string(k.range()) +
                          ", the grid needs " + std::to_string(dt * n_steps));
  lags_.resize(n_steps + 1);
  for (int i = 0; i <= n_steps; ++i) lags_[i] = flush_tiny(k.at(dt * i));
  if (kind == QuadratureKind::Exponential) {
    if (!k.is_exponential()) throw Error("exponential quadrature needs an exponential kernel");
    exp_ = k.exponential_terms();
    for (const auto& [g, lam] : exp_) {
      w_.push_back(exp_product_weights(lam, dt));
      wc_.push_back(exp_product_weights(std::conj(lam), dt));
    }
  }
}

void KernelQuadrature::bar_weights(int m, std::vector<cplx>& w) const {
  w.assign(m + 1, 0.0);
  if (m == 0) return;
  for (int i = 0; i <= m; ++i) w[i] = dt_ * lags_[m - i];
  w[0] *= 0.5;
  w[m] *= 0.5;
}

void KernelQuadrature::convolve(int m, const cplx* f, int cols, cplx* out) const {
  const std::size_t rows = static_cast<std::size_t>(m) + 1;
  std::fill(out, out + rows * cols, cplx(0.0));
  if (m == 0 || cols == 0) return;
  if (kind_ == QuadratureKind::Trapezoid) {
    for (int i = 0; i <= m; ++i) {
      cplx* o = out + static_cast<std::size_t>(i) * cols;
      for (int j = 0; j <= m; ++j) {
        cplx w = dt_ * alpha_lag(i - j);
        if (j == 0 || j == m) w *= 0.5;
        const cplx* fj = f + static_cast<std::size_t>(j) * cols;
        for (int c = 0; c < cols; ++c) o[c] += w * fj[c];
      }
    }
    return;
  }
  std::vector<cplx> acc(cols);
  for (std::size_t t = 0; t < exp_.size(); ++t) {
    const cplx g = exp_[t].first;
    const ExpWeights& w = w_[t];
    std::fill(acc.begin(), acc.end(), cplx(0.0));
    for (int i = 0; i < m; ++i) {
      const cplx* fi = f + static_cast<std::size_t>(i) * cols;
      const cplx* fn = fi + cols;
      cplx* o = out + static_cast<std::size_t>(i + 1) * cols;
      for (int c = 0; c < cols; ++c) {
        acc[c] = flush_tiny(w.decay * acc[c] + g * (w.far * fi[c] + w.near * fn[c]));
        o[c] += acc[c];
      }
    }
    const cplx gc = std::conj(g);
    const ExpWeights& v = wc_[t];
    std::fill(acc.begin(), acc.end(), cplx(0.0));
    for (int i = m - 1; i >= 0; --i) {
      const cplx* fi = f + static_cast<std::size_t>(i) * cols;
      const cplx* fn = fi + cols;
      cplx* o = out + static_cast<std::size_t>(i) * cols;
      for (int c = 0; c < cols; ++c) {
        acc[c] = flush_tiny(v.decay * acc[c] + gc * (v.far * fn[c] + v.near * fi[c]));
        o[c] += acc[c];
      }
    }
  }
}

void KernelQuadrature::endpoint(int m, int j, const cplx* f, int cols, cplx* out) const {
  std::fill(out, out + cols, cplx(0.0));
  const cplx g = exp_[j].first;
  const ExpWeights& w = w_[j];
  for (int i = 0; i < m; ++i) {
    const cplx* fi = f + static_cast<std::size_t>(i) * cols;
    const cplx* fn = fi + cols;
    for (int c = 0; c < cols; ++c) out[c] = flush_tiny(w.decay * out[c] + g * (w.far * fi[c] + w.near * fn[c]));
  }
}

}  // namespace nmqi
