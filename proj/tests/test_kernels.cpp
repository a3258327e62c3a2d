#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "nmqi/errors.hpp"
#include "nmqi/kernels.hpp"

using namespace nmqi;

namespace {

std::string write_ou_table(double gamma, double tau_max, double dtau) {
  const auto path = std::filesystem::temp_directory_path() / "nmqi_test_ou_table.txt";
  std::ofstream out(path);
  out << "# tau re im\n";
  const int n = static_cast<int>(std::round(tau_max / dtau));
  out.precision(17);
  for (int i = 0; i <= n; ++i) {
    const double tau = i * dtau;
    out << tau << ' ' << 0.5 * gamma * std::exp(-gamma * tau) << " 0\n";
  }
  return path.string();
}

// Composite Simpson on [0, h] with many panels.
template <class F>
cplx simpson(F f, double a, double b, int panels = 2000) {
  const double h = (b - a) / panels;
  cplx s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("OU values") {
  CHECK(CorrelationKernel::ou(2.0)(1.3, 1.3) == cplx(1.0));
  CHECK(CorrelationKernel::ou(0.5)(0.0, 0.0) == cplx(0.25));
  const auto k = CorrelationKernel::ou(1.7);
  CHECK(std::abs(k(2.0, 0.5) - 0.85 * std::exp(-1.7 * 1.5)) < 1e-15);
}

TEST_CASE("hermitian symmetry and stationarity on random pairs") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  const std::vector<CorrelationKernel> ks = {
      CorrelationKernel::ou(0.8),
      CorrelationKernel(ExponentialSum{{cplx(1.0, 0.3), cplx(0.2, -0.3)}, {cplx(1.0, 2.0), cplx(0.5, -1.0)}}),
      CorrelationKernel(Tabulated{{0, 1, 2, 10}, {cplx(1, 0), cplx(0.5, 0.2), cplx(0.1, -0.3), cplx(0, 0)}}),
  };
  for (const auto& k : ks)
    for (int i = 0; i < 100; ++i) {
      const double t = u(rng), s = u(rng), shift = u(rng);
      CHECK(std::abs(k(s, t) - std::conj(k(t, s))) < 1e-15);
      if (i < 20) CHECK(std::abs(k(t + shift, s + shift) - k(t, s)) < 1e-12);
    }
}

TEST_CASE("kernels with complex alpha(0) are refused") {
  CHECK_THROWS_AS(CorrelationKernel(ExponentialSum{{cplx(0.6, 0.2)}, {cplx(0.9, 0.7)}}), Error);
  CHECK_THROWS_AS(CorrelationKernel(Tabulated{{0, 1}, {cplx(1, 0.1), cplx(0)}}), Error);
  CHECK_NOTHROW(CorrelationKernel(ExponentialSum{{cplx(0.6, 0.2), cplx(0.1, -0.2)}, {cplx(0.9, 0.7), 1.0}}));
}

TEST_CASE("markov rates") {
  for (double g : {0.2, 1.0, 50.0}) CHECK(CorrelationKernel::ou(g).markov_rate() == cplx(0.5));
  CHECK(std::abs(CorrelationKernel(ExponentialSum{{1.0}, {1.0}}).markov_rate() - 1.0) < 1e-15);
  const auto tab = CorrelationKernel::load_table(write_ou_table(1.0, 40.0, 0.01));
  CHECK(std::abs(tab.markov_rate() - 0.5) < 1e-4);
  CHECK(tab.range() == doctest::Approx(40.0));
}

TEST_CASE("tabulated kernels interpolate and refuse to extrapolate") {
  const CorrelationKernel k(Tabulated{{0, 1}, {cplx(1, 0), cplx(0, 1)}});
  CHECK(std::abs(k.at(0.25) - cplx(0.75, 0.25)) < 1e-15);
  CHECK(std::abs(k.at(-0.25) - cplx(0.75, -0.25)) < 1e-15);
  CHECK_THROWS_AS(k.at(1.5), OutOfRangeError);
  CHECK_FALSE(k.is_exponential());
}

TEST_CASE("table loader rejects malformed files") {
  const auto path = std::filesystem::temp_directory_path() / "nmqi_test_bad_table.txt";
  std::ofstream(path) << "0 1 0\n0.5 abc 0\n";
  CHECK_THROWS(CorrelationKernel::load_table(path.string()));
  CHECK_THROWS(CorrelationKernel::load_table("/nonexistent/table.txt"));
}

TEST_CASE("exponential decomposition of the OU kernel") {
  const auto terms = CorrelationKernel::ou(3.0).exponential_terms();
  REQUIRE(terms.size() == 1);
  CHECK(terms[0].first == cplx(1.5));
  CHECK(terms[0].second == cplx(3.0));
}

TEST_CASE("time grid") {
  const TimeGrid g = TimeGrid::covering(0.01, 10);
  CHECK(g.n_steps == 1000);
  CHECK(g.points() == 1001);
  CHECK(g.t_max() == doctest::Approx(10.0));
  CHECK_THROWS_WITH(TimeGrid::covering(0, 1), "grid.dt must be positive");
  CHECK_THROWS(TimeGrid::covering(0.3, 1));
}

TEST_CASE("noise covariance entries") {
  const Matrix c = noise_covariance(CorrelationKernel::ou(1.0), TimeGrid{1.0, 2});
  REQUIRE(c.rows() == 3);
  CHECK(std::abs(c(0, 1) - 0.5 * std::exp(-1.0)) < 1e-15);
  for (int i = 0; i < 3; ++i) CHECK(c(i, i) == cplx(0.5));
  CHECK(is_hermitian(c, 0.0));
}

TEST_CASE("OU covariance is positive semidefinite before jitter") {
  const Matrix c = noise_covariance(CorrelationKernel::ou(0.5), TimeGrid{0.02, 199});
  REQUIRE(c.rows() == 200);
  Eigen::SelfAdjointEigenSolver<Matrix> es(c, Eigen::EigenvaluesOnly);
  CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  const CovarianceFactor f = factor_covariance(c, 0.25);
  CHECK(max_abs(f.factor * f.factor.adjoint() - c) < 1e-9);
}

TEST_CASE("a non-PSD covariance is refused") {
  Matrix c(2, 2);
  c << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(factor_covariance(c, 1.0), NotPositiveDefiniteError);
}

TEST_CASE("exponential product weights integrate a linear interpolant exactly") {
  for (cplx lam : {cplx(0.7, 0.0), cplx(2.0, -3.0), cplx(1e-9, 0.0), cplx(40.0, 5.0)}) {
    const double h = 0.13;
    const ExpWeights w = exp_product_weights(lam, h);
    const cplx near = simpson([&](double u) { return std::exp(-lam * u) * (1.0 - u / h); }, 0.0, h);
    const cplx far = simpson([&](double u) { return std::exp(-lam * u) * (u / h); }, 0.0, h);
    CHECK(std::abs(w.near - near) < 1e-12);
    CHECK(std::abs(w.far - far) < 1e-12);
    CHECK(std::abs(w.decay - std::exp(-lam * h)) < 1e-15);
  }
}

TEST_CASE("trapezoid convolution matches a direct double loop") {
  const CorrelationKernel k(ExponentialSum{{cplx(1.0, 0.5), cplx(0.4, -0.5)}, {cplx(0.8, 1.5), cplx(2.0, -0.3)}});
  const double dt = 0.1;
  const int m = 12, cols = 2;
  const KernelQuadrature q(k, dt, m, QuadratureKind::Trapezoid);
  std::vector<cplx> f((m + 1) * cols), out((m + 1) * cols);
  for (int i = 0; i <= m; ++i)
    for (int c = 0; c < cols; ++c) f[i * cols + c] = cplx(std::sin(0.3 * i + c), 0.1 * i);
  q.convolve(m, f.data(), cols, out.data());
  for (int i = 0; i <= m; ++i)
    for (int c = 0; c < cols; ++c) {
      cplx s = 0.0;
      for (int j = 0; j <= m; ++j) s += (j == 0 || j == m ? 0.5 : 1.0) * dt * k(i * dt, j * dt) * f[j * cols + c];
      CHECK(std::abs(out[i * cols + c] - s) < 1e-13);
    }

  std::vector<cplx> w;
  q.bar_weights(m, w);
  REQUIRE(w.size() == static_cast<std::size_t>(m + 1));
  for (int i = 0; i <= m; ++i)
    CHECK(std::abs(w[i] - (i == 0 || i == m ? 0.5 : 1.0) * dt * k(m * dt, i * dt)) < 1e-15);
}

TEST_CASE("exponential endpoint integral is exact for linear data") {
  const cplx G(1.2, 0.0), lam(0.9, 2.0);
  const CorrelationKernel k(ExponentialSum{{G}, {lam}});
  const double dt = 0.05;
  const int m = 40;
  const KernelQuadrature q(k, dt, m, QuadratureKind::Exponential);
  REQUIRE(q.terms() == 1);
  std::vector<cplx> f(m + 1);
  for (int i = 0; i <= m; ++i) f[i] = i * dt;
  cplx out = 0.0;
  q.endpoint(m, 0, f.data(), 1, &out);
  const double T = m * dt;
  const cplx exact = G * (T / lam - (1.0 - std::exp(-lam * T)) / (lam * lam));
  CHECK(std::abs(out - exact) < 1e-12);
}

TEST_CASE("kernel description") {
  CHECK(CorrelationKernel::ou(0.5).describe() == "ou gamma=0.5");
}
