#include <doctest.h>

#include <sstream>

#include "nmqi/errors.hpp"
#include "nmqi/hierarchy.hpp"
#include "nmqi/hierarchy_reference.hpp"
#include "support.hpp"

using namespace nmqi;

namespace {

HierarchyOptions route(HierarchyRoute r) {
  HierarchyOptions o;
  o.route = r;
  return o;
}

// O0(dt, 0) from a second-order Taylor expansion of the O0 equation about
// t = 0, where Obar0 = Obar1 = 0, dObar0/dt = alpha(0) L and
// dObar1(t, 0)/dt = alpha(0) [L, L] = 0. Static H only.
Matrix taylor_o0(const SystemModel& m, double alpha0, double dt) {
  const Matrix& L = m.L;
  const Matrix d1 = -kI * commutator(m.H0, L);
  const Matrix d2 = -kI * commutator(m.H0, d1) - alpha0 * commutator(L.adjoint() * L, L);
  return L + dt * d1 + 0.5 * dt * dt * d2;
}

double taylor_error(HierarchyRoute r, double dt) {
  const SystemModel m = build_cascade({1, 2.5, 3, 4.2}, {1, 0.8, 1.3});
  const CorrelationKernel k = CorrelationKernel::ou(1.0);
  Hierarchy h(m, k, TimeGrid{dt, 4}, route(r));
  h.step();
  return max_abs(h.O0(0) - taylor_o0(m, 0.5, dt));
}

// Two-level submodel: O0(t, s) = f(t, s) |1><2| with
//   d/dt f(t, s) = -i (w1 - w2) f + F(t) f,  F(t) = int_0^t alpha(t, s') f(t, s') ds',
// which is the O0 equation restricted to that span ([L^dag Obar0, O0] = -F f |1><2|).
// Heun in t with trapezoid F on a grid `refine` times finer. Returns f(t_i, s_j)
// at the coarse points, row-major (n + 1) x (n + 1), j <= i, and F(t_i) in `big`.
std::vector<cplx> scalar_oracle(double w12, double gamma, double dt, int n, int refine, std::vector<cplx>& big) {
  const double h = dt / refine;
  const int nf = n * refine;
  const auto alpha = [&](double tau) { return 0.5 * gamma * std::exp(-gamma * tau); };
  const cplx a = -kI * w12;
  std::vector<cplx> f{1.0}, pred;
  std::vector<cplx> out(static_cast<std::size_t>(n + 1) * (n + 1), 0.0);
  out[0] = 1.0;
  big.assign(n + 1, 0.0);
  const auto big_f = [&](const std::vector<cplx>& row, int i) {
    if (i == 0) return cplx(0.0);
    cplx s = 0.0;
    for (int j = 0; j <= i; ++j) s += (j == 0 || j == i ? 0.5 : 1.0) * alpha((i - j) * h) * row[j];
    return s * h;
  };
  for (int i = 0; i < nf; ++i) {
    const cplx Fi = big_f(f, i);
    pred.assign(i + 2, 1.0);
    for (int j = 0; j <= i; ++j) pred[j] = f[j] + h * (a + Fi) * f[j];
    const cplx Fp = big_f(pred, i + 1);
    std::vector<cplx> next(i + 2, 1.0);
    for (int j = 0; j <= i; ++j) next[j] = f[j] + 0.5 * h * ((a + Fi) * f[j] + (a + Fp) * pred[j]);
    f.swap(next);
    if ((i + 1) % refine == 0) {
      const int ic = (i + 1) / refine;
      for (int jc = 0; jc <= ic; ++jc) out[static_cast<std::size_t>(ic) * (n + 1) + jc] = f[jc * refine];
      big[ic] = big_f(f, i + 1);
    }
  }
  return out;
}

double two_level_error(HierarchyRoute r, double dt, double t_max) {
  const SystemModel m = build_cascade({0, 1, 2, 3}, {1, 0, 0});
  const CorrelationKernel k = CorrelationKernel::ou(0.5);
  const int n = static_cast<int>(std::round(t_max / dt));
  std::vector<cplx> big;
  const auto f = scalar_oracle(-1.0, 0.5, dt, n, 10, big);  // w1 - w2 = -1
  Hierarchy h(m, k, TimeGrid{dt, n}, route(r));
  double err = 0.0;
  for (int i = 1; i <= n; ++i) {
    h.step();
    const Matrix ob = h.Obar0();
    err = std::max(err, std::abs(ob(0, 1) - big[i]));
    err = std::max(err, max_abs(ob - ob(0, 1) * outer(4, 1, 2)));
    if (!h.has_o0_grid()) continue;
    for (int j = 0; j <= i; ++j) {
      const Matrix o = h.O0(j);
      const cplx expect = f[static_cast<std::size_t>(i) * (n + 1) + j];
      err = std::max(err, std::abs(o(0, 1) - expect));
      err = std::max(err, max_abs(o - o(0, 1) * outer(4, 1, 2)));
    }
  }
  return err;
}

}  // namespace

TEST_CASE("initial state") {
  for (const SystemModel& m : {test::cascade(), test::interference()}) {
    Hierarchy h(m, CorrelationKernel::ou(1.0), TimeGrid{0.01, 10}, route(HierarchyRoute::Grid));
    CHECK(h.index() == 0);
    CHECK(h.order() == 2);
    CHECK(max_abs(h.O0(0) - m.L) < 1e-15);
    CHECK(max_abs(h.Obar0()) == 0.0);
    CHECK(max_abs(h.Obar1(0)) == 0.0);
  }
}

TEST_CASE("diagonal slice stays L and O1(t, t, t) = [L, L] = 0") {
  const SystemModel m = test::cascade();
  for (auto r : {HierarchyRoute::Grid, HierarchyRoute::Exponential}) {
    Hierarchy h(m, CorrelationKernel::ou(0.5), TimeGrid{0.05, 30}, route(r));
    for (int i = 0; i < 30; ++i) {
      h.step();
      const int v = h.index();
      CHECK(max_abs(h.O0(v) - m.L) < 1e-15);
      CHECK(max_abs(h.O1(v, v)) < 1e-15);
    }
  }
}

TEST_CASE("boundary identity, exchange symmetry and forbidden products") {
  const SystemModel m = test::cascade();
  Hierarchy h(m, CorrelationKernel::ou(0.5), TimeGrid{0.05, 24}, route(HierarchyRoute::Grid));
  double boundary = 0.0, symmetry = 0.0, forbidden = 0.0;
  for (int i = 0; i < 24; ++i) {
    h.step();
    const int v = h.index();
    for (int s = 0; s <= v; ++s) {
      boundary = std::max(boundary, max_abs(h.O1(s, v) - commutator(m.L, h.O0(s))));
      for (int s1 = 0; s1 <= v; ++s1) {
        const Matrix o1 = h.O1(s, s1);
        for (int s2 = 0; s2 <= v; ++s2) {
          const Matrix o2 = h.O2(s, s1, s2);
          symmetry = std::max(symmetry, max_abs(o2 - h.O2(s, s2, s1)));
          forbidden = std::max({forbidden, max_abs(o1 * o2), max_abs(o2 * o1), max_abs(o2 * o2)});
        }
      }
    }
    for (int s1 = 0; s1 <= v; ++s1)
      for (int s2 = 0; s2 <= v; ++s2) symmetry = std::max(symmetry, max_abs(h.Obar2(s1, s2) - h.Obar2(s2, s1)));
  }
  CHECK(boundary < 1e-12);
  CHECK(symmetry == 0.0);
  CHECK(forbidden < 1e-8);
}

TEST_CASE("O2 boundary is half the commutator with O1") {
  const SystemModel m = test::cascade();
  Hierarchy h(m, CorrelationKernel::ou(0.5), TimeGrid{0.05, 10}, route(HierarchyRoute::Grid));
  for (int i = 0; i < 10; ++i) h.step();
  const int v = h.index();
  for (int s = 0; s <= v; ++s)
    for (int s1 = 0; s1 <= v; ++s1) CHECK(max_abs(h.O2(s, v, s1) - 0.5 * commutator(m.L, h.O1(s, s1))) < 1e-12);
}

TEST_CASE("interference model keeps O1 and O2 at zero") {
  Hierarchy h(test::interference(), CorrelationKernel::ou(0.5), TimeGrid{0.01, 200});
  CHECK(h.dim(1) == 0);
  CHECK(h.dim(2) == 0);
  for (int i = 0; i < 200; ++i) h.step();
  double worst = 0.0;
  for (int s = 0; s <= 200; s += 20)
    for (int s1 = 0; s1 <= 200; s1 += 20) worst = std::max({worst, max_abs(h.O1(s, s1)), max_abs(h.O2(s, s1, s1))});
  CHECK(worst < 1e-10);
}

TEST_CASE("frozen O0 gives Obar0 = L (1 - exp(-t)) / 2 for OU gamma = 1") {
  const SystemModel m = test::cascade();
  // Trapezoid error of int_0^t exp(-u) / 2 du is at most dt^2 / 24.
  for (auto [r, tol] : {std::pair{HierarchyRoute::Exponential, 1e-13}, {HierarchyRoute::Grid, 0.02 * 0.02 / 24}}) {
    HierarchyOptions o = route(r);
    o.freeze_o0 = true;
    Hierarchy h(m, CorrelationKernel::ou(1.0), TimeGrid{0.02, 150}, o);
    double err = 0.0;
    for (int i = 0; i < 150; ++i) {
      h.step();
      err = std::max(err, max_abs(h.Obar0() - m.L * (1.0 - std::exp(-h.time())) / 2.0));
    }
    CHECK(err < tol);
  }
}

TEST_CASE("one step agrees with the second-order Taylor expansion") {
  for (auto r : {HierarchyRoute::Grid, HierarchyRoute::Exponential}) {
    const double e1 = taylor_error(r, 0.02), e2 = taylor_error(r, 0.01);
    CHECK(e2 < 1e-5);
    // Local error is third order: halving dt divides it by about 8.
    CHECK(e1 / e2 > 6.0);
    CHECK(e1 / e2 < 10.0);
  }
}

TEST_CASE("two-level submodel matches the scalar integro-differential oracle") {
  for (auto r : {HierarchyRoute::Grid, HierarchyRoute::Exponential}) {
    const double coarse = two_level_error(r, 0.004, 1.0);
    const double fine = two_level_error(r, 0.002, 1.0);
    INFO("route " << to_string(r) << " errors " << coarse << " " << fine);
    CHECK(fine < 1e-6);
    CHECK(coarse / fine >= 3.5);
  }
}

TEST_CASE("optimized hierarchy matches the serial reference") {
  const std::vector<SystemModel> models = {build_cascade({1, 2, 3, 4}, {1, 0.7, 1.2}), test::interference(),
                                           build_cascade({0, 1}, {1}), build_cascade({0, 1, 3}, {1, 2})};
  for (const SystemModel& m : models) {
    const CorrelationKernel k = CorrelationKernel::ou(1.3);
    const TimeGrid g{0.05, 20};
    Hierarchy h(m, k, g, route(HierarchyRoute::Grid));
    ReferenceHierarchy ref(m, k, g);
    double err = 0.0;
    for (int i = 0; i < 20; ++i) {
      h.predict();
      ref.predict();
      err = std::max(err, max_abs(h.Obar0() - ref.Obar0()));
      h.correct();
      ref.correct();
      const int v = h.index();
      REQUIRE(ref.index() == v);
      err = std::max(err, max_abs(h.Obar0() - ref.Obar0()));
      for (int s = 0; s <= v; ++s) {
        err = std::max({err, max_abs(h.O0(s) - ref.O0(s)), max_abs(h.Obar1(s) - ref.Obar1(s))});
        for (int s1 = 0; s1 <= v; ++s1) {
          err = std::max({err, max_abs(h.O1(s, s1) - ref.O1(s, s1)), max_abs(h.Obar2(s, s1) - ref.Obar2(s, s1))});
          if (h.order() >= 2)
            for (int s2 = 0; s2 <= v; ++s2) err = std::max(err, max_abs(h.O2(s, s1, s2) - ref.O2(s, s1, s2)));
        }
      }
    }
    INFO(m.kind << " dim " << m.dim);
    CHECK(err < 1e-12);
  }
}

TEST_CASE("grid and exponential routes converge to each other") {
  const SystemModel m = test::cascade();
  const auto gap = [&](double dt) {
    const int n = static_cast<int>(std::round(1.0 / dt));
    Hierarchy a(m, CorrelationKernel::ou(2.0), TimeGrid{dt, n}, route(HierarchyRoute::Grid));
    Hierarchy b(m, CorrelationKernel::ou(2.0), TimeGrid{dt, n}, route(HierarchyRoute::Exponential));
    for (int i = 0; i < n; ++i) {
      a.step();
      b.step();
    }
    double d = max_abs(a.Obar0() - b.Obar0());
    for (int s = 0; s <= n; ++s) d = std::max({d, max_abs(a.O0(s) - b.O0(s)), max_abs(a.Obar1(s) - b.Obar1(s))});
    return d;
  };
  const double g1 = gap(0.05), g2 = gap(0.025);
  CHECK(g2 < 1e-3);
  CHECK(g1 / g2 > 3.0);
}

TEST_CASE("exponential route contraction agrees with the trapezoid contraction of its own grid") {
  Hierarchy h(test::cascade(), CorrelationKernel::ou(1.0), TimeGrid{0.01, 200}, route(HierarchyRoute::Exponential));
  for (int i = 0; i < 200; ++i) h.step();
  CHECK(max_abs(h.Obar0() - h.trapezoid_obar0()) < 1e-4);
}

TEST_CASE("Markov limit: Obar0 approaches L / 2 as 1 / gamma") {
  const SystemModel m = test::cascade();
  const auto deviation = [&](double gamma, double t_max) {
    const double dt = 0.01;
    const int n = static_cast<int>(std::round(t_max / dt));
    Hierarchy h(m, CorrelationKernel::ou(gamma), TimeGrid{dt, n}, route(HierarchyRoute::Exponential));
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
      h.step();
      if (h.time() >= 10.0 / gamma) d = std::max(d, max_abs(h.Obar0() - 0.5 * m.L));
    }
    return d;
  };
  const double d50 = deviation(50, 3.0), d200 = deviation(200, 3.0);
  CHECK(d50 < 0.05 * max_abs(m.L));
  CHECK(d200 <= 0.35 * d50);

  Hierarchy slow(m, CorrelationKernel::ou(0.2), TimeGrid{0.01, 50});
  for (int i = 0; i < 50; ++i) slow.step();
  CHECK(max_abs(slow.Obar0() - 0.5 * m.L) > 0.4);
}

TEST_CASE("checkpoint round trip continues bit-identically") {
  const SystemModel m = test::cascade();
  const CorrelationKernel k = CorrelationKernel::ou(0.7);
  for (auto r : {HierarchyRoute::Grid, HierarchyRoute::Exponential}) {
    const TimeGrid g{0.05, 20};
    Hierarchy a(m, k, g, route(r));
    for (int i = 0; i < 8; ++i) a.step();
    std::stringstream buf;
    a.save(buf);
    Hierarchy b(m, k, g, route(r));
    b.load(buf);
    CHECK(b.index() == 8);
    for (int i = 0; i < 12; ++i) {
      a.step();
      b.step();
    }
    CHECK(max_abs(a.Obar0() - b.Obar0()) == 0.0);
    for (int s = 0; s <= 20; ++s) CHECK(max_abs(a.O0(s) - b.O0(s)) == 0.0);
  }
}

TEST_CASE("checkpoint for a different configuration is refused") {
  const SystemModel m = test::cascade();
  Hierarchy a(m, CorrelationKernel::ou(0.7), TimeGrid{0.05, 20});
  std::stringstream buf;
  a.save(buf);
  Hierarchy b(m, CorrelationKernel::ou(0.7), TimeGrid{0.05, 30});
  CHECK_THROWS_AS(b.load(buf), Error);
  std::stringstream junk("not a checkpoint");
  CHECK_THROWS_AS(a.load(junk), Error);
}

TEST_CASE("memory budget") {
  const SystemModel m = test::cascade();
  CHECK_THROWS_AS(Hierarchy(m, CorrelationKernel::ou(1.0), TimeGrid{0.01, 200}, route(HierarchyRoute::Grid)),
                  MemoryBudgetError);
  CHECK_NOTHROW(Hierarchy(m, CorrelationKernel::ou(1.0), TimeGrid{0.01, 200}, route(HierarchyRoute::Exponential)));
  const auto grid = Hierarchy::estimate(HierarchyRoute::Grid, 160, 3, 2, 1, 1);
  const auto expo = Hierarchy::estimate(HierarchyRoute::Exponential, 160, 3, 2, 1, 1);
  CHECK(grid.order2_elements == 161u * 161u * 161u);
  CHECK(expo.bytes < grid.bytes);
}

TEST_CASE("the exponential route needs an exponential kernel") {
  const CorrelationKernel tab(Tabulated{{0, 10}, {cplx(1), cplx(0)}});
  CHECK_THROWS_AS(Hierarchy(test::cascade(), tab, TimeGrid{0.1, 10}, route(HierarchyRoute::Exponential)), Error);
  Hierarchy h(test::cascade(), tab, TimeGrid{0.1, 10});
  CHECK(h.route() == HierarchyRoute::Grid);
}
