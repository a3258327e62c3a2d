#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "nmqi/master_equation.hpp"

namespace nmqi::test {

inline SystemModel cascade() { return build_cascade({1, 2, 3, 4}, {1, 1, 1}); }
inline SystemModel interference() { return build_interference(5, 10, 2, 2); }

inline Vector uniform_state(int n) { return Vector::Constant(n, cplx(1.0 / std::sqrt(double(n)), 0.0)); }

inline Matrix random_matrix(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = cplx(g(rng), g(rng));
  return m;
}

inline Matrix random_density(int n, std::mt19937_64& rng) {
  const Matrix a = random_matrix(n, rng);
  const Matrix r = a * a.adjoint();
  return r / r.trace().real();
}

}  // namespace nmqi::test
