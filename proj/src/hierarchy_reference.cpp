#include "nmqi/hierarchy_reference.hpp"

#include "nmqi/errors.hpp"

namespace nmqi {

ReferenceHierarchy::ReferenceHierarchy(const SystemModel& model, const CorrelationKernel& kernel,
                                       const TimeGrid& grid)
    : model_(model), grid_(grid), quad_(kernel, grid.dt, grid.n_steps, QuadratureKind::Trapezoid) {
  model_.validate();
  if (grid.n_steps < 1 || !(grid.dt > 0)) throw Error("time grid needs dt > 0 and at least one step");
  order_ = model_.truncation_order();
  np_ = grid.n_steps + 1;
  const std::size_t np = np_;
  const std::size_t cells = np * np * (order_ >= 2 ? np : 0);
  if (cells > std::size_t{61} * 61 * 61) throw MemoryBudgetError("reference hierarchy is limited to 60 steps");
  zero_ = Matrix::Zero(model_.dim, model_.dim);
  o0_.assign(np, zero_);
  k0_.assign(np, zero_);
  if (order_ >= 1) {
    o1_.assign(np * np, zero_);
    k1_.assign(np * np, zero_);
  }
  if (order_ >= 2) {
    o2_.assign(cells, zero_);
    k2_.assign(cells, zero_);
  }
  ob1_.assign(np, zero_);
  ob2_.assign(np * np, zero_);
  boundary(0);
  contract(0);
}

void ReferenceHierarchy::boundary(int v) {
  const Matrix& L = model_.L;
  o0_[v] = L;
  if (order_ >= 1) {
    for (int s = 0; s <= v; ++s) o1_[idx(s, v)] = commutator(L, o0_[s]);
    for (int s1 = 0; s1 <= v; ++s1) o1_[idx(v, s1)] = zero_;
  }
  if (order_ >= 2) {
    for (int s = 0; s <= v; ++s)
      for (int s1 = 0; s1 <= v; ++s1) {
        const Matrix b = 0.5 * commutator(L, o1_[idx(s, s1)]);
        o2_[idx(s, s1, v)] = b;
        o2_[idx(s, v, s1)] = b;
      }
    for (int s1 = 0; s1 <= v; ++s1)
      for (int s2 = 0; s2 <= v; ++s2) o2_[idx(v, s1, s2)] = zero_;
  }
}

void ReferenceHierarchy::contract(int v) {
  std::vector<cplx> w;
  quad_.bar_weights(v, w);
  ob0_ = zero_;
  for (int s = 0; s <= v; ++s) ob0_ += w[s] * o0_[s];
  if (order_ >= 1)
    for (int s1 = 0; s1 <= v; ++s1) {
      Matrix acc = zero_;
      for (int s = 0; s <= v; ++s) acc += w[s] * o1_[idx(s, s1)];
      ob1_[s1] = acc;
    }
  if (order_ >= 2)
    for (int s1 = 0; s1 <= v; ++s1)
      for (int s2 = 0; s2 <= v; ++s2) {
        Matrix acc = zero_;
        for (int s = 0; s <= v; ++s) acc += w[s] * o2_[idx(s, s1, s2)];
        ob2_[idx(s1, s2)] = acc;
      }
}

void ReferenceHierarchy::stage(bool predictor) {
  const int m = m_;
  const double h = grid_.dt;
  const Matrix Ld = model_.L.adjoint();
  const Matrix gen = -kI * model_.hamiltonian_at(grid_.time(view_)) - Ld * ob0_;
  auto update = [&](Matrix& y, Matrix& k, const Matrix& f) {
    if (predictor) {
      k = f;
      y += h * f;
    } else {
      y += 0.5 * h * (f - k);
    }
  };
  // Slopes at the current view, all computed before any update.
  std::vector<Matrix> f0(m + 1), f1, f2;
  for (int s = 0; s <= m; ++s) {
    f0[s] = commutator(gen, o0_[s]);
    if (order_ >= 1) f0[s] -= Ld * ob1_[s];
  }
  if (order_ >= 1) {
    f1.resize(static_cast<std::size_t>(m + 1) * (m + 1));
    for (int s = 0; s <= m; ++s)
      for (int s1 = 0; s1 <= m; ++s1) {
        Matrix f = commutator(gen, o1_[idx(s, s1)]) - commutator(Ld * ob1_[s1], o0_[s]);
        if (order_ >= 2) f -= 2.0 * Ld * ob2_[idx(s, s1)];
        f1[static_cast<std::size_t>(s) * (m + 1) + s1] = f;
      }
  }
  if (order_ >= 2) {
    f2.resize(static_cast<std::size_t>(m + 1) * (m + 1) * (m + 1));
    for (int s = 0; s <= m; ++s)
      for (int s1 = 0; s1 <= m; ++s1)
        for (int s2 = 0; s2 <= m; ++s2) {
          const Matrix sym = 0.5 * (commutator(Ld * ob1_[s1], o1_[idx(s, s2)]) +
                                    commutator(Ld * ob1_[s2], o1_[idx(s, s1)]));
          f2[(static_cast<std::size_t>(s) * (m + 1) + s1) * (m + 1) + s2] =
              commutator(gen, o2_[idx(s, s1, s2)]) - sym - commutator(Ld * ob2_[idx(s1, s2)], o0_[s]);
        }
  }
  for (int s = 0; s <= m; ++s) update(o0_[s], k0_[s], f0[s]);
  if (order_ >= 1)
    for (int s = 0; s <= m; ++s)
      for (int s1 = 0; s1 <= m; ++s1)
        update(o1_[idx(s, s1)], k1_[idx(s, s1)], f1[static_cast<std::size_t>(s) * (m + 1) + s1]);
  if (order_ >= 2)
    for (int s = 0; s <= m; ++s)
      for (int s1 = 0; s1 <= m; ++s1)
        for (int s2 = 0; s2 <= m; ++s2)
          update(o2_[idx(s, s1, s2)], k2_[idx(s, s1, s2)],
                 f2[(static_cast<std::size_t>(s) * (m + 1) + s1) * (m + 1) + s2]);
}

void ReferenceHierarchy::predict() {
  if (view_ != m_) throw Error("predict() called twice without correct()");
  if (m_ >= grid_.n_steps) throw OutOfRangeError("hierarchy is already at the end of its grid");
  stage(true);
  view_ = m_ + 1;
  boundary(view_);
  contract(view_);
}

void ReferenceHierarchy::correct() {
  if (view_ == m_) throw Error("correct() called without predict()");
  stage(false);
  m_ = view_;
  boundary(view_);
  contract(view_);
}

}  // namespace nmqi
