#include "nmqi/hierarchy.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "nmqi/errors.hpp"

namespace nmqi {

namespace {

using CVec = std::vector<cplx>;

// y += A x with A row-major rows x cols.
inline void gemv_acc(const cplx* A, int rows, int cols, const cplx* x, cplx* y) {
  for (int i = 0; i < rows; ++i) {
    cplx acc = 0.0;
    const cplx* a = A + static_cast<std::size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) acc += a[j] * x[j];
    y[i] += acc;
  }
}

inline void axpy(cplx a, const cplx* x, int n, cplx* y) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

CVec to_rowmajor(const Matrix& m) {
  CVec v(static_cast<std::size_t>(m.rows() * m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[i * m.cols() + j] = m(i, j);
  return v;
}

// Heun / exponential-Heun update for dy = -lambda y + f.
struct StepConsts {
  cplx decay = 1.0;  // exp(-lambda h)
  cplx phi1 = 0.0;   // h phi1
  cplx phi2 = 0.0;   // h phi2
};

StepConsts step_consts(cplx lambda, double h) {
  const ExpWeights w = exp_product_weights(lambda, h);
  return {w.decay, w.near + w.far, w.near};
}

inline void advance(cplx* y, cplx* fbuf, const cplx* f, int d, const StepConsts& c, bool predictor) {
  if (predictor) {
    for (int i = 0; i < d; ++i) {
      y[i] = flush_tiny(c.decay * y[i] + c.phi1 * f[i]);
      fbuf[i] = -c.phi2 * f[i];
    }
  } else {
    for (int i = 0; i < d; ++i) y[i] = flush_tiny(y[i] + fbuf[i] + c.phi2 * f[i]);
  }
}

constexpr char kMagic[8] = {'N', 'M', 'Q', 'I', 'H', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void put(std::ostream& o, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");
  o.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("truncated checkpoint");
  return v;
}
void put_array(std::ostream& o, const CVec& v) {
  put<std::uint64_t>(o, v.size());
  o.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(cplx)));
}
void get_array(std::istream& in, CVec& v) {
  const auto n = get<std::uint64_t>(in);
  if (n != v.size()) throw Error("checkpoint array size does not match this hierarchy");
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(cplx)));
  if (!in) throw Error("truncated checkpoint");
}

HierarchyRoute resolve_route(HierarchyRoute r, const CorrelationKernel& k) {
  if (r == HierarchyRoute::Auto)
    return k.is_exponential() ? HierarchyRoute::Exponential : HierarchyRoute::Grid;
  if (r == HierarchyRoute::Exponential && !k.is_exponential())
    throw Error("the exponential route needs an OU or exponential-sum kernel");
  return r;
}

}  // namespace

std::string to_string(HierarchyRoute r) {
  switch (r) {
    case HierarchyRoute::Auto: return "auto";
    case HierarchyRoute::Grid: return "grid";
    case HierarchyRoute::Exponential: return "exponential";
  }
  return "auto";
}

HierarchyRoute route_from_string(const std::string& s) {
  if (s == "auto") return HierarchyRoute::Auto;
  if (s == "grid") return HierarchyRoute::Grid;
  if (s == "exponential") return HierarchyRoute::Exponential;
  throw Error("unknown hierarchy route '" + s + "'");
}

MemoryEstimate Hierarchy::estimate(HierarchyRoute route, int n_steps, int d0, int d1, int d2, int terms) {
  const std::size_t np = static_cast<std::size_t>(n_steps) + 1;
  const std::size_t tr = tri_size(static_cast<int>(np));
  std::size_t state = 0;
  MemoryEstimate e;
  if (route == HierarchyRoute::Grid) {
    state = np * d0 + np * np * d1 + np * tr * d2;
    e.order2_elements = np * np * np * d2;
  } else {
    state = (d1 > 0 ? np * d0 + np * np * d1 : 0) + terms * (d0 + np * d1 + tr * d2);
  }
  const std::size_t bars = d0 + np * d1 + tr * d2;
  e.bytes = (2 * state + bars) * sizeof(cplx);
  return e;
}

Hierarchy::Hierarchy(const SystemModel& model, const CorrelationKernel& kernel, const TimeGrid& grid,
                     HierarchyOptions opts)
    : model_(model),
      grid_(grid),
      opts_(opts),
      route_(resolve_route(opts.route, kernel)),
      quad_(kernel, grid.dt, grid.n_steps,
            route_ == HierarchyRoute::Exponential ? QuadratureKind::Exponential : QuadratureKind::Trapezoid) {
  model_.validate();
  if (grid.n_steps < 1 || !(grid.dt > 0)) throw Error("time grid needs dt > 0 and at least one step");
  bases_ = detect_invariant_subspaces(model_.generators(), opts_.subspaces);
  const ForbiddenReport fr = verify_forbidden(model_, bases_);
  if (!fr.pass) {
    std::string msg = "model violates the forbidden conditions:";
    for (const auto& d : fr.diagnostics) msg += " " + d + ";";
    throw Error(msg);
  }
  order_ = static_cast<int>(bases_.size()) - 1;
  for (int k = 0; k <= order_; ++k) d_[k] = bases_[k].size();
  np_ = grid.n_steps + 1;
  terms_ = route_ == HierarchyRoute::Exponential ? quad_.terms() : 0;
  keep_o0_ = route_ == HierarchyRoute::Grid || d_[1] > 0 || opts_.freeze_o0;

  mem_ = estimate(route_, grid.n_steps, d_[0], d_[1], d_[2], terms_);
  if (mem_.order2_elements > opts_.order2_cap) {
    std::ostringstream os;
    os << "order-2 grid needs (n+1)^3 * dim(S2) = " << mem_.order2_elements << " entries, cap is "
       << opts_.order2_cap << "; use fewer steps or the exponential route";
    throw MemoryBudgetError(os.str());
  }
  if (mem_.bytes > opts_.memory_cap_bytes) {
    std::ostringstream os;
    os << "hierarchy storage needs " << mem_.bytes << " bytes, cap is " << opts_.memory_cap_bytes;
    throw MemoryBudgetError(os.str());
  }

  build_operators();
  allocate();
  append_boundary(0);
  contract(0);
}

void Hierarchy::build_operators() {
  const Matrix& L = model_.L;
  const Matrix Ld = L.adjoint();
  const auto& B = bases_;
  const double tol = 1e-8;
  ell_ = to_rowmajor(B[0].project(L, tol));

  const auto terms = model_.hamiltonian_terms();
  ham_.assign(3, {});
  t0_.assign(3, {});
  for (int k = 0; k <= order_; ++k) {
    if (d_[k] == 0) continue;
    for (const Matrix& h : terms)
      ham_[k].push_back(to_rowmajor(restrict_map(B[k], B[k], [&](const Matrix& x) { return Matrix(-kI * commutator(h, x)); }, tol)));
    for (int a = 0; a < d_[0]; ++a) {
      const Matrix g = Ld * B[0][a];
      t0_[k].push_back(to_rowmajor(restrict_map(B[k], B[k], [&](const Matrix& x) { return Matrix(-commutator(g, x)); }, tol)));
    }
  }
  if (d_[1] > 0) {
    lam10_ = to_rowmajor(restrict_map(B[1], B[0], [&](const Matrix& x) { return Matrix(-Ld * x); }, tol));
    phi01_ = to_rowmajor(restrict_map(B[0], B[1], [&](const Matrix& x) { return commutator(L, x); }, tol));
    for (int a = 0; a < d_[1]; ++a) {
      const Matrix g = Ld * B[1][a];
      beta10_.push_back(to_rowmajor(restrict_map(B[0], B[1], [&](const Matrix& y) { return Matrix(-commutator(g, y)); }, tol)));
    }
  }
  if (d_[2] > 0) {
    lam21_ = to_rowmajor(restrict_map(B[2], B[1], [&](const Matrix& x) { return Matrix(-2.0 * Ld * x); }, tol));
    phi12_ = to_rowmajor(restrict_map(B[1], B[2], [&](const Matrix& x) { return Matrix(0.5 * commutator(L, x)); }, tol));
    for (int a = 0; a < d_[1]; ++a) {
      const Matrix g = Ld * B[1][a];
      beta11_.push_back(to_rowmajor(restrict_map(B[1], B[2], [&](const Matrix& z) { return Matrix(-commutator(g, z)); }, tol)));
    }
    for (int a = 0; a < d_[2]; ++a) {
      const Matrix g = Ld * B[2][a];
      beta20_.push_back(to_rowmajor(restrict_map(B[0], B[2], [&](const Matrix& y) { return Matrix(-commutator(g, y)); }, tol)));
    }
  }
  for (int k = 0; k < 3; ++k) A_[k].assign(static_cast<std::size_t>(d_[k]) * d_[k], 0.0);
}

void Hierarchy::allocate() {
  const std::size_t np = np_;
  const std::size_t tr = tri_size(np_);
  if (keep_o0_) o0_.assign(np * d_[0], 0.0);
  if (d_[1] > 0 && keep_o0_) o1_.assign(np * np * d_[1], 0.0);
  if (route_ == HierarchyRoute::Grid && d_[2] > 0) o2_.assign(np * tr * d_[2], 0.0);
  if (route_ == HierarchyRoute::Exponential) {
    b0_.assign(static_cast<std::size_t>(terms_) * d_[0], 0.0);
    b1_.assign(static_cast<std::size_t>(terms_) * np * d_[1], 0.0);
    b2_.assign(static_cast<std::size_t>(terms_) * tr * d_[2], 0.0);
  }
  fo0_.assign(o0_.size(), 0.0);
  fo1_.assign(o1_.size(), 0.0);
  fo2_.assign(o2_.size(), 0.0);
  fb0_.assign(b0_.size(), 0.0);
  fb1_.assign(b1_.size(), 0.0);
  fb2_.assign(b2_.size(), 0.0);
  ob0_.assign(d_[0], 0.0);
  ob1_.assign(np * d_[1], 0.0);
  ob2_.assign(tr * d_[2], 0.0);
}

void Hierarchy::assemble_generators(double t) {
  const auto scal = model_.hamiltonian_scalars(t);
  for (int k = 0; k <= order_; ++k) {
    if (d_[k] == 0) continue;
    CVec& A = A_[k];
    std::fill(A.begin(), A.end(), cplx(0.0));
    for (std::size_t q = 0; q < scal.size(); ++q)
      for (std::size_t i = 0; i < A.size(); ++i) A[i] += scal[q] * ham_[k][q][i];
    for (int a = 0; a < d_[0]; ++a)
      for (std::size_t i = 0; i < A.size(); ++i) A[i] += ob0_[a] * t0_[k][a][i];
  }
}

void Hierarchy::append_boundary(int v) {
  const int d0 = d_[0], d1 = d_[1], d2 = d_[2];
  if (keep_o0_) std::copy(ell_.begin(), ell_.end(), o0_.begin() + static_cast<std::size_t>(v) * d0);
  if (d1 > 0 && keep_o0_) {
    for (int s = 0; s <= v; ++s) {
      cplx* dst = o1_.data() + (static_cast<std::size_t>(s) * np_ + v) * d1;
      std::fill(dst, dst + d1, cplx(0.0));
      gemv_acc(phi01_.data(), d1, d0, o0(s), dst);
    }
    cplx* row = o1_.data() + static_cast<std::size_t>(v) * np_ * d1;
    std::fill(row, row + static_cast<std::size_t>(v) * d1, cplx(0.0));
  }
  if (route_ == HierarchyRoute::Grid && d2 > 0) {
    const std::size_t tr = tri_size(np_);
    for (int s = 0; s <= v; ++s) {
      for (int s1 = 0; s1 <= v; ++s1) {
        cplx* dst = o2_.data() + (static_cast<std::size_t>(s) * tr + tri(s1, v)) * d2;
        std::fill(dst, dst + d2, cplx(0.0));
        gemv_acc(phi12_.data(), d2, d1, o1(s, s1), dst);
      }
    }
    cplx* row = o2_.data() + static_cast<std::size_t>(v) * tr * d2;
    std::fill(row, row + tri_size(v + 1) * d2, cplx(0.0));
  }
  if (route_ == HierarchyRoute::Exponential) {
    const std::size_t tr = tri_size(np_);
    for (int j = 0; j < terms_; ++j) {
      const cplx* b0 = b0_.data() + static_cast<std::size_t>(j) * d0;
      cplx* b1 = b1_.data() + static_cast<std::size_t>(j) * np_ * d1;
      cplx* b2 = b2_.data() + static_cast<std::size_t>(j) * tr * d2;
      if (d1 > 0) {
        cplx* dst = b1 + static_cast<std::size_t>(v) * d1;
        std::fill(dst, dst + d1, cplx(0.0));
        gemv_acc(phi01_.data(), d1, d0, b0, dst);
      }
      if (d2 > 0) {
        for (int s1 = 0; s1 <= v; ++s1) {
          cplx* dst = b2 + tri(s1, v) * d2;
          std::fill(dst, dst + d2, cplx(0.0));
          gemv_acc(phi12_.data(), d2, d1, b1 + static_cast<std::size_t>(s1) * d1, dst);
        }
      }
    }
  }
}

void Hierarchy::contract(int v) {
  const int d0 = d_[0], d1 = d_[1], d2 = d_[2];
  std::fill(ob0_.begin(), ob0_.end(), cplx(0.0));
  std::fill(ob1_.begin(), ob1_.begin() + static_cast<std::size_t>(v + 1) * d1, cplx(0.0));
  std::fill(ob2_.begin(), ob2_.begin() + tri_size(v + 1) * d2, cplx(0.0));
  if (route_ == HierarchyRoute::Exponential) {
    const std::size_t tr = tri_size(np_);
    for (int j = 0; j < terms_; ++j) {
      axpy(1.0, b0_.data() + static_cast<std::size_t>(j) * d0, d0, ob0_.data());
      axpy(1.0, b1_.data() + static_cast<std::size_t>(j) * np_ * d1, (v + 1) * d1, ob1_.data());
      axpy(1.0, b2_.data() + static_cast<std::size_t>(j) * tr * d2, static_cast<int>(tri_size(v + 1)) * d2,
           ob2_.data());
    }
    return;
  }
  CVec w;
  quad_.bar_weights(v, w);
  for (int s = 0; s <= v; ++s) axpy(w[s], o0(s), d0, ob0_.data());
  if (d1 > 0) {
#pragma omp parallel for schedule(static)
    for (int s1 = 0; s1 <= v; ++s1) {
      cplx* dst = ob1_.data() + static_cast<std::size_t>(s1) * d1;
      for (int s = 0; s <= v; ++s) axpy(w[s], o1(s, s1), d1, dst);
    }
  }
  if (d2 > 0) {
    const std::size_t tr = tri_size(np_);
#pragma omp parallel for schedule(static)
    for (int s2 = 0; s2 <= v; ++s2) {
      cplx* dst = ob2_.data() + tri(0, s2) * d2;
      const int len = (s2 + 1) * d2;
      for (int s = 0; s <= v; ++s)
        axpy(w[s], o2_.data() + (static_cast<std::size_t>(s) * tr + tri(0, s2)) * d2, len, dst);
    }
  }
}

void Hierarchy::stage(bool predictor) {
  const int d0 = d_[0], d1 = d_[1], d2 = d_[2];
  const int v = view_;
  const int ev = m_;
  const double h = grid_.dt;
  const std::size_t tr = tri_size(np_);
  assemble_generators(grid_.time(v));
  const StepConsts plain = step_consts(0.0, h);

  // Per-s1 source matrices M1 = sum_a obar1_a beta10_a, M2 = sum_a obar1_a beta11_a.
  CVec M1, M2;
  if (d1 > 0) {
    M1.assign(static_cast<std::size_t>(ev + 1) * d1 * d0, 0.0);
    if (d2 > 0) M2.assign(static_cast<std::size_t>(ev + 1) * d2 * d1, 0.0);
    for (int s1 = 0; s1 <= ev; ++s1) {
      const cplx* ob = obar1(s1);
      for (int a = 0; a < d1; ++a) {
        axpy(ob[a], beta10_[a].data(), d1 * d0, M1.data() + static_cast<std::size_t>(s1) * d1 * d0);
        if (d2 > 0) axpy(ob[a], beta11_[a].data(), d2 * d1, M2.data() + static_cast<std::size_t>(s1) * d2 * d1);
      }
    }
  }
  auto m1 = [&](int s1) { return M1.data() + static_cast<std::size_t>(s1) * d1 * d0; };
  auto m2 = [&](int s1) { return M2.data() + static_cast<std::size_t>(s1) * d2 * d1; };

  // Level 2.
  if (route_ == HierarchyRoute::Grid && d2 > 0) {
#pragma omp parallel for schedule(dynamic, 4)
    for (int s = 0; s <= ev; ++s) {
      CVec f(d2), g(d2), q(static_cast<std::size_t>(d2) * d2);
      // q_a = beta20_a o0(s)
      std::fill(q.begin(), q.end(), cplx(0.0));
      for (int a = 0; a < d2; ++a) gemv_acc(beta20_[a].data(), d2, d0, o0(s), q.data() + a * d2);
      for (int s2 = 0; s2 <= ev; ++s2) {
        for (int s1 = 0; s1 <= s2; ++s1) {
          const std::size_t off = (static_cast<std::size_t>(s) * tr + tri(s1, s2)) * d2;
          cplx* y = o2_.data() + off;
          std::fill(f.begin(), f.end(), cplx(0.0));
          gemv_acc(A_[2].data(), d2, d2, y, f.data());
          std::fill(g.begin(), g.end(), cplx(0.0));
          gemv_acc(m2(s1), d2, d1, o1(s, s2), g.data());
          gemv_acc(m2(s2), d2, d1, o1(s, s1), g.data());
          axpy(0.5, g.data(), d2, f.data());
          const cplx* ob = obar2(s1, s2);
          for (int a = 0; a < d2; ++a) axpy(ob[a], q.data() + a * d2, d2, f.data());
          advance(y, fo2_.data() + off, f.data(), d2, plain, predictor);
        }
      }
    }
  }
  if (route_ == HierarchyRoute::Exponential && d2 > 0) {
    for (int j = 0; j < terms_; ++j) {
      const StepConsts c = step_consts(quad_.term_rate(j), h);
      const cplx* b0 = b0_.data() + static_cast<std::size_t>(j) * d0;
      const cplx* b1 = b1_.data() + static_cast<std::size_t>(j) * np_ * d1;
      cplx* b2 = b2_.data() + static_cast<std::size_t>(j) * tr * d2;
      cplx* fb2 = fb2_.data() + static_cast<std::size_t>(j) * tr * d2;
      CVec q(static_cast<std::size_t>(d2) * d2, 0.0);
      for (int a = 0; a < d2; ++a) gemv_acc(beta20_[a].data(), d2, d0, b0, q.data() + a * d2);
#pragma omp parallel for schedule(dynamic, 8)
      for (int s2 = 0; s2 <= ev; ++s2) {
        CVec f(d2), g(d2);
        for (int s1 = 0; s1 <= s2; ++s1) {
          const std::size_t off = tri(s1, s2) * d2;
          std::fill(f.begin(), f.end(), cplx(0.0));
          std::fill(g.begin(), g.end(), cplx(0.0));
          gemv_acc(A_[2].data(), d2, d2, b2 + off, f.data());
          gemv_acc(m2(s1), d2, d1, b1 + static_cast<std::size_t>(s2) * d1, g.data());
          gemv_acc(m2(s2), d2, d1, b1 + static_cast<std::size_t>(s1) * d1, g.data());
          axpy(0.5, g.data(), d2, f.data());
          const cplx* ob = obar2(s1, s2);
          for (int a = 0; a < d2; ++a) axpy(ob[a], q.data() + a * d2, d2, f.data());
          advance(b2 + off, fb2 + off, f.data(), d2, c, predictor);
        }
      }
    }
  }

  // Level 1.
  if (d1 > 0 && keep_o0_) {
#pragma omp parallel for schedule(static)
    for (int s = 0; s <= ev; ++s) {
      CVec f(d1);
      for (int s1 = 0; s1 <= ev; ++s1) {
        const std::size_t off = (static_cast<std::size_t>(s) * np_ + s1) * d1;
        cplx* y = o1_.data() + off;
        std::fill(f.begin(), f.end(), cplx(0.0));
        gemv_acc(A_[1].data(), d1, d1, y, f.data());
        gemv_acc(m1(s1), d1, d0, o0(s), f.data());
        if (d2 > 0) gemv_acc(lam21_.data(), d1, d2, obar2(s, s1), f.data());
        advance(y, fo1_.data() + off, f.data(), d1, plain, predictor);
      }
    }
  }
  if (route_ == HierarchyRoute::Exponential && d1 > 0) {
    CVec col(static_cast<std::size_t>(v + 1) * d2);
    CVec dk(static_cast<std::size_t>(ev + 1) * d2);
    for (int j = 0; j < terms_; ++j) {
      const StepConsts c = step_consts(quad_.term_rate(j), h);
      const cplx* b0 = b0_.data() + static_cast<std::size_t>(j) * d0;
      cplx* b1 = b1_.data() + static_cast<std::size_t>(j) * np_ * d1;
      cplx* fb1 = fb1_.data() + static_cast<std::size_t>(j) * np_ * d1;
      if (d2 > 0) {
        for (int s1 = 0; s1 <= ev; ++s1) {
          for (int s = 0; s <= v; ++s) std::copy(obar2(s, s1), obar2(s, s1) + d2, col.begin() + s * d2);
          quad_.endpoint(v, j, col.data(), d2, dk.data() + static_cast<std::size_t>(s1) * d2);
        }
      }
#pragma omp parallel for schedule(static)
      for (int s1 = 0; s1 <= ev; ++s1) {
        CVec f(d1, 0.0);
        cplx* y = b1 + static_cast<std::size_t>(s1) * d1;
        gemv_acc(A_[1].data(), d1, d1, y, f.data());
        gemv_acc(m1(s1), d1, d0, b0, f.data());
        if (d2 > 0) gemv_acc(lam21_.data(), d1, d2, dk.data() + static_cast<std::size_t>(s1) * d2, f.data());
        advance(y, fb1 + static_cast<std::size_t>(s1) * d1, f.data(), d1, c, predictor);
      }
    }
  }

  // Level 0.
  if (keep_o0_ && !opts_.freeze_o0) {
#pragma omp parallel for schedule(static)
    for (int s = 0; s <= ev; ++s) {
      CVec f(d0, 0.0);
      cplx* y = o0_.data() + static_cast<std::size_t>(s) * d0;
      gemv_acc(A_[0].data(), d0, d0, y, f.data());
      if (d1 > 0) gemv_acc(lam10_.data(), d0, d1, obar1(s), f.data());
      advance(y, fo0_.data() + static_cast<std::size_t>(s) * d0, f.data(), d0, plain, predictor);
    }
  }
  if (route_ == HierarchyRoute::Exponential) {
    CVec cj(d1);
    for (int j = 0; j < terms_; ++j) {
      const StepConsts c = step_consts(quad_.term_rate(j), h);
      cplx* y = b0_.data() + static_cast<std::size_t>(j) * d0;
      CVec f(d0, 0.0);
      axpy(quad_.term_amplitude(j), ell_.data(), d0, f.data());
      if (!opts_.freeze_o0) {
        gemv_acc(A_[0].data(), d0, d0, y, f.data());
        if (d1 > 0) {
          quad_.endpoint(v, j, ob1_.data(), d1, cj.data());
          gemv_acc(lam10_.data(), d0, d1, cj.data(), f.data());
        }
      }
      advance(y, fb0_.data() + static_cast<std::size_t>(j) * d0, f.data(), d0, c, predictor);
    }
  }
}

void Hierarchy::predict() {
  if (in_trial()) throw Error("predict() called twice without correct()");
  if (m_ >= grid_.n_steps) throw OutOfRangeError("hierarchy is already at the end of its grid");
  stage(true);
  view_ = m_ + 1;
  append_boundary(view_);
  contract(view_);
}

void Hierarchy::correct() {
  if (!in_trial()) throw Error("correct() called without predict()");
  stage(false);
  m_ = view_;
  append_boundary(view_);
  contract(view_);
}

Matrix Hierarchy::O0(int s) const {
  if (!keep_o0_) throw Error("this hierarchy does not keep an O0 grid");
  return bases_[0].reconstruct(Eigen::Map<const Vector>(o0(s), d_[0]));
}

Matrix Hierarchy::O1(int s, int s1) const {
  if (d_[1] == 0) return Matrix::Zero(model_.dim, model_.dim);
  return bases_[1].reconstruct(Eigen::Map<const Vector>(o1(s, s1), d_[1]));
}

Matrix Hierarchy::O2(int s, int s1, int s2) const {
  if (d_[2] == 0) return Matrix::Zero(model_.dim, model_.dim);
  if (!has_o2_grid()) throw Error("the exponential route keeps no O2 grid");
  return bases_[2].reconstruct(Eigen::Map<const Vector>(o2(s, s1, s2), d_[2]));
}

Matrix Hierarchy::Obar0() const { return bases_[0].reconstruct(Eigen::Map<const Vector>(obar0(), d_[0])); }

Matrix Hierarchy::Obar1(int s1) const {
  if (d_[1] == 0) return Matrix::Zero(model_.dim, model_.dim);
  return bases_[1].reconstruct(Eigen::Map<const Vector>(obar1(s1), d_[1]));
}

Matrix Hierarchy::Obar2(int s1, int s2) const {
  if (d_[2] == 0) return Matrix::Zero(model_.dim, model_.dim);
  return bases_[2].reconstruct(Eigen::Map<const Vector>(obar2(s1, s2), d_[2]));
}

Matrix Hierarchy::trapezoid_obar0() const {
  if (!keep_o0_) throw Error("this hierarchy does not keep an O0 grid");
  CVec w;
  const KernelQuadrature trap(quad_.kernel(), grid_.dt, grid_.n_steps, QuadratureKind::Trapezoid);
  trap.bar_weights(view_, w);
  Vector c = Vector::Zero(d_[0]);
  for (int s = 0; s <= view_; ++s) c += w[s] * Eigen::Map<const Vector>(o0(s), d_[0]);
  return bases_[0].reconstruct(c);
}

void Hierarchy::save(std::ostream& out) const {
  if (in_trial()) throw Error("cannot checkpoint a trial state");
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::int32_t>(out, static_cast<std::int32_t>(route_));
  for (int k = 0; k < 3; ++k) put<std::int32_t>(out, d_[k]);
  put<std::int32_t>(out, terms_);
  put<std::int32_t>(out, grid_.n_steps);
  put<std::int32_t>(out, m_);
  put<double>(out, grid_.dt);
  for (const CVec* a : {&o0_, &o1_, &o2_, &b0_, &b1_, &b2_}) put_array(out, *a);
  if (!out) throw Error("checkpoint write failed");
}

void Hierarchy::load(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw Error("not a hierarchy checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  const auto route = static_cast<HierarchyRoute>(get<std::int32_t>(in));
  int d[3];
  for (int& x : d) x = get<std::int32_t>(in);
  const int terms = get<std::int32_t>(in);
  const int n = get<std::int32_t>(in);
  const int m = get<std::int32_t>(in);
  const double dt = get<double>(in);
  if (route != route_ || d[0] != d_[0] || d[1] != d_[1] || d[2] != d_[2] || terms != terms_ ||
      n != grid_.n_steps || dt != grid_.dt || m < 0 || m > n)
    throw Error("checkpoint does not match this hierarchy configuration");
  for (CVec* a : {&o0_, &o1_, &o2_, &b0_, &b1_, &b2_}) get_array(in, *a);
  m_ = view_ = m;
  contract(m_);
}

}  // namespace nmqi
