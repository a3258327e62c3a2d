#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "nmqi/kernels.hpp"
#include "nmqi/models.hpp"
#include "nmqi/operator_core.hpp"

namespace nmqi {

/// Grid keeps every O_j slice and contracts with trapezoid weights.
/// Exponential keeps per-exponential contractions of O_j as extra state, which
/// removes the O_2 grid; it needs an exponential kernel.
enum class HierarchyRoute { Auto, Grid, Exponential };

std::string to_string(HierarchyRoute r);
HierarchyRoute route_from_string(const std::string& s);

struct HierarchyOptions {
  HierarchyRoute route = HierarchyRoute::Auto;
  SubspaceOptions subspaces;
  /// Grid route: refuse when (n_steps + 1)^3 * dim(S2) exceeds this.
  std::size_t order2_cap = std::size_t{161} * 161 * 161;
  std::size_t memory_cap_bytes = std::size_t{3} << 30;
  /// Test hook: keep O0(t, s) = L for every slice.
  bool freeze_o0 = false;
};

struct MemoryEstimate {
  std::size_t bytes = 0;
  std::size_t order2_elements = 0;
};

/// Index of (i, j) with i <= j in packed symmetric storage.
inline std::size_t tri(int i, int j) {
  if (i > j) std::swap(i, j);
  return static_cast<std::size_t>(j) * (j + 1) / 2 + i;
}
inline std::size_t tri_size(int n) { return static_cast<std::size_t>(n) * (n + 1) / 2; }

/// The noise-expanded O-operator hierarchy on a uniform grid, stored as
/// coefficients over the invariant subspaces S_0, S_1, S_2.
///
/// Stepping is Heun's method (exponential-integrator form for the decaying
/// contraction variables of the exponential route). predict() moves to a trial
/// state at t_{m+1}; correct() commits it. Accessors read whichever state is
/// current, so a caller can evaluate its own stage in between.
class Hierarchy {
 public:
  Hierarchy(const SystemModel& model, const CorrelationKernel& kernel, const TimeGrid& grid,
            HierarchyOptions opts = {});

  static MemoryEstimate estimate(HierarchyRoute route, int n_steps, int d0, int d1, int d2, int terms);

  void predict();
  void correct();
  void step() {
    predict();
    correct();
  }

  /// Index of the state the accessors describe (m, or m + 1 while in trial).
  int index() const { return view_; }
  double time() const { return grid_.time(view_); }
  int committed_index() const { return m_; }
  bool in_trial() const { return view_ != m_; }

  HierarchyRoute route() const { return route_; }
  int order() const { return order_; }
  int dim(int level) const { return d_[level]; }
  const std::vector<OperatorBasis>& bases() const { return bases_; }
  const SystemModel& model() const { return model_; }
  const TimeGrid& grid() const { return grid_; }
  const KernelQuadrature& quadrature() const { return quad_; }
  const MemoryEstimate& memory() const { return mem_; }
  bool has_o0_grid() const { return keep_o0_; }
  bool has_o2_grid() const { return route_ == HierarchyRoute::Grid && d_[2] > 0; }

  // Coefficient views at the current index v. Row strides are in entries.
  const cplx* o0(int s) const { return o0_.data() + static_cast<std::size_t>(s) * d_[0]; }
  const cplx* o1(int s, int s1) const { return o1_.data() + (static_cast<std::size_t>(s) * np_ + s1) * d_[1]; }
  const cplx* o2(int s, int s1, int s2) const {
    return o2_.data() + (static_cast<std::size_t>(s) * tri_size(np_) + tri(s1, s2)) * d_[2];
  }
  const cplx* obar0() const { return ob0_.data(); }
  const cplx* obar1(int s1) const { return ob1_.data() + static_cast<std::size_t>(s1) * d_[1]; }
  const cplx* obar2(int s1, int s2) const { return ob2_.data() + tri(s1, s2) * d_[2]; }
  /// Row stride between O1(s, .) rows.
  int o1_row() const { return np_; }

  Matrix O0(int s) const;
  Matrix O1(int s, int s1) const;
  Matrix O2(int s, int s1, int s2) const;
  Matrix Obar0() const;
  Matrix Obar1(int s1) const;
  Matrix Obar2(int s1, int s2) const;
  /// Trapezoid contraction of the stored O0 grid against alpha(t, .), for
  /// comparing with Obar0() on the exponential route.
  Matrix trapezoid_obar0() const;

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  void build_operators();
  void allocate();
  void stage(bool predictor);
  void append_boundary(int v);
  void contract(int v);
  void assemble_generators(double t);

  SystemModel model_;
  TimeGrid grid_;
  HierarchyOptions opts_;
  HierarchyRoute route_;
  KernelQuadrature quad_;
  int order_ = 0;
  int d_[3] = {0, 0, 0};
  int np_ = 0;  // grid points, n_steps + 1
  int terms_ = 0;
  bool keep_o0_ = true;
  MemoryEstimate mem_;
  std::vector<OperatorBasis> bases_;

  // Structure tensors, row-major.
  std::vector<cplx> ell_;                       // L in S0
  std::vector<std::vector<std::vector<cplx>>> ham_;  // [level][term] d x d
  std::vector<std::vector<std::vector<cplx>>> t0_;   // [level][a] d x d, X -> -[L^dag E0_a, X]
  std::vector<cplx> lam10_, lam21_;             // -L^dag, -2 L^dag
  std::vector<std::vector<cplx>> beta10_, beta11_, beta20_;
  std::vector<cplx> phi01_, phi12_;

  // Current generators.
  std::vector<cplx> A_[3];

  int m_ = 0;
  int view_ = 0;

  std::vector<cplx> o0_, o1_, o2_;
  std::vector<cplx> fo0_, fo1_, fo2_;
  std::vector<cplx> b0_, b1_, b2_;  // exponential route, per term
  std::vector<cplx> fb0_, fb1_, fb2_;
  std::vector<cplx> ob0_, ob1_, ob2_;
};

}  // namespace nmqi
