#pragma once

#include <vector>

#include "nmqi/kernels.hpp"
#include "nmqi/models.hpp"

namespace nmqi {

/// Serial grid-route hierarchy on full N x N matrices. It uses no subspace
/// compression, no packed storage and no threads, and exists to check
/// Hierarchy and to give the benchmark a baseline.
class ReferenceHierarchy {
 public:
  ReferenceHierarchy(const SystemModel& model, const CorrelationKernel& kernel, const TimeGrid& grid);

  void predict();
  void correct();
  void step() {
    predict();
    correct();
  }

  int index() const { return view_; }
  double time() const { return grid_.time(view_); }
  int order() const { return order_; }

  const Matrix& O0(int s) const { return o0_[s]; }
  const Matrix& O1(int s, int s1) const { return order_ >= 1 ? o1_[idx(s, s1)] : zero_; }
  const Matrix& O2(int s, int s1, int s2) const { return order_ >= 2 ? o2_[idx(s, s1, s2)] : zero_; }
  const Matrix& Obar0() const { return ob0_; }
  const Matrix& Obar1(int s1) const { return order_ >= 1 ? ob1_[s1] : zero_; }
  const Matrix& Obar2(int s1, int s2) const { return order_ >= 2 ? ob2_[idx(s1, s2)] : zero_; }

 private:
  std::size_t idx(int a, int b) const { return static_cast<std::size_t>(a) * np_ + b; }
  std::size_t idx(int a, int b, int c) const { return (static_cast<std::size_t>(a) * np_ + b) * np_ + c; }
  void stage(bool predictor);
  void boundary(int v);
  void contract(int v);

  SystemModel model_;
  TimeGrid grid_;
  KernelQuadrature quad_;
  int order_ = 0;
  int np_ = 0;
  int m_ = 0;
  int view_ = 0;
  Matrix zero_;
  std::vector<Matrix> o0_, o1_, o2_;
  std::vector<Matrix> k0_, k1_, k2_;  // predictor slopes
  Matrix ob0_;
  std::vector<Matrix> ob1_, ob2_;
};

}  // namespace nmqi
