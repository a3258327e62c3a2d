// Serial reference hierarchy against the packed, OpenMP-parallel one, plus the
// batched QSD ensemble. Arguments: steps, then threads where it applies.

#include <benchmark/benchmark.h>

#include "nmqi/hierarchy.hpp"
#include "nmqi/hierarchy_reference.hpp"
#include "nmqi/parallel.hpp"
#include "nmqi/stochastic.hpp"

namespace {

using namespace nmqi;

SystemModel cascade() { return build_cascade({1, 2, 3, 4}, {1, 1, 1}); }

TimeGrid grid(int steps) { return TimeGrid::covering(2.0 / steps, 2.0); }

void BM_ReferenceGrid(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    ReferenceHierarchy h(cascade(), CorrelationKernel::ou(1.0), grid(n));
    for (int m = 0; m < n; ++m) h.step();
    benchmark::DoNotOptimize(h.Obar0());
  }
  state.SetComplexityN(n);
}

void run_hierarchy(benchmark::State& state, HierarchyRoute route) {
  const int n = static_cast<int>(state.range(0));
  set_threads(static_cast<int>(state.range(1)));
  HierarchyOptions o;
  o.route = route;
  for (auto _ : state) {
    Hierarchy h(cascade(), CorrelationKernel::ou(1.0), grid(n), o);
    for (int m = 0; m < n; ++m) h.step();
    benchmark::DoNotOptimize(h.obar0());
  }
  state.counters["threads"] = threads();
  state.SetComplexityN(n);
}

void BM_HierarchyGrid(benchmark::State& state) { run_hierarchy(state, HierarchyRoute::Grid); }
void BM_HierarchyExponential(benchmark::State& state) { run_hierarchy(state, HierarchyRoute::Exponential); }

void BM_Ensemble(benchmark::State& state) {
  const int n = 200;
  const TimeGrid g = grid(n);
  const CorrelationKernel k = CorrelationKernel::ou(1.0);
  const SystemModel m = cascade();
  HierarchyOptions ho;
  ho.route = HierarchyRoute::Exponential;
  const ObarTape tape = record_tape(m, k, g, ho);
  const NoiseGenerator noise(k, g, 7);
  EnsembleOptions eo;
  eo.trajectories = static_cast<int>(state.range(0));
  set_threads(static_cast<int>(state.range(1)));
  const Vector psi0 = Vector::Constant(4, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(run_ensemble(m, tape, noise, psi0, eo).count);
  state.counters["threads"] = threads();
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

const int kMaxThreads = threads();

void thread_args(benchmark::internal::Benchmark* b, std::initializer_list<int> sizes) {
  for (int n : sizes) {
    b->Args({n, 1});
    if (kMaxThreads > 1) b->Args({n, kMaxThreads});
  }
}

// The reference refuses more than 60 steps.
BENCHMARK(BM_ReferenceGrid)->Arg(10)->Arg(20)->Arg(30)->Unit(benchmark::kMillisecond)->Complexity();
BENCHMARK(BM_HierarchyGrid)->Apply([](auto* b) { thread_args(b, {10, 20, 30, 80}); })->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HierarchyExponential)->Apply([](auto* b) { thread_args(b, {100, 200}); })->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Ensemble)->Apply([](auto* b) { thread_args(b, {256}); })->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
