// Serial reference against the OpenMP path for the data-parallel kernels.
// Arg 0 runs Exec::serial, arg 1 Exec::parallel.

#include <benchmark/benchmark.h>

#include <random>

#include "ksdist/ks_energy.hpp"
#include "ksdist/moment.hpp"
#include "ksdist/spaces.hpp"

using namespace ksd;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) == 0 ? Exec::serial : Exec::parallel; }

const BuiltSpace& grid() {
  static const BuiltSpace b = build_minkowski_grid(Norm::p_norm(2, 3.0), Vec::Zero(2), Vec::Ones(2), 64, 4);
  return b;
}

void BM_MomentGrid(benchmark::State& state) {
  const Norm n = Norm::p_norm(2, 3.0);
  for (auto _ : state) benchmark::DoNotOptimize(moment_matrix(n, GridQuadrature{512, 3}, exec_of(state)).A(0, 0));
}

void BM_MomentMonteCarlo(benchmark::State& state) {
  const Norm n = Norm::p_norm(4, 3.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(moment_matrix(n, MonteCarloQuadrature{1'000'000, 1}, exec_of(state)).A(0, 0));
  }
}

void BM_BallTable(benchmark::State& state) {
  const MMSpace& s = grid().space;
  s.distances_from(0);  // warm the row cache outside the timed loop
  for (auto _ : state) benchmark::DoNotOptimize(BallTable(s, 6.0 / 64.0, exec_of(state)).nonzeros());
}

void BM_KsDensities(benchmark::State& state) {
  const MMSpace& s = grid().space;
  static const BallTable balls(s, 6.0 / 64.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::vector<double> v(s.size());
  for (auto& x : v) x = nd(rng);
  const ScalarField f = make_field(s, v);
  for (auto _ : state) benchmark::DoNotOptimize(ks_densities(s, balls, f, 2.0, exec_of(state)).back());
}

void BM_Doubling(benchmark::State& state) {
  const MMSpace& s = grid().space;
  for (auto _ : state) {
    benchmark::DoNotOptimize(doubling_constant(s, 0.15, {2.0 / 64.0, exec_of(state)}).global);
  }
}

}  // namespace

BENCHMARK(BM_MomentGrid)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_MomentMonteCarlo)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_BallTable)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_KsDensities)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Doubling)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
