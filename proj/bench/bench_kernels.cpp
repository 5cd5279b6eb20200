// Serial reference vs OpenMP kernels.
#include <memory>
#include <vector>

#include <benchmark/benchmark.h>

#include "kwl/density_lab.hpp"
#include "kwl/execution.hpp"
#include "kwl/kac_walk.hpp"

namespace {

kwl::EnsembleConfig ensemble_config(std::size_t n, std::size_t walkers) {
  kwl::EnsembleConfig cfg;
  cfg.n = n;
  cfg.walkers = walkers;
  cfg.steps = 1;
  cfg.seed = 42;
  return cfg;
}

void BM_EnsembleAdvanceSerial(benchmark::State& state) {
  kwl::Ensemble ens(ensemble_config(static_cast<std::size_t>(state.range(0)), 1 << 16));
  for (auto _ : state) ens.advance_serial(16);
  state.SetItemsProcessed(state.iterations() * (1 << 16) * 16);
}

void BM_EnsembleAdvanceParallel(benchmark::State& state) {
  kwl::set_thread_count(static_cast<int>(state.range(1)));
  kwl::Ensemble ens(ensemble_config(static_cast<std::size_t>(state.range(0)), 1 << 16));
  for (auto _ : state) ens.advance(16);
  state.SetItemsProcessed(state.iterations() * (1 << 16) * 16);
}

void BM_GridKernel(benchmark::State& state, kwl::Execution exec) {
  if (exec == kwl::Execution::Parallel) kwl::set_thread_count(static_cast<int>(state.range(1)));
  const auto grid = std::make_shared<const kwl::density::SphereGrid>(
      kwl::density::SphereGrid::with_cells(static_cast<std::size_t>(state.range(0))));
  const auto cap = kwl::density::cap_density(grid, {1, 0, 0}, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(kwl::density::kernel_apply_grid(cap, exec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grid->size()));
}

}  // namespace

BENCHMARK(BM_EnsembleAdvanceSerial)->Args({3})->Args({10})->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EnsembleAdvanceParallel)
    ->ArgsProduct({{3, 10}, {1, 2, 4, 8}})
    ->ArgNames({"n", "threads"})
    ->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_GridKernel, serial, kwl::Execution::Serial)->Args({20000, 1})->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_GridKernel, parallel, kwl::Execution::Parallel)
    ->ArgsProduct({{20000}, {1, 2, 4, 8}})
    ->ArgNames({"cells", "threads"})
    ->UseRealTime()->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
