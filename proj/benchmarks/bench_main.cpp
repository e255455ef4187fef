#include "limesup/dtree.hpp"
#include "limesup/klime.hpp"
#include "limesup/linmod.hpp"
#include "limesup/simgen.hpp"
#include "limesup/suptree.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace limesup;

Dataset simulated(Index n) {
  SimConfig config;
  config.n = n;
  return simulate_benchmark(config);
}

RowSet all_rows(Index n) {
  RowSet rows(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
  return rows;
}

void BM_ResponseSplitSearch(benchmark::State& state) {
  const Dataset ds = simulated(state.range(0));
  const RowSet rows = all_rows(ds.rows());
  const GrowthConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(exhaustive_split_search(rows, ds, ds.partition_vars, config));
  state.SetItemsProcessed(state.iterations() * ds.rows());
}
BENCHMARK(BM_ResponseSplitSearch)->Arg(5000)->Arg(25000)->Unit(benchmark::kMillisecond);

void BM_FluctuationFilter(benchmark::State& state) {
  const Dataset ds = simulated(state.range(0));
  const RowSet rows = all_rows(ds.rows());
  const LinearModel model = fit_ols(ds.features, ds.response);
  for (auto _ : state) benchmark::DoNotOptimize(fluctuation_filter(rows, ds, model, 5));
}
BENCHMARK(BM_FluctuationFilter)->Arg(25000)->Unit(benchmark::kMillisecond);

void BM_DerivativeSplitSearch(benchmark::State& state) {
  const Dataset ds = simulated(state.range(0));
  const RowSet rows = all_rows(ds.rows());
  const ScaledDerivatives scaled = scale_derivatives(rows, ds);
  const GrowthConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(derivative_split_search(rows, ds, scaled, ds.partition_vars, config));
}
BENCHMARK(BM_DerivativeSplitSearch)->Arg(25000)->Unit(benchmark::kMillisecond);

void BM_GrowTree(benchmark::State& state) {
  const Dataset ds = simulated(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(grow_tree(ds, {}));
}
BENCHMARK(BM_GrowTree)->Arg(25000)->Unit(benchmark::kMillisecond);

void BM_KMeans(benchmark::State& state) {
  const Dataset ds = simulated(state.range(0));
  KMeansOptions options;
  options.n_init = 1;
  for (auto _ : state) benchmark::DoNotOptimize(kmeans(ds.features, 8, 1, options));
}
BENCHMARK(BM_KMeans)->Arg(5000)->Arg(25000)->Unit(benchmark::kMillisecond);

void BM_LassoPath(benchmark::State& state) {
  const Dataset ds = simulated(state.range(0));
  const double lmax = lasso_lambda_max(ds.features, ds.response);
  const auto grid = lambda_grid(lmax, 50);
  for (auto _ : state) {
    for (double lambda : grid) benchmark::DoNotOptimize(fit_lasso(ds.features, ds.response, lambda));
  }
}
BENCHMARK(BM_LassoPath)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
