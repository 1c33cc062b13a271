#include <benchmark/benchmark.h>

#include "tdi/fusion.hpp"
#include "tdi/imputers.hpp"
#include "tdi/ingest.hpp"
#include "tdi/reference.hpp"

using namespace tdi;

namespace {

const SyntheticPanel& panel() {
  static const SyntheticPanel p = [] {
    SyntheticConfig cfg;
    cfg.n_patients = 400;
    cfg.n_timepoints = 48;
    cfg.n_variables = 8;
    cfg.missing_profile = {0.3, 0.37, 0.44, 0.51, 0.59, 0.66, 0.73, 0.8};
    cfg.seed = 1;
    return generate_synthetic(cfg);
  }();
  return p;
}

const Matrix& knn_input() {
  // KNN is quadratic in rows; keep it to a few thousand.
  static const Matrix m = flatten(panel().observed).values.topRows(3000);
  return m;
}

void BM_knn_serial(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(reference::knn_impute(knn_input(), 5));
}
void BM_knn_omp(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(knn_impute(knn_input(), 5));
}
void BM_ffill_serial(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(reference::forward_fill(panel().observed));
}
void BM_ffill_omp(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(forward_fill(panel().observed));
}
void BM_deltas_serial(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(reference::compute_deltas(panel().observed, panel().mask));
}
void BM_deltas_omp(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(compute_deltas(panel().observed, panel().mask));
}

}  // namespace

BENCHMARK(BM_knn_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_knn_omp)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ffill_serial)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_ffill_omp)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_deltas_serial)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_deltas_omp)->Unit(benchmark::kMicrosecond)->UseRealTime();

BENCHMARK_MAIN();
