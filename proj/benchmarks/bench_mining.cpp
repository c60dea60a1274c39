#include <benchmark/benchmark.h>

#include <random>

#include "sensorscan/scan.hpp"

using namespace sensorscan;

namespace {

Mat embeddings(int n, int dim) {
  Rng rng(7);
  std::normal_distribution<double> d(0, 1);
  Mat m(n, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// args: samples, chunks (1 = naive)
void BM_MineNeighbors(benchmark::State& state) {
  const Mat z = embeddings(state.range(0), 32);
  scan::ScanConfig cfg;
  cfg.n_chunks = state.range(1);
  cfg.mining = cfg.n_chunks == 1 ? scan::MiningMode::kNaive : scan::MiningMode::kChunked;
  for (auto _ : state) benchmark::DoNotOptimize(scan::mine_neighbors(z, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MineNeighbors)
    ->Args({4000, 1})
    ->Args({4000, 20})
    ->Args({20000, 20})
    ->Unit(benchmark::kMillisecond);

}  // namespace
