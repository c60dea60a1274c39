#include <benchmark/benchmark.h>

#include <random>

#include "sensorscan/eval.hpp"
#include "sensorscan/kmeans.hpp"

using namespace sensorscan;

namespace {

void BM_HungarianMax(benchmark::State& state) {
  const int n = state.range(0);
  Rng rng(11);
  std::uniform_real_distribution<double> u(0, 100);
  std::vector<std::vector<double>> w(n, std::vector<double>(n));
  for (auto& row : w)
    for (auto& v : row) v = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(eval::hungarian_max(w));
}
BENCHMARK(BM_HungarianMax)->Arg(8)->Arg(32)->Arg(128);

// Scores on 20k samples with 30 states, the size of a full test split.
void BM_Scores(benchmark::State& state) {
  Rng rng(12);
  std::uniform_int_distribution<int> d(0, 29);
  std::vector<int> y(20000), c(20000);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = d(rng), c[i] = d(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::acc(y, c));
    benchmark::DoNotOptimize(eval::nmi(y, c));
    benchmark::DoNotOptimize(eval::ari(y, c));
  }
}
BENCHMARK(BM_Scores)->Unit(benchmark::kMillisecond);

void BM_KMeans(benchmark::State& state) {
  Rng rng(13);
  std::normal_distribution<double> d(0, 1);
  Mat x(state.range(0), 25);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = d(rng) + (i % 5) * 3.0;
  cluster::KMeansOptions opt;
  opt.k = 5;
  opt.restarts = 3;
  for (auto _ : state) benchmark::DoNotOptimize(cluster::kmeans(x, opt));
}
BENCHMARK(BM_KMeans)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace
