#include <benchmark/benchmark.h>

#include <random>

#include "sensorscan/model.hpp"
#include "sensorscan/nn/layers.hpp"

using namespace sensorscan;

namespace {

Mat random_mat(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0, 1);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// args: batch, window length, width
void BM_AttentionForward(benchmark::State& state) {
  const int n = state.range(0), length = state.range(1), dim = state.range(2);
  Rng rng(1);
  nn::MultiHeadSelfAttention attn(dim, 4, "attn", rng);
  const Mat x = random_mat(n * length, dim, rng);
  for (auto _ : state) benchmark::DoNotOptimize(attn.forward(x, length));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_AttentionForward)->Args({32, 50, 32})->Args({32, 100, 128})->Unit(benchmark::kMillisecond);

void BM_AttentionForwardBackward(benchmark::State& state) {
  const int n = state.range(0), length = state.range(1), dim = state.range(2);
  Rng rng(2);
  nn::MultiHeadSelfAttention attn(dim, 4, "attn", rng);
  const Mat x = random_mat(n * length, dim, rng);
  const Mat dy = random_mat(n * length, dim, rng);
  for (auto _ : state) {
    nn::MultiHeadSelfAttention::Cache cache;
    benchmark::DoNotOptimize(attn.forward(x, length, &cache));
    benchmark::DoNotOptimize(attn.backward(dy, cache));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_AttentionForwardBackward)->Args({32, 50, 32})->Args({32, 100, 128})->Unit(benchmark::kMillisecond);

// Full extractor on the desk-sized model.
void BM_ExtractorForward(benchmark::State& state) {
  model::ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.hidden = 32;
  cfg.ff_dim = 64;
  cfg.embedding_dim = 8;
  cfg.channels = 8;
  cfg.window = 50;
  Rng rng(3);
  model::FeatureExtractor fx(cfg, rng);
  const int n = state.range(0);
  const Mat x = random_mat(static_cast<Eigen::Index>(n) * cfg.window, cfg.channels, rng);
  for (auto _ : state) benchmark::DoNotOptimize(fx.forward(x, nn::Mode::kEval, nullptr));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ExtractorForward)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace
