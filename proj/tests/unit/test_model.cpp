#include <cmath>

#include "helpers.hpp"
#include "sensorscan/model.hpp"

using namespace sensorscan;
using namespace sensorscan::model;
using nn::Mode;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.hidden = 8;
  cfg.ff_dim = 12;
  cfg.heads = 2;
  cfg.embedding_dim = 4;
  cfg.n_clusters = 3;
  cfg.channels = 3;
  cfg.window = 6;
  return cfg;
}

// Parameter count written out from the architecture description, independent of the code.
std::size_t expected_extractor_params(const ModelConfig& c) {
  const std::size_t d = c.channels, h = c.hidden, ff = c.ff_dim, f = c.embedding_dim;
  const std::size_t attention = 4 * h * h + 3 * h;  // q, v, out biased; key unbiased
  const std::size_t layer = attention + 2 * (2 * h) + (h * ff + ff) + (ff * h + h);
  const std::size_t encoder = (d * h + h) + c.n_layers * layer;
  const std::size_t pooling = h;
  const std::size_t projection = h * h + 2 * h + (h * f + f);  // dense (no bias), BN gamma/beta, dense
  return encoder + pooling + projection;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config validation") {
  ModelConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.hidden = 7;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small_config();
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small_config();
  cfg.n_clusters = 1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small_config();
  cfg.embedding_dim = 1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("parameter counts match the analytic formula") {
  for (const auto& [layers, hidden, ff, heads, f] :
       std::vector<std::tuple<int, int, int, int, int>>{{1, 4, 6, 1, 2}, {2, 8, 12, 2, 4}, {3, 128, 512, 4, 32}}) {
    ModelConfig cfg = small_config();
    cfg.n_layers = layers;
    cfg.hidden = hidden;
    cfg.ff_dim = ff;
    cfg.heads = heads;
    cfg.embedding_dim = f;
    cfg.channels = 30;
    cfg.window = 10;
    Rng rng(1);
    FeatureExtractor fx(cfg, rng);
    CHECK(nn::count_trainable(fx.parameters()) == expected_extractor_params(cfg));
    ReconstructionHead rec(cfg, rng);
    nn::ParamRefs rp;
    rec.collect(rp);
    CHECK(nn::count_trainable(rp) == static_cast<std::size_t>(hidden * 30 + 30));
    ClusterHead head(f, 7, rng);
    CHECK(nn::count_trainable(head.parameters()) == static_cast<std::size_t>(f * f + 2 * f + f * 7 + 7));
  }
}

TEST_CASE("encode: shape, eval determinism, input checks") {
  const auto cfg = small_config();
  Rng rng(2);
  FeatureExtractor fx(cfg, rng);
  const Mat x = testutil::randn(3 * cfg.window, cfg.channels, rng);
  const Mat h = fx.encode(x, Mode::kEval);
  CHECK(h.rows() == 3 * cfg.window);
  CHECK(h.cols() == cfg.hidden);
  CHECK(fx.encode(x, Mode::kEval) == h);
  CHECK_THROWS_AS(fx.encode(testutil::randn(cfg.window + 1, cfg.channels, rng), Mode::kEval), ValidationError);
  CHECK_THROWS_AS(fx.encode(testutil::randn(cfg.window, cfg.channels + 1, rng), Mode::kEval), ValidationError);
  Rng d1(9), d2(9);
  CHECK(fx.encode(x, Mode::kTrain, &d1) == fx.encode(x, Mode::kTrain, &d2));
}

TEST_CASE("pool: singleton, zero weight, weights are a distribution") {
  Rng rng(3);
  SequencePooling pool(5, rng);
  pool.weight.value = testutil::randn(5, 1, rng, 3.0);
  const Mat h1 = testutil::randn(4, 5, rng);  // four sequences of length 1
  CHECK(pool.forward(h1, 1) == h1);
  const Mat h = testutil::randn(2 * 7, 5, rng);
  const Mat w = pool.position_weights(h, 7);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    CHECK(std::abs(w.row(i).sum() - 1.0) < 1e-12);
    CHECK(w.row(i).minCoeff() >= 0.0);
  }
  pool.weight.value.setZero();
  const Mat m = pool.forward(h, 7);
  for (int s = 0; s < 2; ++s)
    CHECK(m.row(s).isApprox(h.middleRows(s * 7, 7).colwise().mean(), 1e-12));
}

TEST_CASE("project: dimension, eval determinism, train batch of one rejected") {
  const auto cfg = small_config();
  Rng rng(4);
  FeatureExtractor fx(cfg, rng);
  const Mat pooled = testutil::randn(5, cfg.hidden, rng);
  CHECK(fx.project(pooled, Mode::kTrain).cols() == cfg.embedding_dim);
  CHECK(fx.project(pooled, Mode::kEval) == fx.project(pooled, Mode::kEval));
  CHECK_THROWS_AS(fx.project(pooled.topRows(1), Mode::kTrain), ValidationError);
  CHECK_NOTHROW(fx.project(pooled.topRows(1), Mode::kEval));
}

TEST_CASE("reconstruction head: shape and zero weights") {
  const auto cfg = small_config();
  Rng rng(5);
  ReconstructionHead rec(cfg, rng);
  const Mat h = testutil::randn(2 * cfg.window, cfg.hidden, rng);
  CHECK(rec.forward(h).rows() == 2 * cfg.window);
  CHECK(rec.forward(h).cols() == cfg.channels);
  rec.linear.weight.value.setZero();
  rec.linear.bias.value.setZero();
  CHECK(rec.forward(h).isZero());
}

TEST_CASE("extract_features equals the staged calls and is deterministic") {
  const auto cfg = small_config();
  Rng rng(6);
  FeatureExtractor fx(cfg, rng);
  std::vector<data::WindowSample> windows(5);
  for (auto& w : windows) w.values = testutil::randn(cfg.window, cfg.channels, rng);
  const Mat z = fx.extract_features(windows, 2);
  const Mat staged = fx.project(fx.pool(fx.encode(stack_windows(windows), Mode::kEval)), Mode::kEval);
  CHECK(z.isApprox(staged, 1e-13));
  CHECK(fx.extract_features(windows, 256).isApprox(z, 1e-13));
  std::vector<data::WindowSample> same(3, windows[0]);
  const Mat zs = fx.extract_features(same);
  // vectorized GEMM may round an odd trailing row differently
  CHECK(zs.row(1).isApprox(zs.row(0), 1e-13));
  CHECK(zs.row(2).isApprox(zs.row(0), 1e-13));
}

TEST_CASE("positional encoding breaks permutation equivariance") {
  const auto cfg = small_config();
  Rng rng(7);
  FeatureExtractor fx(cfg, rng);
  const Mat x = testutil::randn(cfg.window, cfg.channels, rng);
  Mat reversed = x.colwise().reverse();
  const Mat h = fx.encode(x, Mode::kEval), hr = fx.encode(reversed, Mode::kEval);
  CHECK(!hr.isApprox(h.colwise().reverse(), 1e-6));
}

TEST_CASE("cluster head outputs distributions; argmax ties go low") {
  Rng rng(8);
  ClusterHead head(4, 5, rng);
  const Mat z = testutil::randn(20, 4, rng);
  const Mat p = head.forward(z, Mode::kTrain);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-9);
    CHECK(p.row(i).minCoeff() >= 0.0);
  }
  Mat tie(2, 3);
  tie << 0.4, 0.4, 0.2, 0.1, 0.45, 0.45;
  CHECK(argmax_rows(tie) == std::vector<int>{0, 1});
}

}  // TEST_SUITE
