#include <cmath>

#include "helpers.hpp"
#include "sensorscan/config.hpp"
#include "sensorscan/nn/checkpoint.hpp"
#include "sensorscan/pipeline.hpp"
#include "sensorscan/ssl.hpp"
#include "testkit.hpp"

using namespace sensorscan;
using namespace sensorscan::ssl;

namespace {

model::ModelConfig tiny_model() {
  model::ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.hidden = 16;
  cfg.ff_dim = 32;
  cfg.heads = 2;
  cfg.embedding_dim = 8;
  cfg.channels = 3;
  cfg.window = 20;
  return cfg;
}

PretrainConfig tiny_pretrain() {
  PretrainConfig cfg;
  cfg.batch = 8;
  cfg.epochs = 1;
  cfg.augment.n_permute_chunks = 4;
  cfg.seed = 3;
  return cfg;
}

std::vector<data::WindowSample> synthetic_windows(int n, const model::ModelConfig& m, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<data::WindowSample> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[i].run_id = "r" + std::to_string(i);
    w[i].end_index = m.window - 1;
    // smooth signals with a per-window offset, something learnable
    Mat v(m.window, m.channels);
    const double phase = std::uniform_real_distribution<double>(0, 6.28)(rng);
    for (int t = 0; t < m.window; ++t)
      for (int c = 0; c < m.channels; ++c) v(t, c) = std::sin(0.3 * t + phase + c) + 0.1 * c;
    w[i].values = v;
  }
  return w;
}

double batch_total(PretrainNet& net, const PretrainBatch& batch, const PretrainConfig& cfg, std::uint64_t drop_seed) {
  Rng r(drop_seed);
  const auto ps = net.parameters();
  std::vector<Mat> saved;
  for (auto* p : ps) saved.push_back(p->grad);
  const double v = pretrain_loss_and_grad(net, batch, cfg, r).total;
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->grad = saved[i];
  return v;
}

}  // namespace

TEST_SUITE("ssl") {

TEST_CASE("reconstruction loss examples") {
  Mat target(2, 1), recon(2, 1), mask(2, 1);
  target << 1, 5;
  recon << 0, 9;
  mask << 0, 1;  // only the first entry is masked
  CHECK(loss_reconstruction(recon, target, mask, 2).value == 1.0);
  CHECK(loss_reconstruction(target, target, mask, 2).value == 0.0);
  recon(1, 0) = -100;  // unmasked entries do not matter
  CHECK(loss_reconstruction(recon, target, mask, 2).value == 1.0);
  CHECK_THROWS_AS(loss_reconstruction(recon, target, Mat::Ones(2, 1), 2), ValidationError);
}

TEST_CASE("reconstruction loss is a mean of per-sample masked means") {
  Rng rng(1);
  const int l = 5, d = 2, n = 3;
  const Mat target = testutil::randn(n * l, d, rng), recon = testutil::randn(n * l, d, rng);
  Mat mask = aug::gen_mask(n * l, d, aug::MaskConfig(0.5, 2.0), rng);
  for (int s = 0; s < n; ++s) mask(s * l, 0) = 0;
  double expect = 0;
  for (int s = 0; s < n; ++s) {
    double sum = 0;
    int cnt = 0;
    for (int t = 0; t < l; ++t)
      for (int c = 0; c < d; ++c)
        if (mask(s * l + t, c) == 0) {
          sum += std::pow(recon(s * l + t, c) - target(s * l + t, c), 2);
          ++cnt;
        }
    expect += sum / cnt / n;
  }
  CHECK(loss_reconstruction(recon, target, mask, l).value == doctest::Approx(expect).epsilon(1e-14));
  Mat perturbed = recon;
  for (Eigen::Index i = 0; i < recon.size(); ++i)
    if (mask.data()[i] == 1) perturbed.data()[i] += 3.0;
  CHECK(loss_reconstruction(perturbed, target, mask, l).value == loss_reconstruction(recon, target, mask, l).value);
}

TEST_CASE("ntxent: degenerate batch and the orthonormal example") {
  Mat z(2, 3);
  z << 1, 2, 3, 1, 2, 3;
  CHECK(std::abs(loss_ntxent(z, 0.5).value) < 1e-15);
  Mat e(4, 2);
  e << 1, 0, 1, 0, 0, 1, 0, 1;
  const double expected = std::log((std::exp(1.0) + 2) / std::exp(1.0));  // ~0.5514
  CHECK(loss_ntxent(e, 1.0).value == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(0.5514).epsilon(1e-4));
}

TEST_CASE("ntxent: matches the naive oracle, B = 1..8, 50 batches each") {
  Rng rng(2);
  double worst = 0;
  for (int b = 1; b <= 8; ++b)
    for (int t = 0; t < 50; ++t) {
      const Mat z = testutil::randn(2 * b, 1 + t % 6, rng);
      const double tau = std::uniform_real_distribution<double>(0.05, 2.0)(rng);
      worst = std::max(worst, std::abs(loss_ntxent(z, tau).value - testkit::ntxent_naive(z, tau)));
    }
  CHECK(worst < 1e-10);
}

TEST_CASE("ntxent: scale invariance and input checks") {
  Rng rng(3);
  const Mat z = testutil::randn(10, 4, rng);
  const double a = loss_ntxent(z, 0.2).value, b = loss_ntxent(z * 37.5, 0.2).value;
  CHECK(std::abs(a - b) / a < 1e-9);
  Mat bad = z;
  bad.row(3).setZero();
  CHECK_THROWS_AS(loss_ntxent(bad, 0.2), ValidationError);
  CHECK_THROWS_AS(loss_ntxent(z.topRows(3), 0.2), ValidationError);
  CHECK_THROWS_AS(loss_ntxent(z, 0.0), ValidationError);
}

TEST_CASE("total loss arithmetic") {
  CHECK(loss_total(1, 2, 0.7) == doctest::Approx(2.4).epsilon(1e-15));
  CHECK(loss_total(1.5, 2, 0.0) == 1.5);
  CHECK(loss_total(1.5, 2, 1.0) == 3.5);
}

TEST_CASE("config validation") {
  PretrainConfig cfg;
  CHECK_NOTHROW(cfg.validate(100));
  cfg.batch = 1;
  CHECK_THROWS_AS(cfg.validate(100), ValidationError);
  cfg = PretrainConfig();
  cfg.temperature = 0;
  CHECK_THROWS_AS(cfg.validate(100), ValidationError);
  cfg = PretrainConfig();
  cfg.lambda_cont = -0.1;
  CHECK_THROWS_AS(cfg.validate(100), ValidationError);
}

TEST_CASE("batch: interleaved views, targets are augmented, inputs are masked targets") {
  const auto m = tiny_model();
  const auto windows = synthetic_windows(4, m, 4);
  PretrainConfig cfg = tiny_pretrain();
  const std::vector<std::size_t> idx{2, 0, 3};
  const auto batch = build_pretrain_batch(windows, idx, cfg, 0);
  CHECK(batch.augmented.rows() == 6 * m.window);
  CHECK(batch.masked == batch.augmented.cwiseProduct(batch.masks));
  // identity augmentations: targets are the originals, in [X_i, X_i] pairs
  PretrainConfig id = cfg;
  id.augment.jitter_std = 0;
  id.augment.scale_std = 0;
  id.augment.scale_mean_weak = 1;
  id.augment.scale_mean_strong = 1;
  id.augment.n_permute_chunks = 1;
  const auto plain = build_pretrain_batch(windows, idx, id, 0);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    CHECK(plain.augmented.middleRows(2 * k * m.window, m.window) == windows[idx[k]].values);
    CHECK(plain.augmented.middleRows((2 * k + 1) * m.window, m.window) == windows[idx[k]].values);
  }
  CHECK(batch.augmented.middleRows(0, m.window) != windows[2].values);
  // every view has its own mask with at least one masked entry
  for (std::size_t v = 0; v < 2 * idx.size(); ++v) CHECK(batch.masks.middleRows(v * m.window, m.window).minCoeff() == 0.0);
  CHECK(batch.masks.middleRows(0, m.window) != batch.masks.middleRows(m.window, m.window));
  // content depends only on (seed, epoch, window id)
  const std::vector<std::size_t> one{3};
  const auto single = build_pretrain_batch(windows, one, cfg, 0);
  CHECK(single.masked == batch.masked.middleRows(4 * m.window, 2 * m.window));
  CHECK(build_pretrain_batch(windows, one, cfg, 1).masked != single.masked);
}

TEST_CASE("pretrain_epoch is deterministic") {
  const auto m = tiny_model();
  const auto windows = synthetic_windows(20, m, 5);
  const auto cfg = tiny_pretrain();
  auto run = [&] {
    PretrainNet net(m, 11);
    auto opt = make_pretrain_optimizer(net, cfg);
    const auto stats = pretrain_epoch(net, opt, windows, cfg, 0);
    return std::make_pair(stats.total, nn::snapshot(net.parameters()));
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  REQUIRE(a.second.size() == b.second.size());
  for (std::size_t i = 0; i < a.second.size(); ++i) CHECK(a.second[i].value == b.second[i].value);
  PretrainNet net(m, 11);
  auto opt = make_pretrain_optimizer(net, cfg);
  CHECK_THROWS_AS(pretrain_epoch(net, opt, synthetic_windows(5, m, 5), cfg, 0), ValidationError);
}

TEST_CASE("overfit: 30 steps on one fixed minibatch of 8 halve the loss") {
  const auto m = tiny_model();
  const auto windows = synthetic_windows(8, m, 6);
  PretrainConfig cfg = tiny_pretrain();
  cfg.lr = 3e-3;
  PretrainNet net(m, 12);
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
  const auto batch = build_pretrain_batch(windows, idx, cfg, 0);
  auto opt = make_pretrain_optimizer(net, cfg);
  const double first = batch_total(net, batch, cfg, 1);
  for (int e = 0; e < 30; ++e) {
    Rng r(1);
    nn::zero_grads(net.parameters());
    pretrain_loss_and_grad(net, batch, cfg, r);
    opt.step();
  }
  const double last = batch_total(net, batch, cfg, 1);
  MESSAGE("loss ", first, " -> ", last);
  CHECK(last <= 0.5 * first);
}

TEST_CASE("one small Adam step descends on a frozen minibatch") {
  const auto m = tiny_model();
  const auto windows = synthetic_windows(8, m, 7);
  int descended = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    PretrainConfig cfg = tiny_pretrain();
    cfg.lr = 1e-5;
    cfg.weight_decay = 0;
    cfg.seed = s;
    PretrainNet net(m, 100 + s);
    const std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
    const auto batch = build_pretrain_batch(windows, idx, cfg, 0);
    auto opt = make_pretrain_optimizer(net, cfg);
    const double before = batch_total(net, batch, cfg, s);
    Rng r(s);
    nn::zero_grads(net.parameters());
    pretrain_loss_and_grad(net, batch, cfg, r);
    opt.step();
    if (batch_total(net, batch, cfg, s) < before) ++descended;
  }
  CHECK(descended >= 9);
}

TEST_CASE("pretrain: zero epochs return the initial extractor; checkpoints keep embeddings") {
  const auto m = tiny_model();
  const auto windows = synthetic_windows(16, m, 8);
  PretrainConfig cfg = tiny_pretrain();
  cfg.epochs = 0;
  PretrainNet init(m, 13);
  const Mat z0 = init.extractor.extract_features(windows);
  auto fx = pretrain(init, windows, cfg);
  CHECK(fx.extract_features(windows) == z0);

  cfg.epochs = 2;
  auto trained = pretrain(PretrainNet(m, 13), windows, cfg);
  const Mat z = trained.extract_features(windows);
  CHECK(z != z0);
  const auto snap = nn::snapshot(trained.parameters());
  Rng rng(99);
  model::FeatureExtractor fresh(m, rng);
  nn::restore(snap, fresh.parameters());
  CHECK(fresh.extract_features(windows) == z);
}

TEST_CASE("epoch log line") {
  EpochStats s;
  s.epoch = 3;
  s.rec = 0.5;
  s.cont = 1.25;
  s.total = 1.375;
  s.seconds = 2.0;
  const std::string line = format_epoch_log(s);
  CHECK(line.find("\"epoch\":4") != std::string::npos);  // 1-based in logs
  CHECK(line.find("\"L_rec\":0.5") != std::string::npos);
  CHECK(line.find("\"L_cont\":1.25") != std::string::npos);
  CHECK(line.find("\"L_total\":1.375") != std::string::npos);
  CHECK(line.find('\n') == std::string::npos);
}

}  // TEST_SUITE

// Pretraining at desk scale takes about a minute; registered as its own test.
TEST_SUITE("ssl_probe") {

TEST_CASE("desk pretraining: linear probe and augmentation neighborhoods") {
  testutil::LogCapture quiet;
  auto cfg = config::load_config(std::string(SENSORSCAN_SOURCE_DIR) + "/configs/desk.json");
  cfg.data.step = 5;
  cfg.eval.step = 5;
  cfg.propagate();
  const auto runs = pipeline::generate_runs(cfg);
  const auto data = pipeline::prepare_data(cfg, runs);
  auto fx = pipeline::run_pretrain(cfg, data);

  // one-vs-rest least squares on train embeddings, scored on test windows
  const Mat ztr = fx.extract_features(data.train_windows), zte = fx.extract_features(data.test_windows);
  const auto ytr = data::labels_of(data.train_windows), yte = data::labels_of(data.test_windows);
  const int q = static_cast<int>(data.states.size());
  auto design = [](const Mat& z) {
    Mat x(z.rows(), z.cols() + 1);
    x << z, Mat::Ones(z.rows(), 1);
    return x;
  };
  const Mat x = design(ztr);
  Mat y = Mat::Constant(x.rows(), q, -1.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) y(i, ytr[i]) = 1.0;
  const Mat gram = x.transpose() * x + 1e-6 * Mat::Identity(x.cols(), x.cols());
  const Mat w = gram.ldlt().solve(x.transpose() * y);
  const auto pred = model::argmax_rows(design(zte) * w);
  int hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == yte[i];
  const double probe = static_cast<double>(hits) / static_cast<double>(pred.size());
  MESSAGE("linear probe accuracy ", probe);
  CHECK(probe >= 0.85);

  // a window, its weak view and a random other window
  Rng rng(2024);
  std::uniform_int_distribution<std::size_t> pick(0, data.train_windows.size() - 1);
  int closer = 0;
  for (int t = 0; t < 200; ++t) {
    const auto i = pick(rng);
    auto j = pick(rng);
    while (j == i) j = pick(rng);
    std::vector<data::WindowSample> trio{data.train_windows[i], data.train_windows[i], data.train_windows[j]};
    trio[1].values = aug::weak_augment(trio[0].values, cfg.pretrain.augment, rng);
    const Mat z = fx.extract_features(trio);
    auto cosine = [&](int a, int b) { return z.row(a).dot(z.row(b)) / (z.row(a).norm() * z.row(b).norm()); };
    closer += cosine(0, 1) > cosine(0, 2);
  }
  MESSAGE("weak view closer in ", closer, "/200");
  CHECK(closer >= 180);
}

}  // TEST_SUITE
