#include "sensorscan/ssl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace sensorscan::ssl {

void PretrainConfig::validate(int window) const {
  if (epochs < 0) throw ValidationError("pretrain: epochs must be >= 0");
  if (batch < 2) throw ValidationError("pretrain: batch size B must be >= 2");
  if (!(temperature > 0)) throw ValidationError("pretrain: temperature must be > 0");
  if (lambda_cont < 0) throw ValidationError("pretrain: lambda_cont must be >= 0");
  if (!(lr > 0)) throw ValidationError("pretrain: lr must be > 0");
  if (weight_decay < 0) throw ValidationError("pretrain: weight_decay must be >= 0");
  if (!use_reconstruction && !use_contrastive) throw ValidationError("pretrain: at least one task must be enabled");
  augment.validate(window);
}

LossGrad loss_reconstruction(const Mat& reconstruction, const Mat& target, const Mat& masks, int length) {
  if (reconstruction.rows() != target.rows() || reconstruction.cols() != target.cols() ||
      masks.rows() != target.rows() || masks.cols() != target.cols())
    throw ValidationError("loss_reconstruction: shape mismatch");
  if (length < 1 || target.rows() % length != 0 || target.rows() == 0)
    throw ValidationError("loss_reconstruction: rows are not a positive multiple of L");
  const Eigen::Index n = target.rows() / length;
  LossGrad out;
  out.grad = Mat::Zero(target.rows(), target.cols());
  for (Eigen::Index s = 0; s < n; ++s) {
    const auto m = masks.middleRows(s * length, length);
    const auto masked = (m.array() == Real(0)).cast<Real>();
    const double count = masked.sum();
    if (count == 0) throw ValidationError("loss_reconstruction: sample " + std::to_string(s) + " has no masked entries");
    const Mat diff = reconstruction.middleRows(s * length, length) - target.middleRows(s * length, length);
    out.value += (diff.array().square() * masked).sum() / count;
    out.grad.middleRows(s * length, length) =
        diff.array() * masked * static_cast<Real>(2.0 / (count * static_cast<double>(n)));
  }
  out.value /= static_cast<double>(n);
  return out;
}

LossGrad loss_ntxent(const Mat& z, double temperature) {
  const Eigen::Index m = z.rows();
  if (m < 2 || m % 2 != 0) throw ValidationError("loss_ntxent: need an even number (>= 2) of embeddings");
  if (!(temperature > 0)) throw ValidationError("loss_ntxent: temperature must be > 0");
  const Vec norms = z.rowwise().norm();
  for (Eigen::Index i = 0; i < m; ++i)
    if (!(norms(i) > 0)) throw ValidationError("loss_ntxent: zero-norm embedding at row " + std::to_string(i));
  const Mat u = norms.cwiseInverse().asDiagonal() * z;
  const Mat sim = u * u.transpose();
  const double inv_tau = 1.0 / temperature;

  // G(i, k) = dL / dsim(i, k) taken from row i's term only.
  Mat g = Mat::Zero(m, m);
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index pos = i ^ 1;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < m; ++k)
      if (k != i) mx = std::max(mx, sim(i, k) * inv_tau);
    double denom = 0.0;
    for (Eigen::Index k = 0; k < m; ++k)
      if (k != i) denom += std::exp(sim(i, k) * inv_tau - mx);
    total += -(sim(i, pos) * inv_tau) + mx + std::log(denom);
    for (Eigen::Index k = 0; k < m; ++k) {
      if (k == i) continue;
      const double soft = std::exp(sim(i, k) * inv_tau - mx) / denom;
      g(i, k) = static_cast<Real>((soft - (k == pos ? 1.0 : 0.0)) * inv_tau / static_cast<double>(m));
    }
  }
  LossGrad out;
  out.value = total / static_cast<double>(m);
  const Mat du = (g + g.transpose()) * u;
  out.grad.resize(m, z.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const Real proj = u.row(i).dot(du.row(i));
    out.grad.row(i) = (du.row(i) - proj * u.row(i)) / norms(i);
  }
  return out;
}

PretrainBatch build_pretrain_batch(const std::vector<data::WindowSample>& windows,
                                   std::span<const std::size_t> indices, const PretrainConfig& cfg, int epoch) {
  const Eigen::Index l = windows.at(indices.front()).values.rows();
  const Eigen::Index d = windows.at(indices.front()).values.cols();
  const auto n = static_cast<Eigen::Index>(indices.size());
  PretrainBatch batch;
  batch.augmented.resize(2 * n * l, d);
  batch.masked.resize(2 * n * l, d);
  batch.masks.resize(2 * n * l, d);
  const std::uint64_t base = mix_seed(cfg.seed, 0xA06);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto id = indices[static_cast<std::size_t>(i)];
    const Mat& x = windows.at(id).values;
    Rng rng(mix_seed(base, static_cast<std::uint64_t>(epoch), id));
    Mat views[2] = {aug::weak_augment(x, cfg.augment, rng), aug::strong_augment(x, cfg.augment, rng)};
    for (int v = 0; v < 2; ++v) {
      const Eigen::Index row = (2 * i + v) * l;
      Mat mask;
      if (cfg.use_reconstruction) {
        do {
          mask = aug::gen_mask(static_cast<int>(l), static_cast<int>(d), cfg.mask, rng);
        } while ((mask.array() == Real(0)).count() == 0);
      } else {
        mask = Mat::Ones(l, d);
      }
      batch.masked.middleRows(row, l) = aug::apply_mask(views[v], mask);
      batch.augmented.middleRows(row, l) = views[v];
      batch.masks.middleRows(row, l) = mask;
    }
  }
  return batch;
}

PretrainNet::PretrainNet(const model::ModelConfig& cfg, std::uint64_t init_seed) {
  Rng rng(init_seed);
  extractor = model::FeatureExtractor(cfg, rng);
  reconstruction = model::ReconstructionHead(cfg, rng);
}

nn::ParamRefs PretrainNet::parameters() {
  auto out = extractor.parameters();
  reconstruction.collect(out);
  return out;
}

BatchLoss pretrain_loss_and_grad(PretrainNet& net, const PretrainBatch& batch, const PretrainConfig& cfg,
                                 Rng& dropout_rng) {
  const int length = net.extractor.encoder.window();
  model::FeatureExtractor::Cache cache;
  Mat sequence;
  const Mat& input = cfg.use_reconstruction ? batch.masked : batch.augmented;
  const Mat z = net.extractor.forward(input, nn::Mode::kTrain, &dropout_rng, &cache, &sequence);

  BatchLoss loss;
  Mat dsequence, dz;
  if (cfg.use_reconstruction) {
    nn::Linear::Cache rc;
    const Mat recon = net.reconstruction.forward(sequence, &rc);
    const LossGrad rec = loss_reconstruction(recon, batch.augmented, batch.masks, length);
    loss.rec = rec.value;
    dsequence = net.reconstruction.backward(rec.grad, rc);
  }
  if (cfg.use_contrastive) {
    const LossGrad cont = loss_ntxent(z, cfg.temperature);
    loss.cont = cont.value;
    dz = cont.grad * static_cast<Real>(cfg.lambda_cont);
  }
  loss.total = loss_total(loss.rec, loss.cont, cfg.use_contrastive ? cfg.lambda_cont : 0.0);
  net.extractor.backward(dz, dsequence, cache);
  return loss;
}

nn::Adam make_pretrain_optimizer(PretrainNet& net, const PretrainConfig& cfg) {
  nn::AdamOptions opts;
  opts.weight_decay = cfg.weight_decay;
  return nn::Adam({nn::ParamGroup{net.parameters(), cfg.lr}}, opts);
}

EpochStats pretrain_epoch(PretrainNet& net, nn::Adam& optimizer, const std::vector<data::WindowSample>& windows,
                          const PretrainConfig& cfg, int epoch) {
  if (windows.size() < static_cast<std::size_t>(cfg.batch))
    throw ValidationError("pretrain: " + std::to_string(windows.size()) + " windows is fewer than the batch size " +
                          std::to_string(cfg.batch));
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(mix_seed(cfg.seed, 0xE90C, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  EpochStats stats;
  stats.epoch = epoch;
  const auto b = static_cast<std::size_t>(cfg.batch);
  for (std::size_t start = 0; start + 2 <= order.size(); start += b) {
    const std::size_t end = std::min(order.size(), start + b);
    const std::span<const std::size_t> idx(order.data() + start, end - start);
    const PretrainBatch batch = build_pretrain_batch(windows, idx, cfg, epoch);
    Rng dropout_rng(mix_seed(mix_seed(cfg.seed, 0xD20), static_cast<std::uint64_t>(epoch), start));
    const BatchLoss loss = pretrain_loss_and_grad(net, batch, cfg, dropout_rng);
    optimizer.step();
    stats.rec += loss.rec;
    stats.cont += loss.cont;
    stats.total += loss.total;
    ++stats.batches;
  }
  if (stats.batches > 0) {
    stats.rec /= stats.batches;
    stats.cont /= stats.batches;
    stats.total /= stats.batches;
  }
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return stats;
}

model::FeatureExtractor pretrain(PretrainNet net, const std::vector<data::WindowSample>& windows,
                                 const PretrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate(net.extractor.config().window);
  nn::Adam optimizer = make_pretrain_optimizer(net, cfg);
  for (int e = 0; e < cfg.epochs; ++e) {
    const EpochStats stats = pretrain_epoch(net, optimizer, windows, cfg, e);
    if (on_epoch) on_epoch(stats);
  }
  return std::move(net.extractor);
}

std::string format_epoch_log(const EpochStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), R"({"epoch":%d,"L_rec":%.6f,"L_cont":%.6f,"L_total":%.6f,"seconds":%.3f})",
                s.epoch + 1, s.rec, s.cont, s.total, s.seconds);
  return buf;
}

}  // namespace sensorscan::ssl
