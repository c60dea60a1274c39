#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sensorscan/augment.hpp"
#include "sensorscan/model.hpp"
#include "sensorscan/nn/optim.hpp"

// Self-supervised pretraining: masked reconstruction plus NT-Xent contrastive learning.
namespace sensorscan::ssl {

struct PretrainConfig {
  int epochs = 8;
  int batch = 1024;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double lambda_cont = 0.7;
  double temperature = 0.2;
  aug::MaskConfig mask{0.5, 6.0};
  aug::AugmentConfig augment;
  bool use_reconstruction = true;
  bool use_contrastive = true;
  std::uint64_t seed = 0;

  void validate(int window) const;
};

struct LossGrad {
  double value = 0.0;
  Mat grad;
};

// Mean over samples of the per-sample MSE restricted to masked entries (mask == 0).
// Inputs are stacked [N*L, D]; every sample must contain at least one masked entry.
LossGrad loss_reconstruction(const Mat& reconstruction, const Mat& target, const Mat& masks, int length);

// NT-Xent over 2B embeddings where rows (2k, 2k+1) are positive pairs; averaged over all 2B
// ordered positives. Gradient is w.r.t. z.
LossGrad loss_ntxent(const Mat& z, double temperature);

inline double loss_total(double rec, double cont, double lambda_cont) { return rec + lambda_cont * cont; }

// One minibatch after augmentation and masking. Rows hold 2B stacked windows in the
// interleaved order [weak(X1), strong(X1), weak(X2), strong(X2), ...].
struct PretrainBatch {
  Mat augmented;  // reconstruction targets
  Mat masked;     // network inputs
  Mat masks;
};

// Draws each sample's augmentations and masks from a seed derived from (seed, epoch, window id),
// so the batch content does not depend on how batches are scheduled.
PretrainBatch build_pretrain_batch(const std::vector<data::WindowSample>& windows,
                                   std::span<const std::size_t> indices, const PretrainConfig& cfg, int epoch);

struct PretrainNet {
  PretrainNet() = default;
  PretrainNet(const model::ModelConfig& cfg, std::uint64_t init_seed);

  model::FeatureExtractor extractor;
  model::ReconstructionHead reconstruction;

  nn::ParamRefs parameters();
};

struct EpochStats {
  int epoch = 0;
  double rec = 0.0;
  double cont = 0.0;
  double total = 0.0;
  double seconds = 0.0;
  int batches = 0;
};

struct BatchLoss {
  double rec = 0.0;
  double cont = 0.0;
  double total = 0.0;
};

// Forward + backward of the combined loss on one batch; gradients accumulate into the net.
BatchLoss pretrain_loss_and_grad(PretrainNet& net, const PretrainBatch& batch, const PretrainConfig& cfg,
                                 Rng& dropout_rng);

nn::Adam make_pretrain_optimizer(PretrainNet& net, const PretrainConfig& cfg);

EpochStats pretrain_epoch(PretrainNet& net, nn::Adam& optimizer, const std::vector<data::WindowSample>& windows,
                          const PretrainConfig& cfg, int epoch);

using EpochCallback = std::function<void(const EpochStats&)>;

// Runs cfg.epochs epochs and returns the feature extractor; the reconstruction head is dropped.
model::FeatureExtractor pretrain(PretrainNet net, const std::vector<data::WindowSample>& windows,
                                 const PretrainConfig& cfg, const EpochCallback& on_epoch = {});

// One structured log line: {"epoch":..,"L_rec":..,"L_cont":..,"L_total":..,"seconds":..}
std::string format_epoch_log(const EpochStats& stats);

}  // namespace sensorscan::ssl
