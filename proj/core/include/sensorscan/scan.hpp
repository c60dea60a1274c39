#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sensorscan/model.hpp"
#include "sensorscan/nn/optim.hpp"

// Neighbor mining, the SCAN clustering objective and clustering training.
namespace sensorscan::scan {

enum class MiningMode { kChunked, kNaive };

const char* to_string(MiningMode mode);
MiningMode mining_mode_from_string(const std::string& name);

struct ScanConfig {
  int k_neighbors = 12;
  int n_chunks = 20;
  double lambda_ent = 2.0;
  int epochs = 5;
  int freeze_epochs = 3;
  double lr_head = 1e-2;
  double lr_extractor = 4e-5;
  double weight_decay = 0.0;
  int batch = 128;
  int n_clusters = 2;
  MiningMode mining = MiningMode::kChunked;
  bool subsample = true;  // shrink the dominant k-means group before clustering training
  // Adds +lambda_ent * H instead of subtracting it. Rewards collapse; kept for fidelity experiments.
  bool literal_entropy_sign = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct NeighborIndex {
  int k = 0;
  std::vector<std::vector<int>> neighbors;  // neighbors[i] lists K sample ids, nearest first
  std::vector<int> chunk;                   // chunk id of each sample (all 0 in naive mode)

  std::size_t size() const { return neighbors.size(); }
};

// Chunked mode shuffles the ids with the config seed, splits them into n_chunks contiguous
// chunks whose sizes differ by at most one, and searches each sample's K nearest neighbors
// (squared Euclidean, ties to the lower id) inside its own chunk. Naive mode searches the full set.
NeighborIndex mine_neighbors(const Mat& embeddings, const ScanConfig& cfg);

void write_neighbors_csv(const NeighborIndex& index, const std::string& path);
NeighborIndex read_neighbors_csv(const std::string& path);

// Indices (ascending) of the samples kept for clustering training: k-means with n_clusters
// groups runs on the embeddings and the largest group is subsampled down to the median size
// of the other groups.
std::vector<std::size_t> subsample_normal(const Mat& embeddings, int n_clusters, std::uint64_t seed);

struct ScanLoss {
  double value = 0.0;
  double consistency = 0.0;
  double entropy = 0.0;
  Mat grad_anchor;    // dL / dp
  Mat grad_neighbor;  // dL / dp_nn
};

// -mean log <p_i, p_i^NN> - lambda_ent * H(mean_i p_i), dot products clamped below at 1e-8.
ScanLoss loss_scan(const Mat& probs, const Mat& neighbor_probs, double lambda_ent, bool literal_sign = false);

// Supplies embeddings for sample ids during clustering training. Two caches ("slots") let the
// anchor and neighbor batches go through the same network before a joint backward pass.
class FeatureSource {
 public:
  virtual ~FeatureSource() = default;
  virtual std::size_t size() const = 0;
  virtual Mat forward(std::span<const std::size_t> ids, nn::Mode mode, Rng* rng, int slot) = 0;
  virtual void backward(const Mat& dz, int slot) = 0;
  virtual nn::ParamRefs parameters() = 0;
  // Eval-mode embeddings for every sample.
  virtual Mat all_features() = 0;
};

// Fixed embeddings; nothing to train.
class FixedEmbeddings final : public FeatureSource {
 public:
  explicit FixedEmbeddings(Mat embeddings) : embeddings_(std::move(embeddings)) {}
  std::size_t size() const override { return static_cast<std::size_t>(embeddings_.rows()); }
  Mat forward(std::span<const std::size_t> ids, nn::Mode mode, Rng* rng, int slot) override;
  void backward(const Mat&, int) override {}
  nn::ParamRefs parameters() override { return {}; }
  Mat all_features() override { return embeddings_; }

 private:
  Mat embeddings_;
};

// Runs windows through a feature extractor held by reference.
class WindowFeatures final : public FeatureSource {
 public:
  WindowFeatures(model::FeatureExtractor& extractor, const std::vector<data::WindowSample>& windows)
      : extractor_(extractor), windows_(windows) {}
  std::size_t size() const override { return windows_.size(); }
  Mat forward(std::span<const std::size_t> ids, nn::Mode mode, Rng* rng, int slot) override;
  void backward(const Mat& dz, int slot) override;
  nn::ParamRefs parameters() override { return extractor_.parameters(); }
  Mat all_features() override { return extractor_.extract_features(windows_); }

 private:
  model::FeatureExtractor& extractor_;
  const std::vector<data::WindowSample>& windows_;
  model::FeatureExtractor::Cache caches_[2];
};

struct ScanEpochStats {
  int epoch = 0;
  double loss = 0.0;
  double consistency = 0.0;
  double entropy = 0.0;
  bool extractor_frozen = true;
};

// Trains the head (always, lr_head) and the feature source (after freeze_epochs, lr_extractor)
// on the anchors `train_ids`; ids index both the source and the neighbor index. Each anchor is
// paired with one neighbor drawn uniformly from its list. While frozen, the source runs in eval
// mode (its embeddings are computed once) and its parameters stay bit-identical.
std::vector<ScanEpochStats> train_scan(FeatureSource& features, model::ClusterHead& head,
                                       const NeighborIndex& neighbors, std::span<const std::size_t> train_ids,
                                       const ScanConfig& cfg);

// Eval-mode cluster assignment of every sample.
std::vector<int> assign_clusters(FeatureSource& features, model::ClusterHead& head);

// CSV with columns sample_id,label_if_known,e0..e{F-1}; labels may be empty.
void export_embeddings(const Mat& embeddings, const std::vector<int>* labels, const std::string& path);
struct EmbeddingTable {
  Mat embeddings;
  std::vector<std::optional<int>> labels;
};
EmbeddingTable read_embeddings_csv(const std::string& path);

// Top-2 principal-component projection of the centered embeddings.
Mat pca_project_2d(const Mat& embeddings);

}  // namespace sensorscan::scan
