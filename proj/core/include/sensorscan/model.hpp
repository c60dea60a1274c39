#pragma once

#include <span>
#include <vector>

#include "sensorscan/data.hpp"
#include "sensorscan/nn/layers.hpp"

// The network: Transformer encoder, attention-weighted sequence pooling, projection head,
// reconstruction head and clustering head.
namespace sensorscan::model {

using nn::Mode;
using nn::ParamRefs;

struct ModelConfig {
  int n_layers = 3;
  int hidden = 128;        // encoder width H
  int ff_dim = 512;
  int heads = 4;
  double dropout = 0.1;
  int embedding_dim = 32;  // F
  int n_clusters = 2;      // clustering head width
  int channels = 30;       // D
  int window = 100;        // L

  void validate() const;
};

// Stacks the selected windows into an [N*L, D] matrix.
Mat stack_windows(const std::vector<data::WindowSample>& windows, std::span<const std::size_t> indices);
Mat stack_windows(const std::vector<data::WindowSample>& windows);
Mat stack_matrices(const std::vector<Mat>& blocks);

class Encoder {
 public:
  struct Cache {
    nn::Linear::Cache input;
    nn::DropoutCache input_drop;
    std::vector<nn::TransformerEncoderLayer::Cache> layers;
  };

  Encoder() = default;
  Encoder(const ModelConfig& cfg, Rng& rng);

  // [N*L, D] -> [N*L, H]: input projection, additive positional encoding, dropout, layers.
  Mat forward(const Mat& x, Mode mode, Rng* rng, Cache* cache = nullptr) const;
  Mat backward(const Mat& dh, const Cache& cache);
  void collect(ParamRefs& out);

  int window() const { return window_; }

  nn::Linear input;
  std::vector<nn::TransformerEncoderLayer> layers;

 private:
  Mat positional_;
  double dropout_ = 0.0;
  int window_ = 1;
};

// w = softmax over positions of h * W_pool; pooled = w^T h.
class SequencePooling {
 public:
  struct Cache {
    Mat sequence;
    Mat weights;  // [N, L]
    int length = 0;
  };

  SequencePooling() = default;
  SequencePooling(Eigen::Index dim, Rng& rng);

  Mat forward(const Mat& h, int length, Cache* cache = nullptr) const;
  Mat position_weights(const Mat& h, int length) const;
  Mat backward(const Mat& dpooled, const Cache& cache);
  void collect(ParamRefs& out);

  nn::Parameter weight;  // [H, 1]
};

// dense -> BatchNorm -> ReLU -> dense. The first dense has no bias since BatchNorm subtracts it again.
class MlpHead {
 public:
  struct Cache {
    nn::Linear::Cache fc1, fc2;
    nn::BatchNorm1d::Cache bn;
    nn::ReluCache relu;
  };

  MlpHead() = default;
  MlpHead(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, const std::string& name, Rng& rng);

  Mat forward(const Mat& x, Mode mode, Cache* cache = nullptr);
  Mat backward(const Mat& dy, const Cache& cache);
  void collect(ParamRefs& out);

  nn::Linear fc1;
  nn::BatchNorm1d bn;
  nn::Linear fc2;
};

class FeatureExtractor {
 public:
  struct Cache {
    Encoder::Cache encoder;
    SequencePooling::Cache pool;
    MlpHead::Cache projection;
  };

  FeatureExtractor() = default;
  FeatureExtractor(const ModelConfig& cfg, Rng& rng);

  Mat encode(const Mat& x, Mode mode, Rng* rng = nullptr, Encoder::Cache* cache = nullptr) const;
  Mat pool(const Mat& h, SequencePooling::Cache* cache = nullptr) const;
  Mat project(const Mat& pooled, Mode mode, MlpHead::Cache* cache = nullptr);

  // project(pool(encode(x))). When `sequence` is given it receives the encoder output.
  Mat forward(const Mat& x, Mode mode, Rng* rng, Cache* cache = nullptr, Mat* sequence = nullptr);
  // Backpropagates an embedding gradient and/or an encoder-output gradient (either may be empty).
  void backward(const Mat& dembedding, const Mat& dsequence, const Cache& cache);

  // Eval-mode embeddings [N, F] of the given windows.
  Mat extract_features(const std::vector<data::WindowSample>& windows, std::size_t batch = 256);

  ParamRefs parameters();
  const ModelConfig& config() const { return config_; }

  Encoder encoder;
  SequencePooling pooling;
  MlpHead projection;

 private:
  ModelConfig config_;
};

// Per-timestep H -> D linear map used only during pretraining.
class ReconstructionHead {
 public:
  ReconstructionHead() = default;
  ReconstructionHead(const ModelConfig& cfg, Rng& rng);

  Mat forward(const Mat& h, nn::Linear::Cache* cache = nullptr) const { return linear.forward(h, cache); }
  Mat backward(const Mat& dy, const nn::Linear::Cache& cache) { return linear.backward(dy, cache); }
  void collect(ParamRefs& out) { linear.collect(out); }

  nn::Linear linear;
};

// F -> F -> n_outputs MLP with a softmax on top.
class ClusterHead {
 public:
  struct Cache {
    MlpHead::Cache mlp;
    Mat probs;
  };

  ClusterHead() = default;
  ClusterHead(int embedding_dim, int n_outputs, Rng& rng, const std::string& name = "cluster_head");

  Mat logits(const Mat& z, Mode mode, MlpHead::Cache* cache = nullptr) { return mlp.forward(z, mode, cache); }
  Mat forward(const Mat& z, Mode mode, Cache* cache = nullptr);
  // Gradient w.r.t. the probabilities -> gradient w.r.t. z.
  Mat backward_probs(const Mat& dprobs, const Cache& cache);
  // Gradient w.r.t. the logits -> gradient w.r.t. z.
  Mat backward_logits(const Mat& dlogits, const Cache& cache);
  void collect(ParamRefs& out) { mlp.collect(out); }
  ParamRefs parameters();

  int n_outputs() const { return static_cast<int>(mlp.fc2.out_features()); }

  MlpHead mlp;
};

// Row-wise argmax; ties go to the lower index.
std::vector<int> argmax_rows(const Mat& probs);

}  // namespace sensorscan::model
