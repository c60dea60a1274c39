#pragma once

#include <string>
#include <vector>

#include "sensorscan/common.hpp"

// Minimal differentiable layers with hand-written backward passes.
//
// Every layer follows the same contract: forward(x, ..., cache) stores whatever the backward
// pass needs in a caller-owned cache (nullptr for inference), and backward(dy, cache)
// accumulates parameter gradients into Parameter::grad and returns the input gradient.
// Batched sequence inputs are stacked row-wise: N sequences of length L form an [N*L, H] matrix.
namespace sensorscan::nn {

enum class Mode { kTrain, kEval };

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Mat value, bool trainable = true);

  std::string name;
  Mat value;
  Mat grad;
  bool trainable = true;  // false for buffers (running statistics); never touched by the optimizer
  bool frozen = false;    // trainable but temporarily excluded from updates

  void zero_grad() { grad.setZero(); }
};

using ParamRefs = std::vector<Parameter*>;

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Mat xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

// Row-wise numerically stable softmax.
Mat softmax_rows(const Mat& logits);
// Gradient of a row-wise softmax: given p = softmax(z) and dL/dp, returns dL/dz.
Mat softmax_rows_backward(const Mat& probs, const Mat& dprobs);

Mat sinusoidal_positional_encoding(int length, int dim);

class Linear {
 public:
  struct Cache {
    Mat input;
  };

  Linear() = default;
  Linear(Eigen::Index in, Eigen::Index out, const std::string& name, Rng& rng, bool with_bias = true);

  Mat forward(const Mat& x, Cache* cache = nullptr) const;
  Mat backward(const Mat& dy, const Cache& cache);
  void collect(ParamRefs& out);

  Eigen::Index in_features() const { return weight.value.rows(); }
  Eigen::Index out_features() const { return weight.value.cols(); }
  bool has_bias() const { return has_bias_; }

  Parameter weight;  // [in, out]
  Parameter bias;    // [1, out], unused without bias

 private:
  bool has_bias_ = true;
};

class LayerNorm {
 public:
  struct Cache {
    Mat normalized;
    Vec inv_std;
  };

  LayerNorm() = default;
  LayerNorm(Eigen::Index dim, const std::string& name, double eps = 1e-5);

  Mat forward(const Mat& x, Cache* cache = nullptr) const;
  Mat backward(const Mat& dy, const Cache& cache);
  void collect(ParamRefs& out);

  Parameter gamma;
  Parameter beta;
  double eps = 1e-5;
};

class BatchNorm1d {
 public:
  struct Cache {
    Mat normalized;
    RowVec inv_std;
    bool batch_stats = false;
  };

  BatchNorm1d() = default;
  BatchNorm1d(Eigen::Index dim, const std::string& name, double momentum = 0.1, double eps = 1e-5);

  // Train mode normalizes by batch statistics (population variance) and updates the running
  // statistics; eval mode uses the running statistics.
  Mat forward(const Mat& x, Mode mode, Cache* cache = nullptr);
  Mat backward(const Mat& dy, const Cache& cache);
  void collect(ParamRefs& out);

  Parameter gamma;
  Parameter beta;
  Parameter running_mean;  // buffer
  Parameter running_var;   // buffer
  double momentum = 0.1;
  double eps = 1e-5;
};

struct ReluCache {
  Mat input;
};
Mat relu_forward(const Mat& x, ReluCache* cache = nullptr);
Mat relu_backward(const Mat& dy, const ReluCache& cache);

// Inverted dropout. In eval mode, or with rate 0, it is the identity and the mask stays empty.
struct DropoutCache {
  Mat mask;
};
Mat dropout_forward(const Mat& x, double rate, Mode mode, Rng* rng, DropoutCache* cache = nullptr);
Mat dropout_backward(const Mat& dy, const DropoutCache& cache);

// The key projection has no bias: it would add the same constant to every logit of a softmax
// row and so never receive a gradient.
class MultiHeadSelfAttention {
 public:
  struct Cache {
    Linear::Cache q_cache, k_cache, v_cache, out_cache;
    Mat q, k, v;
    Mat attention;  // [N * heads * L, L]; row (n * heads + h) * L + i holds query i's weights
    int length = 0;
  };

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(Eigen::Index dim, int heads, const std::string& name, Rng& rng);

  Mat forward(const Mat& x, int length, Cache* cache = nullptr) const;
  Mat backward(const Mat& dy, const Cache& cache);
  void collect(ParamRefs& out);

  int heads() const { return heads_; }

  Linear query, key, value, output;

 private:
  int heads_ = 1;
};

struct TransformerLayerConfig {
  Eigen::Index dim = 128;
  Eigen::Index ff_dim = 512;
  int heads = 4;
  double dropout = 0.1;
};

// Post-norm encoder layer: LN(x + Drop(MHSA(x))), then LN(y + Drop(FF(y))) with a ReLU FF block.
class TransformerEncoderLayer {
 public:
  struct Cache {
    MultiHeadSelfAttention::Cache attn;
    DropoutCache attn_drop, ff_drop;
    LayerNorm::Cache norm1, norm2;
    Linear::Cache ff1, ff2;
    ReluCache relu;
  };

  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(const TransformerLayerConfig& cfg, const std::string& name, Rng& rng);

  Mat forward(const Mat& x, int length, Mode mode, Rng* rng, Cache* cache = nullptr) const;
  Mat backward(const Mat& dy, const Cache& cache);
  void collect(ParamRefs& out);

  MultiHeadSelfAttention attn;
  LayerNorm norm1, norm2;
  Linear ff1, ff2;
  double dropout = 0.1;
};

// Number of trainable scalars.
std::size_t count_trainable(const ParamRefs& params);
void zero_grads(const ParamRefs& params);

}  // namespace sensorscan::nn
