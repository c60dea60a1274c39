#include "sensorscan/model.hpp"

#include <algorithm>
#include <numeric>

namespace sensorscan::model {

void ModelConfig::validate() const {
  if (n_layers < 0) throw ValidationError("model: n_layers must be >= 0");
  if (hidden < 2 || hidden % 2 != 0) throw ValidationError("model: hidden size H must be even and >= 2");
  if (heads < 1 || hidden % heads != 0) throw ValidationError("model: H must be divisible by heads");
  if (ff_dim < 1) throw ValidationError("model: ff_dim must be >= 1");
  if (!(dropout >= 0 && dropout < 1)) throw ValidationError("model: dropout must lie in [0, 1)");
  if (embedding_dim < 2) throw ValidationError("model: embedding dimension F must be >= 2");
  if (n_clusters < 2) throw ValidationError("model: n_clusters must be >= 2");
  if (channels < 1) throw ValidationError("model: channels D must be >= 1");
  if (window < 1) throw ValidationError("model: window L must be >= 1");
}

Mat stack_windows(const std::vector<data::WindowSample>& windows, std::span<const std::size_t> indices) {
  if (indices.empty()) return Mat(0, 0);
  const auto& first = windows.at(indices.front()).values;
  const Eigen::Index l = first.rows();
  Mat out(static_cast<Eigen::Index>(indices.size()) * l, first.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& w = windows.at(indices[i]).values;
    if (w.rows() != l || w.cols() != first.cols()) throw ValidationError("stack_windows: window shapes differ");
    out.middleRows(static_cast<Eigen::Index>(i) * l, l) = w;
  }
  return out;
}

Mat stack_windows(const std::vector<data::WindowSample>& windows) {
  std::vector<std::size_t> idx(windows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return stack_windows(windows, idx);
}

Mat stack_matrices(const std::vector<Mat>& blocks) {
  if (blocks.empty()) return Mat(0, 0);
  Eigen::Index rows = 0;
  for (const auto& b : blocks) rows += b.rows();
  Mat out(rows, blocks.front().cols());
  Eigen::Index r = 0;
  for (const auto& b : blocks) {
    out.middleRows(r, b.rows()) = b;
    r += b.rows();
  }
  return out;
}

// --- Encoder ----------------------------------------------------------------

Encoder::Encoder(const ModelConfig& cfg, Rng& rng)
    : input(cfg.channels, cfg.hidden, "encoder.input", rng),
      positional_(nn::sinusoidal_positional_encoding(cfg.window, cfg.hidden)),
      dropout_(cfg.dropout),
      window_(cfg.window) {
  nn::TransformerLayerConfig lc{cfg.hidden, cfg.ff_dim, cfg.heads, cfg.dropout};
  for (int i = 0; i < cfg.n_layers; ++i)
    layers.emplace_back(lc, "encoder.layer" + std::to_string(i), rng);
}

Mat Encoder::forward(const Mat& x, Mode mode, Rng* rng, Cache* cache) const {
  if (x.rows() % window_ != 0) throw ValidationError("encoder: input rows are not a multiple of L");
  Mat h = input.forward(x, cache ? &cache->input : nullptr);
  const Eigen::Index n = x.rows() / window_;
  for (Eigen::Index s = 0; s < n; ++s) h.middleRows(s * window_, window_) += positional_;
  h = nn::dropout_forward(h, dropout_, mode, rng, cache ? &cache->input_drop : nullptr);
  if (cache) cache->layers.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i)
    h = layers[i].forward(h, window_, mode, rng, cache ? &cache->layers[i] : nullptr);
  return h;
}

Mat Encoder::backward(const Mat& dh, const Cache& cache) {
  Mat g = dh;
  for (std::size_t i = layers.size(); i-- > 0;) g = layers[i].backward(g, cache.layers[i]);
  g = nn::dropout_backward(g, cache.input_drop);
  return input.backward(g, cache.input);
}

void Encoder::collect(ParamRefs& out) {
  input.collect(out);
  for (auto& l : layers) l.collect(out);
}

// --- Pooling ----------------------------------------------------------------

SequencePooling::SequencePooling(Eigen::Index dim, Rng& rng)
    : weight("pool.weight", nn::xavier_uniform(dim, 1, rng)) {}

Mat SequencePooling::position_weights(const Mat& h, int length) const {
  const Eigen::Index n = h.rows() / length;
  const Mat scores = h * weight.value;  // [N*L, 1]
  const Mat logits = Eigen::Map<const Mat>(scores.data(), n, length);
  return nn::softmax_rows(logits);
}

Mat SequencePooling::forward(const Mat& h, int length, Cache* cache) const {
  if (length < 1 || h.rows() % length != 0) throw ValidationError("pooling: rows are not a multiple of L");
  const Eigen::Index n = h.rows() / length;
  Mat w = position_weights(h, length);
  Mat pooled(n, h.cols());
  for (Eigen::Index s = 0; s < n; ++s) pooled.row(s).noalias() = w.row(s) * h.middleRows(s * length, length);
  if (cache) {
    cache->sequence = h;
    cache->weights = std::move(w);
    cache->length = length;
  }
  return pooled;
}

Mat SequencePooling::backward(const Mat& dpooled, const Cache& cache) {
  const int length = cache.length;
  const Eigen::Index n = dpooled.rows();
  const Mat& h = cache.sequence;
  Mat dh(h.rows(), h.cols());
  Mat dscores(h.rows(), 1);
  for (Eigen::Index s = 0; s < n; ++s) {
    const auto hs = h.middleRows(s * length, length);
    const RowVec w = cache.weights.row(s);
    const RowVec dw = (hs * dpooled.row(s).transpose()).transpose();
    const Real inner = w.dot(dw);
    const RowVec ds = w.array() * (dw.array() - inner);
    dh.middleRows(s * length, length).noalias() = w.transpose() * dpooled.row(s);
    dscores.middleRows(s * length, length) = ds.transpose();
  }
  weight.grad.noalias() += h.transpose() * dscores;
  dh.noalias() += dscores * weight.value.transpose();
  return dh;
}

void SequencePooling::collect(ParamRefs& out) { out.push_back(&weight); }

// --- MLP head ---------------------------------------------------------------

MlpHead::MlpHead(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, const std::string& name, Rng& rng)
    : fc1(in, hidden, name + ".fc1", rng, false), bn(hidden, name + ".bn"), fc2(hidden, out, name + ".fc2", rng) {}

Mat MlpHead::forward(const Mat& x, Mode mode, Cache* c) {
  Mat h = fc1.forward(x, c ? &c->fc1 : nullptr);
  h = bn.forward(h, mode, c ? &c->bn : nullptr);
  h = nn::relu_forward(h, c ? &c->relu : nullptr);
  return fc2.forward(h, c ? &c->fc2 : nullptr);
}

Mat MlpHead::backward(const Mat& dy, const Cache& c) {
  Mat g = fc2.backward(dy, c.fc2);
  g = nn::relu_backward(g, c.relu);
  g = bn.backward(g, c.bn);
  return fc1.backward(g, c.fc1);
}

void MlpHead::collect(ParamRefs& out) {
  fc1.collect(out);
  bn.collect(out);
  fc2.collect(out);
}

// --- Feature extractor ------------------------------------------------------

FeatureExtractor::FeatureExtractor(const ModelConfig& cfg, Rng& rng) : config_(cfg) {
  cfg.validate();
  encoder = Encoder(cfg, rng);
  pooling = SequencePooling(cfg.hidden, rng);
  projection = MlpHead(cfg.hidden, cfg.hidden, cfg.embedding_dim, "projection", rng);
}

Mat FeatureExtractor::encode(const Mat& x, Mode mode, Rng* rng, Encoder::Cache* cache) const {
  return encoder.forward(x, mode, rng, cache);
}

Mat FeatureExtractor::pool(const Mat& h, SequencePooling::Cache* cache) const {
  return pooling.forward(h, encoder.window(), cache);
}

Mat FeatureExtractor::project(const Mat& pooled, Mode mode, MlpHead::Cache* cache) {
  return projection.forward(pooled, mode, cache);
}

Mat FeatureExtractor::forward(const Mat& x, Mode mode, Rng* rng, Cache* cache, Mat* sequence) {
  Mat h = encode(x, mode, rng, cache ? &cache->encoder : nullptr);
  Mat z = project(pool(h, cache ? &cache->pool : nullptr), mode, cache ? &cache->projection : nullptr);
  if (sequence) *sequence = std::move(h);
  return z;
}

void FeatureExtractor::backward(const Mat& dembedding, const Mat& dsequence, const Cache& cache) {
  Mat dh;
  if (dembedding.size() > 0) {
    const Mat dpooled = projection.backward(dembedding, cache.projection);
    dh = pooling.backward(dpooled, cache.pool);
  }
  if (dsequence.size() > 0) {
    if (dh.size() == 0) dh = dsequence;
    else dh += dsequence;
  }
  if (dh.size() == 0) return;
  encoder.backward(dh, cache.encoder);
}

Mat FeatureExtractor::extract_features(const std::vector<data::WindowSample>& windows, std::size_t batch) {
  Mat out(static_cast<Eigen::Index>(windows.size()), config_.embedding_dim);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < windows.size(); start += batch) {
    const std::size_t end = std::min(windows.size(), start + batch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        forward(stack_windows(windows, idx), Mode::kEval, nullptr);
  }
  return out;
}

ParamRefs FeatureExtractor::parameters() {
  ParamRefs out;
  encoder.collect(out);
  pooling.collect(out);
  projection.collect(out);
  return out;
}

ReconstructionHead::ReconstructionHead(const ModelConfig& cfg, Rng& rng)
    : linear(cfg.hidden, cfg.channels, "reconstruction", rng) {}

// --- Cluster head -----------------------------------------------------------

ClusterHead::ClusterHead(int embedding_dim, int n_outputs, Rng& rng, const std::string& name)
    : mlp(embedding_dim, embedding_dim, n_outputs, name, rng) {
  if (n_outputs < 2) throw ValidationError("cluster head needs >= 2 outputs");
}

Mat ClusterHead::forward(const Mat& z, Mode mode, Cache* cache) {
  Mat p = nn::softmax_rows(mlp.forward(z, mode, cache ? &cache->mlp : nullptr));
  if (cache) cache->probs = p;
  return p;
}

Mat ClusterHead::backward_probs(const Mat& dprobs, const Cache& cache) {
  return backward_logits(nn::softmax_rows_backward(cache.probs, dprobs), cache);
}

Mat ClusterHead::backward_logits(const Mat& dlogits, const Cache& cache) { return mlp.backward(dlogits, cache.mlp); }

ParamRefs ClusterHead::parameters() {
  ParamRefs out;
  collect(out);
  return out;
}

std::vector<int> argmax_rows(const Mat& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < probs.cols(); ++j)
      if (probs(i, j) > probs(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace sensorscan::model
