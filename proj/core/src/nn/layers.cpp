#include "sensorscan/nn/layers.hpp"

#include <cmath>

namespace sensorscan::nn {

Parameter::Parameter(std::string n, Mat v, bool t)
    : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())), trainable(t) {}

Mat xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Real>(dist(rng));
  return w;
}

Mat softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Real m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Mat softmax_rows_backward(const Mat& probs, const Mat& dprobs) {
  const Vec inner = probs.cwiseProduct(dprobs).rowwise().sum();
  return probs.cwiseProduct(dprobs - inner.replicate(1, probs.cols()));
}

Mat sinusoidal_positional_encoding(int length, int dim) {
  if (dim % 2 != 0) throw ValidationError("positional encoding needs an even dimension");
  Mat pe(length, dim);
  for (int t = 0; t < length; ++t) {
    for (int k = 0; k < dim / 2; ++k) {
      const double angle = t / std::pow(10000.0, 2.0 * k / dim);
      pe(t, 2 * k) = static_cast<Real>(std::sin(angle));
      pe(t, 2 * k + 1) = static_cast<Real>(std::cos(angle));
    }
  }
  return pe;
}

// --- Linear -----------------------------------------------------------------

Linear::Linear(Eigen::Index in, Eigen::Index out, const std::string& name, Rng& rng, bool with_bias)
    : weight(name + ".weight", xavier_uniform(in, out, rng)),
      bias(name + ".bias", Mat::Zero(1, out)),
      has_bias_(with_bias) {}

Mat Linear::forward(const Mat& x, Cache* cache) const {
  if (x.cols() != weight.value.rows())
    throw ValidationError("linear '" + weight.name + "': expected " + std::to_string(weight.value.rows()) +
                          " input features, got " + std::to_string(x.cols()));
  if (cache) cache->input = x;
  Mat y = x * weight.value;
  if (has_bias_) y.rowwise() += bias.value.row(0);
  return y;
}

Mat Linear::backward(const Mat& dy, const Cache& cache) {
  weight.grad.noalias() += cache.input.transpose() * dy;
  if (has_bias_) bias.grad += dy.colwise().sum();
  return dy * weight.value.transpose();
}

void Linear::collect(ParamRefs& out) {
  out.push_back(&weight);
  if (has_bias_) out.push_back(&bias);
}

// --- LayerNorm --------------------------------------------------------------

LayerNorm::LayerNorm(Eigen::Index dim, const std::string& name, double e)
    : gamma(name + ".gamma", Mat::Ones(1, dim)), beta(name + ".beta", Mat::Zero(1, dim)), eps(e) {}

Mat LayerNorm::forward(const Mat& x, Cache* cache) const {
  const auto n = x.cols();
  Mat xhat(x.rows(), n);
  Vec inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Real mean = x.row(i).mean();
    const Real var = (x.row(i).array() - mean).square().mean();
    inv_std(i) = Real(1) / std::sqrt(var + static_cast<Real>(eps));
    xhat.row(i) = (x.row(i).array() - mean) * inv_std(i);
  }
  Mat y = xhat.array().rowwise() * gamma.value.row(0).array();
  y.rowwise() += beta.value.row(0);
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Mat LayerNorm::backward(const Mat& dy, const Cache& cache) {
  const auto& xhat = cache.normalized;
  gamma.grad += dy.cwiseProduct(xhat).colwise().sum();
  beta.grad += dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * gamma.value.row(0).array();
  const Vec mean_dxhat = dxhat.rowwise().mean();
  const Vec mean_dxhat_xhat = dxhat.cwiseProduct(xhat).rowwise().mean();
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i)
    dx.row(i) = cache.inv_std(i) * (dxhat.row(i).array() - mean_dxhat(i) - xhat.row(i).array() * mean_dxhat_xhat(i));
  return dx;
}

void LayerNorm::collect(ParamRefs& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

// --- BatchNorm1d ------------------------------------------------------------

BatchNorm1d::BatchNorm1d(Eigen::Index dim, const std::string& name, double m, double e)
    : gamma(name + ".gamma", Mat::Ones(1, dim)),
      beta(name + ".beta", Mat::Zero(1, dim)),
      running_mean(name + ".running_mean", Mat::Zero(1, dim), false),
      running_var(name + ".running_var", Mat::Ones(1, dim), false),
      momentum(m),
      eps(e) {}

Mat BatchNorm1d::forward(const Mat& x, Mode mode, Cache* cache) {
  RowVec mean, var;
  if (mode == Mode::kTrain) {
    if (x.rows() < 2) throw ValidationError("batch norm '" + gamma.name + "' needs a batch of >= 2 in train mode");
    mean = x.colwise().mean();
    var = (x.rowwise() - mean).array().square().colwise().mean();
    running_mean.value = (1 - momentum) * running_mean.value + momentum * mean;
    running_var.value = (1 - momentum) * running_var.value + momentum * var;
  } else {
    mean = running_mean.value.row(0);
    var = running_var.value.row(0);
  }
  const RowVec inv_std = (var.array() + static_cast<Real>(eps)).rsqrt();
  Mat xhat = (x.rowwise() - mean).array().rowwise() * inv_std.array();
  Mat y = xhat.array().rowwise() * gamma.value.row(0).array();
  y.rowwise() += beta.value.row(0);
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = inv_std;
    cache->batch_stats = mode == Mode::kTrain;
  }
  return y;
}

Mat BatchNorm1d::backward(const Mat& dy, const Cache& cache) {
  const auto& xhat = cache.normalized;
  gamma.grad += dy.cwiseProduct(xhat).colwise().sum();
  beta.grad += dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * gamma.value.row(0).array();
  if (!cache.batch_stats) return dxhat.array().rowwise() * cache.inv_std.array();
  const RowVec mean_dxhat = dxhat.colwise().mean();
  const RowVec mean_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().mean();
  Mat centered = dxhat.rowwise() - mean_dxhat;
  centered -= (xhat.array().rowwise() * mean_dxhat_xhat.array()).matrix();
  return centered.array().rowwise() * cache.inv_std.array();
}

void BatchNorm1d::collect(ParamRefs& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
  out.push_back(&running_mean);
  out.push_back(&running_var);
}

// --- ReLU / Dropout ---------------------------------------------------------

Mat relu_forward(const Mat& x, ReluCache* cache) {
  if (cache) cache->input = x;
  return x.cwiseMax(Real(0));
}

Mat relu_backward(const Mat& dy, const ReluCache& cache) {
  return (cache.input.array() > Real(0)).select(dy, Real(0));
}

Mat dropout_forward(const Mat& x, double rate, Mode mode, Rng* rng, DropoutCache* cache) {
  if (mode == Mode::kEval || rate <= 0) {
    if (cache) cache->mask.resize(0, 0);
    return x;
  }
  if (!rng) throw Error("dropout in train mode needs an RNG");
  if (rate >= 1) throw ValidationError("dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const auto scale = static_cast<Real>(1.0 / (1.0 - rate));
  Mat mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? scale : Real(0);
  Mat y = x.cwiseProduct(mask);
  if (cache) cache->mask = std::move(mask);
  return y;
}

Mat dropout_backward(const Mat& dy, const DropoutCache& cache) {
  if (cache.mask.size() == 0) return dy;
  return dy.cwiseProduct(cache.mask);
}

// --- Transformer encoder layer ---------------------------------------------

TransformerEncoderLayer::TransformerEncoderLayer(const TransformerLayerConfig& cfg, const std::string& name,
                                                 Rng& rng)
    : attn(cfg.dim, cfg.heads, name + ".attn", rng),
      norm1(cfg.dim, name + ".norm1"),
      norm2(cfg.dim, name + ".norm2"),
      ff1(cfg.dim, cfg.ff_dim, name + ".ff1", rng),
      ff2(cfg.ff_dim, cfg.dim, name + ".ff2", rng),
      dropout(cfg.dropout) {}

Mat TransformerEncoderLayer::forward(const Mat& x, int length, Mode mode, Rng* rng, Cache* c) const {
  Mat a = attn.forward(x, length, c ? &c->attn : nullptr);
  a = dropout_forward(a, dropout, mode, rng, c ? &c->attn_drop : nullptr);
  Mat y1 = norm1.forward(x + a, c ? &c->norm1 : nullptr);
  Mat f = ff1.forward(y1, c ? &c->ff1 : nullptr);
  f = relu_forward(f, c ? &c->relu : nullptr);
  f = ff2.forward(f, c ? &c->ff2 : nullptr);
  f = dropout_forward(f, dropout, mode, rng, c ? &c->ff_drop : nullptr);
  return norm2.forward(y1 + f, c ? &c->norm2 : nullptr);
}

Mat TransformerEncoderLayer::backward(const Mat& dy, const Cache& c) {
  Mat dsum2 = norm2.backward(dy, c.norm2);
  Mat df = dropout_backward(dsum2, c.ff_drop);
  df = ff2.backward(df, c.ff2);
  df = relu_backward(df, c.relu);
  Mat dy1 = dsum2 + ff1.backward(df, c.ff1);
  Mat dsum1 = norm1.backward(dy1, c.norm1);
  Mat da = dropout_backward(dsum1, c.attn_drop);
  return dsum1 + attn.backward(da, c.attn);
}

void TransformerEncoderLayer::collect(ParamRefs& out) {
  attn.collect(out);
  norm1.collect(out);
  ff1.collect(out);
  ff2.collect(out);
  norm2.collect(out);
}

std::size_t count_trainable(const ParamRefs& params) {
  std::size_t n = 0;
  for (const auto* p : params)
    if (p->trainable) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void zero_grads(const ParamRefs& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace sensorscan::nn
