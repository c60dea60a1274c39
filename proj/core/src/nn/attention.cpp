#include <cmath>

#include "sensorscan/nn/layers.hpp"

namespace sensorscan::nn {

MultiHeadSelfAttention::MultiHeadSelfAttention(Eigen::Index dim, int heads, const std::string& name, Rng& rng)
    : query(dim, dim, name + ".query", rng),
      key(dim, dim, name + ".key", rng, false),
      value(dim, dim, name + ".value", rng),
      output(dim, dim, name + ".output", rng),
      heads_(heads) {
  if (heads < 1 || dim % heads != 0)
    throw ValidationError("attention: dim " + std::to_string(dim) + " is not divisible by " +
                          std::to_string(heads) + " heads");
}

Mat MultiHeadSelfAttention::forward(const Mat& x, int length, Cache* cache) const {
  if (length < 1 || x.rows() % length != 0) throw ValidationError("attention: rows are not a multiple of L");
  const Eigen::Index dim = x.cols();
  const Eigen::Index n = x.rows() / length;
  const Eigen::Index dh = dim / heads_;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));

  Cache local;
  Cache& c = cache ? *cache : local;
  c.length = length;
  c.q = query.forward(x, cache ? &c.q_cache : nullptr);
  c.k = key.forward(x, cache ? &c.k_cache : nullptr);
  c.v = value.forward(x, cache ? &c.v_cache : nullptr);
  c.attention.resize(n * heads_ * length, length);

  Mat context(x.rows(), dim);
  parallel_for(static_cast<std::size_t>(n), default_jobs(), [&](std::size_t s) {
    const auto row0 = static_cast<Eigen::Index>(s) * length;
    for (int h = 0; h < heads_; ++h) {
      const auto q = c.q.block(row0, h * dh, length, dh);
      const auto k = c.k.block(row0, h * dh, length, dh);
      const auto v = c.v.block(row0, h * dh, length, dh);
      Mat a = softmax_rows((q * k.transpose()) * scale);
      context.block(row0, h * dh, length, dh).noalias() = a * v;
      c.attention.middleRows((static_cast<Eigen::Index>(s) * heads_ + h) * length, length) = a;
    }
  });
  return output.forward(context, cache ? &c.out_cache : nullptr);
}

Mat MultiHeadSelfAttention::backward(const Mat& dy, const Cache& c) {
  const int length = c.length;
  const Eigen::Index dim = dy.cols();
  const Eigen::Index n = dy.rows() / length;
  const Eigen::Index dh = dim / heads_;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));

  const Mat dcontext = output.backward(dy, c.out_cache);
  Mat dq(dy.rows(), dim), dk(dy.rows(), dim), dv(dy.rows(), dim);
  parallel_for(static_cast<std::size_t>(n), default_jobs(), [&](std::size_t s) {
    const auto row0 = static_cast<Eigen::Index>(s) * length;
    for (int h = 0; h < heads_; ++h) {
      const auto a = c.attention.middleRows((static_cast<Eigen::Index>(s) * heads_ + h) * length, length);
      const auto q = c.q.block(row0, h * dh, length, dh);
      const auto k = c.k.block(row0, h * dh, length, dh);
      const auto v = c.v.block(row0, h * dh, length, dh);
      const auto dctx = dcontext.block(row0, h * dh, length, dh);
      const Mat da = dctx * v.transpose();
      const Mat ds = softmax_rows_backward(a, da) * scale;
      dv.block(row0, h * dh, length, dh).noalias() = a.transpose() * dctx;
      dq.block(row0, h * dh, length, dh).noalias() = ds * k;
      dk.block(row0, h * dh, length, dh).noalias() = ds.transpose() * q;
    }
  });
  Mat dx = query.backward(dq, c.q_cache);
  dx += key.backward(dk, c.k_cache);
  dx += value.backward(dv, c.v_cache);
  return dx;
}

void MultiHeadSelfAttention::collect(ParamRefs& out) {
  query.collect(out);
  key.collect(out);
  value.collect(out);
  output.collect(out);
}

}  // namespace sensorscan::nn
