#include "sensorscan/augment.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace sensorscan::aug {

void AugmentConfig::validate(int window) const {
  if (jitter_std < 0) throw ValidationError("augment: jitter_std must be >= 0");
  if (scale_std < 0) throw ValidationError("augment: scale_std must be >= 0");
  if (n_permute_chunks < 1 || n_permute_chunks > window)
    throw ValidationError("augment: n_permute_chunks must lie in [1, L]");
}

MaskConfig::MaskConfig(double masked_ratio, double mean_masked_length)
    : r_(masked_ratio), l_m_(mean_masked_length), l_u_((1.0 - masked_ratio) / masked_ratio * mean_masked_length) {
  if (!(r_ > 0.0 && r_ < 1.0)) throw ValidationError("mask: masked ratio r must lie in (0, 1)");
  if (!(l_m_ >= 1.0)) throw ValidationError("mask: mean masked length must be >= 1");
  if (!(l_u_ >= 1.0)) throw ValidationError("mask: implied mean unmasked length must be >= 1");
}

Mat jitter(const Mat& x, double std, Rng& rng) {
  if (std < 0) throw ValidationError("jitter: std must be >= 0");
  if (std == 0) return x;
  std::normal_distribution<double> noise(0.0, std);
  Mat out = x;
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += static_cast<Real>(noise(rng));
  return out;
}

Mat scale(const Mat& x, double mean, double std, Rng& rng) {
  if (std < 0) throw ValidationError("scale: std must be >= 0");
  std::normal_distribution<double> factor(mean, std);
  Mat out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto s = static_cast<Real>(std == 0 ? mean : factor(rng));
    out.col(j) = x.col(j) * s;
  }
  return out;
}

Mat permute(const Mat& x, int n_chunks, Rng& rng) {
  const auto length = static_cast<int>(x.rows());
  if (n_chunks < 1 || n_chunks > length) throw ValidationError("permute: n_chunks must lie in [1, L]");
  if (n_chunks == 1) return x;

  std::vector<int> candidates(length - 1);
  std::iota(candidates.begin(), candidates.end(), 1);
  std::vector<int> cuts;
  cuts.reserve(n_chunks + 1);
  cuts.push_back(0);
  std::sample(candidates.begin(), candidates.end(), std::back_inserter(cuts), n_chunks - 1, rng);
  cuts.push_back(length);  // std::sample keeps the candidates' ascending order

  std::vector<int> order(n_chunks);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  Mat out(x.rows(), x.cols());
  Eigen::Index row = 0;
  for (int c : order) {
    const int len = cuts[c + 1] - cuts[c];
    out.middleRows(row, len) = x.middleRows(cuts[c], len);
    row += len;
  }
  return out;
}

Mat weak_augment(const Mat& x, const AugmentConfig& cfg, Rng& rng) {
  Mat scaled = scale(x, cfg.scale_mean_weak, cfg.scale_std, rng);
  return jitter(scaled, cfg.jitter_std, rng);
}

Mat strong_augment(const Mat& x, const AugmentConfig& cfg, Rng& rng) {
  Mat permuted = permute(x, cfg.n_permute_chunks, rng);
  return scale(permuted, cfg.scale_mean_strong, cfg.scale_std, rng);
}

Mat gen_mask(int length, int channels, const MaskConfig& cfg, Rng& rng) {
  // std::geometric_distribution counts failures, so +1 moves the support to {1, 2, ...}.
  std::geometric_distribution<int> masked_len(1.0 / cfg.mean_masked_length());
  std::geometric_distribution<int> unmasked_len(1.0 / cfg.mean_unmasked_length());
  std::bernoulli_distribution start_masked(cfg.masked_ratio());

  Mat mask(length, channels);
  for (int d = 0; d < channels; ++d) {
    bool masked = start_masked(rng);
    int t = 0;
    while (t < length) {
      const int seg = 1 + (masked ? masked_len(rng) : unmasked_len(rng));
      const int end = std::min(length, t + seg);
      for (; t < end; ++t) mask(t, d) = masked ? Real(0) : Real(1);
      masked = !masked;
    }
  }
  return mask;
}

Mat apply_mask(const Mat& x, const Mat& mask) {
  if (x.rows() != mask.rows() || x.cols() != mask.cols())
    throw ValidationError("apply_mask: shape mismatch");
  return x.cwiseProduct(mask);
}

}  // namespace sensorscan::aug
