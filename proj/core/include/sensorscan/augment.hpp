#pragma once

#include "sensorscan/common.hpp"

// Time-series augmentations and geometric masking for the pretraining tasks.
namespace sensorscan::aug {

struct AugmentConfig {
  double jitter_std = 0.08;
  double scale_std = 0.1;
  double scale_mean_weak = 2.0;
  double scale_mean_strong = 0.5;
  int n_permute_chunks = 15;

  void validate(int window) const;
};

class MaskConfig {
 public:
  MaskConfig() : MaskConfig(0.5, 6.0) {}
  MaskConfig(double masked_ratio, double mean_masked_length);

  double masked_ratio() const { return r_; }
  double mean_masked_length() const { return l_m_; }
  // Expected unmasked segment length, ((1 - r) / r) * l_m.
  double mean_unmasked_length() const { return l_u_; }

 private:
  double r_;
  double l_m_;
  double l_u_;
};

Mat jitter(const Mat& x, double std, Rng& rng);
// Multiplies each channel by one factor drawn from Normal(mean, std).
Mat scale(const Mat& x, double mean, double std, Rng& rng);
// Cuts x at n_chunks - 1 distinct random rows and concatenates the pieces in random order.
Mat permute(const Mat& x, int n_chunks, Rng& rng);

Mat weak_augment(const Mat& x, const AugmentConfig& cfg, Rng& rng);
Mat strong_augment(const Mat& x, const AugmentConfig& cfg, Rng& rng);

// 0 marks a masked entry, 1 an observed one.
Mat gen_mask(int length, int channels, const MaskConfig& cfg, Rng& rng);
Mat apply_mask(const Mat& x, const Mat& mask);

}  // namespace sensorscan::aug
