#pragma once

#include "sensorscan/common.hpp"

namespace sensorscan::cluster {

struct PcaModel {
  RowVec mean;
  Mat components;        // [F, k]; column j is the j-th principal axis
  Vec explained_variance;

  Mat transform(const Mat& x) const;
  Mat inverse_transform(const Mat& projected) const;
};

// Top-k principal axes of the centered data, by descending variance. Each axis is signed so
// that its largest-magnitude loading is positive.
PcaModel fit_pca(const Mat& x, int k);

}  // namespace sensorscan::cluster
