#pragma once

#include <cstdint>
#include <vector>

#include "sensorscan/common.hpp"

namespace sensorscan::cluster {

struct KMeansOptions {
  int k = 2;
  int restarts = 10;
  int max_iter = 300;
  double tol = 1e-6;  // stop once no centroid moves farther than this
  std::uint64_t seed = 0;
};

struct KMeansResult {
  Mat centroids;  // [k, F]
  std::vector<int> labels;
  double inertia = 0.0;
  int iterations = 0;
  // Objective after every assignment step of the winning restart.
  std::vector<double> inertia_history;
};

// Lloyd iterations from k-means++ seeds; the restart with the lowest inertia wins.
KMeansResult kmeans(const Mat& x, const KMeansOptions& options);

// Nearest centroid by squared Euclidean distance; ties go to the lower index.
std::vector<int> assign_nearest(const Mat& x, const Mat& centroids);

}  // namespace sensorscan::cluster
