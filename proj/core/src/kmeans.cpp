#include "sensorscan/kmeans.hpp"

#include <limits>

namespace sensorscan::cluster {

namespace {

double assign(const Mat& x, const Mat& centroids, std::vector<int>& labels) {
  const Vec cn = centroids.rowwise().squaredNorm();
  const Mat cross = x * centroids.transpose();
  double inertia = 0.0;
  labels.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double xn = x.row(i).squaredNorm();
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = std::max(0.0, xn - 2.0 * cross(i, c) + cn(c));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    inertia += best_d;
  }
  return inertia;
}

Mat plus_plus_init(const Mat& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  Mat centroids(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centroids.row(0) = x.row(pick(rng));
  Vec dist = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = dist.sum();
    Eigen::Index chosen = pick(rng);
    if (total > 0) {
      double target = unit(rng) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= dist(i);
        if (target <= 0) {
          chosen = i;
          break;
        }
      }
    }
    centroids.row(c) = x.row(chosen);
    dist = dist.cwiseMin((x.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }
  return centroids;
}

}  // namespace

std::vector<int> assign_nearest(const Mat& x, const Mat& centroids) {
  std::vector<int> labels;
  assign(x, centroids, labels);
  return labels;
}

KMeansResult kmeans(const Mat& x, const KMeansOptions& opt) {
  if (opt.k < 1) throw ValidationError("kmeans: k must be >= 1");
  if (x.rows() < opt.k) throw ValidationError("kmeans: fewer samples than clusters");
  if (opt.restarts < 1 || opt.max_iter < 1) throw ValidationError("kmeans: restarts and max_iter must be >= 1");

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < opt.restarts; ++r) {
    Rng rng(mix_seed(opt.seed, 0x4B4D, static_cast<std::uint64_t>(r)));
    KMeansResult run;
    run.centroids = plus_plus_init(x, opt.k, rng);
    for (run.iterations = 1; run.iterations <= opt.max_iter; ++run.iterations) {
      run.inertia_history.push_back(assign(x, run.centroids, run.labels));
      Mat next = run.centroids;
      Vec counts = Vec::Zero(opt.k);
      Mat sums = Mat::Zero(opt.k, x.cols());
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int c = run.labels[static_cast<std::size_t>(i)];
        sums.row(c) += x.row(i);
        counts(c) += 1;
      }
      for (int c = 0; c < opt.k; ++c)
        if (counts(c) > 0) next.row(c) = sums.row(c) / counts(c);  // empty clusters keep their centroid
      const double shift = (next - run.centroids).rowwise().norm().maxCoeff();
      run.centroids = std::move(next);
      if (shift <= opt.tol) break;
    }
    run.iterations = std::min(run.iterations, opt.max_iter);
    run.inertia = assign(x, run.centroids, run.labels);
    run.inertia_history.push_back(run.inertia);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

}  // namespace sensorscan::cluster
