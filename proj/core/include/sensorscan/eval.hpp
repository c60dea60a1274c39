#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sensorscan/data.hpp"

// Clustering metrics, fault detection and diagnosis metrics, and the PCA + k-means baseline.
namespace sensorscan::eval {

// counts[q][c] over the distinct labels (rows) and clusters (columns), both in ascending id order.
struct ContingencyTable {
  std::vector<int> labels;
  std::vector<int> clusters;
  std::vector<std::vector<std::int64_t>> counts;
  std::vector<std::int64_t> row_sums;
  std::vector<std::int64_t> col_sums;
  std::int64_t total = 0;
};

ContingencyTable contingency(const std::vector<int>& y, const std::vector<int>& c);

// Maximum-weight perfect matching on a square matrix; result[row] = column.
std::vector<int> hungarian_max(const std::vector<std::vector<double>>& weights);

double acc(const std::vector<int>& y, const std::vector<int>& c);
// 2 I(Y;C) / (H(Y) + H(C)), natural log. 1 when both partitions are a single identical block,
// 0 when exactly one of them has zero entropy.
double nmi(const std::vector<int>& y, const std::vector<int>& c);
double ari(const std::vector<int>& y, const std::vector<int>& c);
double rand_index(const std::vector<int>& y, const std::vector<int>& c);

struct FaultRates {
  int state = 0;
  std::int64_t samples = 0;
  double tpr = 0.0;
  double fpr = 0.0;
};

struct ClusteringScores {
  double acc = 0.0;
  double nmi = 0.0;
  double ari = 0.0;
};

struct FddReport {
  std::string name;
  std::vector<FaultRates> per_fault;
  double detection_tpr = 0.0;
  double detection_fpr = 0.0;
  std::optional<double> cdr;          // undefined without detected faulty samples
  std::optional<double> add_samples;  // undefined without detected faulty runs
  std::optional<double> add_minutes;
  std::int64_t normal_samples = 0;
  std::int64_t faulty_samples = 0;
  std::optional<ClusteringScores> clustering;
  std::string fingerprint;
};

struct FddOptions {
  int step = 1;                      // stride between consecutive windows, in timestamps
  double sampling_period_min = 3.0;  // minutes per timestamp
  // Fault states to report; empty means every faulty state present in the truth.
  std::vector<int> fault_states;
};

// State 0 is normal. TPR_i counts type-i samples predicted as i; FPR_i counts normal samples
// predicted as i. Detection rates use the faulty-vs-normal reduction. CDR divides correctly
// diagnosed faulty samples by detected ones. ADD averages, over runs with a detection at or after
// their first truly faulty window, the window gap times `step`.
FddReport fdd_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                      const std::vector<data::RunBoundary>& runs, const FddOptions& options);

const FaultRates* find_fault(const FddReport& report, int state);

struct BaselineResult {
  std::vector<int> train_clusters;
  std::vector<int> test_clusters;
  std::vector<double> inertia_history;
};

// PCA to `dims` components fit on train rows, k-means on the train projections, nearest-centroid
// assignment of the test projections.
BaselineResult baseline_pca_kmeans(const Mat& train, const Mat& test, int dims, int k, std::uint64_t seed);

}  // namespace sensorscan::eval
