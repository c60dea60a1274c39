#include "sensorscan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "sensorscan/kmeans.hpp"
#include "sensorscan/pca.hpp"

namespace sensorscan::eval {

ContingencyTable contingency(const std::vector<int>& y, const std::vector<int>& c) {
  if (y.empty()) throw ValidationError("metrics: empty input");
  if (y.size() != c.size()) throw ValidationError("metrics: label and cluster vectors differ in length");
  ContingencyTable t;
  t.labels = y;
  t.clusters = c;
  for (auto* v : {&t.labels, &t.clusters}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  std::map<int, std::size_t> li, ci;
  for (std::size_t i = 0; i < t.labels.size(); ++i) li[t.labels[i]] = i;
  for (std::size_t i = 0; i < t.clusters.size(); ++i) ci[t.clusters[i]] = i;
  t.counts.assign(t.labels.size(), std::vector<std::int64_t>(t.clusters.size(), 0));
  for (std::size_t i = 0; i < y.size(); ++i) ++t.counts[li[y[i]]][ci[c[i]]];
  t.row_sums.assign(t.labels.size(), 0);
  t.col_sums.assign(t.clusters.size(), 0);
  for (std::size_t q = 0; q < t.labels.size(); ++q)
    for (std::size_t k = 0; k < t.clusters.size(); ++k) {
      t.row_sums[q] += t.counts[q][k];
      t.col_sums[k] += t.counts[q][k];
    }
  t.total = static_cast<std::int64_t>(y.size());
  return t;
}

// Shortest augmenting path with potentials, minimizing -weights.
std::vector<int> hungarian_max(const std::vector<std::vector<double>>& weights) {
  const std::size_t n = weights.size();
  for (const auto& row : weights)
    if (row.size() != n) throw ValidationError("hungarian: matrix must be square");
  if (n == 0) return {};
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -weights[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> result(n);
  for (std::size_t j = 1; j <= n; ++j) result[p[j] - 1] = static_cast<int>(j - 1);
  return result;
}

double acc(const std::vector<int>& y, const std::vector<int>& c) {
  const auto t = contingency(y, c);
  const std::size_t n = std::max(t.labels.size(), t.clusters.size());
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
  for (std::size_t q = 0; q < t.labels.size(); ++q)
    for (std::size_t k = 0; k < t.clusters.size(); ++k) w[q][k] = static_cast<double>(t.counts[q][k]);
  const auto match = hungarian_max(w);
  std::int64_t hit = 0;
  for (std::size_t q = 0; q < n; ++q) hit += static_cast<std::int64_t>(w[q][static_cast<std::size_t>(match[q])]);
  return static_cast<double>(hit) / static_cast<double>(t.total);
}

namespace {

double entropy(const std::vector<std::int64_t>& sums, double n) {
  double h = 0.0;
  for (auto s : sums)
    if (s > 0) {
      const double p = static_cast<double>(s) / n;
      h -= p * std::log(p);
    }
  return h;
}

double comb2(std::int64_t v) { return 0.5 * static_cast<double>(v) * static_cast<double>(v - 1); }

}  // namespace

double nmi(const std::vector<int>& y, const std::vector<int>& c) {
  const auto t = contingency(y, c);
  const auto n = static_cast<double>(t.total);
  const double hy = entropy(t.row_sums, n);
  const double hc = entropy(t.col_sums, n);
  if (t.labels.size() == 1 && t.clusters.size() == 1) return 1.0;
  if (t.labels.size() == 1 || t.clusters.size() == 1) return 0.0;
  double mi = 0.0;
  for (std::size_t q = 0; q < t.labels.size(); ++q)
    for (std::size_t k = 0; k < t.clusters.size(); ++k) {
      const auto nij = t.counts[q][k];
      if (nij == 0) continue;
      const double v = static_cast<double>(nij);
      mi += v / n * std::log(v * n / (static_cast<double>(t.row_sums[q]) * static_cast<double>(t.col_sums[k])));
    }
  const double out = 2.0 * mi / (hy + hc);
  return std::clamp(out, 0.0, 1.0);
}

double ari(const std::vector<int>& y, const std::vector<int>& c) {
  const auto t = contingency(y, c);
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& row : t.counts)
    for (auto v : row) sum_ij += comb2(v);
  for (auto v : t.row_sums) sum_a += comb2(v);
  for (auto v : t.col_sums) sum_b += comb2(v);
  const double total = comb2(t.total);
  if (total == 0) return 1.0;
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return sum_ij == expected ? 1.0 : 0.0;
  return (sum_ij - expected) / (max_index - expected);
}

double rand_index(const std::vector<int>& y, const std::vector<int>& c) {
  const auto t = contingency(y, c);
  const double total = comb2(t.total);
  if (total == 0) return 1.0;
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& row : t.counts)
    for (auto v : row) sum_ij += comb2(v);
  for (auto v : t.row_sums) sum_a += comb2(v);
  for (auto v : t.col_sums) sum_b += comb2(v);
  // agreeing pairs = same-same + different-different
  return (total + 2.0 * sum_ij - sum_a - sum_b) / total;
}

// ---------------------------------------------------------------------------

FddReport fdd_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                      const std::vector<data::RunBoundary>& runs, const FddOptions& options) {
  if (truth.size() != predicted.size()) throw ValidationError("fdd_metrics: truth and predictions differ in length");
  if (truth.empty()) throw ValidationError("fdd_metrics: empty input");
  if (options.step < 1) throw ValidationError("fdd_metrics: step must be >= 1");
  FddReport r;
  std::vector<int> faults = options.fault_states;
  if (faults.empty()) {
    for (int q : truth)
      if (q != 0) faults.push_back(q);
    std::sort(faults.begin(), faults.end());
    faults.erase(std::unique(faults.begin(), faults.end()), faults.end());
  }
  std::map<int, std::int64_t> type_total, type_hit, false_alarm;
  std::int64_t detected = 0, diagnosed = 0, normal_alarm = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int q = truth[i], p = predicted[i];
    if (q == 0) {
      ++r.normal_samples;
      if (p != 0) {
        ++normal_alarm;
        ++false_alarm[p];
      }
    } else {
      ++r.faulty_samples;
      ++type_total[q];
      if (p != 0) ++detected;
      if (p == q) {
        ++diagnosed;
        ++type_hit[q];
      }
    }
  }
  const auto ratio = [](std::int64_t a, std::int64_t b) {
    return b > 0 ? static_cast<double>(a) / static_cast<double>(b) : 0.0;
  };
  for (int q : faults) {
    FaultRates fr;
    fr.state = q;
    fr.samples = type_total[q];
    fr.tpr = ratio(type_hit[q], type_total[q]);
    fr.fpr = ratio(false_alarm[q], r.normal_samples);
    r.per_fault.push_back(fr);
  }
  r.detection_tpr = ratio(detected, r.faulty_samples);
  r.detection_fpr = ratio(normal_alarm, r.normal_samples);
  if (detected > 0) r.cdr = ratio(diagnosed, detected);

  double delay_sum = 0.0;
  int delay_runs = 0;
  for (const auto& run : runs) {
    if (run.end > truth.size() || run.begin > run.end) throw ValidationError("fdd_metrics: run boundary out of range");
    std::size_t first_true = run.end;
    for (std::size_t i = run.begin; i < run.end; ++i)
      if (truth[i] != 0) {
        first_true = i;
        break;
      }
    if (first_true == run.end) continue;
    for (std::size_t i = first_true; i < run.end; ++i)
      if (predicted[i] != 0) {
        delay_sum += static_cast<double>(i - first_true);
        ++delay_runs;
        break;
      }
  }
  if (delay_runs > 0) {
    r.add_samples = delay_sum / delay_runs * options.step;
    r.add_minutes = *r.add_samples * options.sampling_period_min;
  }
  return r;
}

const FaultRates* find_fault(const FddReport& report, int state) {
  for (const auto& f : report.per_fault)
    if (f.state == state) return &f;
  return nullptr;
}

BaselineResult baseline_pca_kmeans(const Mat& train, const Mat& test, int dims, int k, std::uint64_t seed) {
  if (train.cols() != test.cols()) throw ValidationError("baseline: train and test widths differ");
  if (dims < 1 || dims > std::min<Eigen::Index>(train.rows(), train.cols()))
    throw ValidationError("baseline: dims=" + std::to_string(dims) + " exceeds min(N, L*D)=" +
                          std::to_string(std::min<Eigen::Index>(train.rows(), train.cols())));
  const auto pca = cluster::fit_pca(train, dims);
  cluster::KMeansOptions opts;
  opts.k = k;
  opts.seed = seed;
  const auto km = cluster::kmeans(pca.transform(train), opts);
  BaselineResult out;
  out.train_clusters = km.labels;
  out.test_clusters = cluster::assign_nearest(pca.transform(test), km.centroids);
  out.inertia_history = km.inertia_history;
  return out;
}

}  // namespace sensorscan::eval
