#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sensorscan/model.hpp"

// Cluster-to-state label matching, fine-tuning on a few labeled runs, and prediction.
namespace sensorscan::supervise {

// State 0 is the normal state; every other id is a fault.
inline constexpr int kNormalState = 0;

struct LabelMap {
  // counts[l][q] = training samples of state q assigned to cluster l.
  std::vector<std::vector<std::int64_t>> counts;
  std::vector<std::optional<int>> matched;

  int n_clusters() const { return static_cast<int>(matched.size()); }
  bool is_matched(int cluster) const;
  // Throws sensorscan::Error for an unmatched or out-of-range cluster.
  int state_of(int cluster) const;
};

// Per cluster l: argmax_q alpha_q * n_q with alpha = 1 for faults and Q_l + 1 for normal, Q_l the
// number of states present in the cluster. Ties go to normal, then to the lowest state id.
// Clusters without samples stay unmatched.
LabelMap match_counts(std::vector<std::vector<std::int64_t>> counts);
LabelMap match_labels(const std::vector<int>& clusters, const std::vector<int>& labels, int n_clusters);

enum class UnmatchedPolicy {
  kError,   // throw, naming the cluster
  kNormal,  // predict the normal state and log a warning
};

std::vector<int> apply_label_map(const LabelMap& map, const std::vector<int>& clusters,
                                 UnmatchedPolicy policy = UnmatchedPolicy::kError);

// LM(argmax C(F(x))) for every window.
std::vector<int> predict_unsupervised(const std::vector<data::WindowSample>& windows,
                                      model::FeatureExtractor& extractor, model::ClusterHead& head,
                                      const LabelMap& map, UnmatchedPolicy policy = UnmatchedPolicy::kError);

// CSV: cluster,matched_state,contingency_json. Unmatched clusters leave matched_state empty.
void write_labelmap_csv(const LabelMap& map, const std::string& path);
LabelMap read_labelmap_csv(const std::string& path);

struct FinetuneConfig {
  int runs_per_state = 1;
  int epochs = 10;
  double lr = 1e-4;
  double weight_decay = 0.0;
  double label_smoothing = 0.1;
  int batch = 128;
  std::uint64_t seed = 0;

  void validate() const;
};

// Picks `per_state` runs of each state present (uniformly, seeded); returns their run ids
// in input order. Throws when a state has fewer runs.
std::vector<std::string> select_labeled_runs(const std::vector<data::SensorRun>& runs, int per_state,
                                             std::uint64_t seed);

// (1 - eps) * one_hot + eps / Q for each row; labels are class indices.
Mat smoothed_targets(const std::vector<int>& classes, int n_classes, double eps);

struct CrossEntropy {
  double value = 0.0;
  Mat grad;  // d loss / d logits
};

// Mean over rows of -sum_j t_ij log softmax(logits)_ij.
CrossEntropy smoothed_cross_entropy(const Mat& logits, const std::vector<int>& classes, double eps);

// Feature extractor plus a fresh classification head; outputs index into `states`.
struct Classifier {
  model::FeatureExtractor extractor;
  model::ClusterHead head;
  std::vector<int> states;  // sorted state ids

  nn::ParamRefs parameters();
  int class_of(int state) const;
};

struct FinetuneEpoch {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
};

struct FinetuneResult {
  Classifier classifier;
  std::vector<FinetuneEpoch> history;
};

// Attaches a fresh head (F -> F -> Q) and trains head and extractor end to end on the labeled
// windows with label-smoothed cross-entropy.
FinetuneResult finetune(model::FeatureExtractor pretrained, const std::vector<data::WindowSample>& labeled,
                        const FinetuneConfig& cfg,
                        const std::function<void(const FinetuneEpoch&)>& on_epoch = {});

Mat predict_proba(Classifier& classifier, const std::vector<data::WindowSample>& windows);
std::vector<int> predict_supervised(Classifier& classifier, const std::vector<data::WindowSample>& windows);

}  // namespace sensorscan::supervise
