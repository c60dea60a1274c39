#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sensorscan/config.hpp"
#include "sensorscan/eval.hpp"
#include "sensorscan/scan.hpp"
#include "sensorscan/ssl.hpp"
#include "sensorscan/supervise.hpp"

// End-to-end pipeline: in-memory stage functions plus the file-backed CLI commands.
namespace sensorscan::pipeline {

using config::PipelineConfig;

// Runs as every stage after the dataset sees them: split, optionally unbalanced, normalized
// with train statistics and windowed.
struct PreparedData {
  std::vector<data::SensorRun> train_runs;
  std::vector<data::SensorRun> test_runs;
  data::NormalizationStats stats;
  std::vector<data::WindowSample> train_windows;  // stride data.step
  std::vector<data::WindowSample> test_windows;   // stride eval.step
  std::vector<data::RunBoundary> test_bounds;
  std::vector<int> states;  // sorted state ids present in the train split
};

std::vector<data::SensorRun> generate_runs(const PipelineConfig& cfg);
// Keeps runs whose state is normal or listed in `faults`.
std::vector<data::SensorRun> filter_states(const std::vector<data::SensorRun>& runs, const std::vector<int>& faults);
PreparedData prepare_data(const PipelineConfig& cfg, const std::vector<data::SensorRun>& runs);

// Channel count after the allowlist; fixes cfg.model.channels for ingested data.
void bind_data_shape(PipelineConfig& cfg, const std::vector<data::SensorRun>& runs);

model::FeatureExtractor run_pretrain(const PipelineConfig& cfg, const PreparedData& data,
                                     const ssl::EpochCallback& on_epoch = {});
scan::NeighborIndex run_mine(const PipelineConfig& cfg, const Mat& train_embeddings);

struct ClusterModel {
  model::FeatureExtractor extractor;
  model::ClusterHead head;
  std::vector<scan::ScanEpochStats> history;
};
ClusterModel run_cluster(const PipelineConfig& cfg, model::FeatureExtractor pretrained, const PreparedData& data,
                         const scan::NeighborIndex& neighbors, const Mat& train_embeddings);
supervise::LabelMap run_match(ClusterModel& model, const PreparedData& data);

supervise::FinetuneResult run_finetune(const PipelineConfig& cfg, model::FeatureExtractor pretrained,
                                       const PreparedData& data);

// Builds the FDD report for test predictions; `test_clusters` feeds the clustering scores.
eval::FddReport score(const PipelineConfig& cfg, const PreparedData& data, const std::vector<int>& predicted,
                      const std::vector<int>& test_clusters, const std::string& name);

eval::FddReport evaluate_unsupervised(const PipelineConfig& cfg, ClusterModel& model, const supervise::LabelMap& map,
                                      const PreparedData& data);
eval::FddReport evaluate_finetuned(const PipelineConfig& cfg, supervise::Classifier& classifier,
                                   const PreparedData& data);
eval::FddReport evaluate_baseline(const PipelineConfig& cfg, const PreparedData& data);

struct Outcome {
  eval::FddReport unsupervised;
  std::optional<eval::FddReport> finetuned;
  std::optional<eval::FddReport> baseline;
};

struct RunOptions {
  bool finetune = false;
  bool baseline = false;
};

// Every stage in memory, from raw runs to reports.
Outcome run_all(const PipelineConfig& cfg, const std::vector<data::SensorRun>& runs, const RunOptions& options = {});

// File-backed stages. Each reads its inputs from cfg.workdir, checks their config fingerprints and
// writes its own artifacts. Missing or stale inputs raise MissingArtifactError.
struct CommandOptions {
  bool baseline = false;
  int seeds = 1;
  std::optional<std::string> axis;
};

void cmd_synth(const PipelineConfig& cfg);
void cmd_ingest(const PipelineConfig& cfg);
void cmd_pretrain(const PipelineConfig& cfg);
void cmd_mine(const PipelineConfig& cfg);
void cmd_cluster(const PipelineConfig& cfg);
void cmd_match(const PipelineConfig& cfg);
void cmd_finetune(const PipelineConfig& cfg);
void cmd_evaluate(const PipelineConfig& cfg, const CommandOptions& options);
void cmd_ablate(const PipelineConfig& cfg, const CommandOptions& options);
void cmd_report(const PipelineConfig& cfg);

// Artifact file names inside the workdir.
namespace files {
inline constexpr const char* kRuns = "runs.csv";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kPretrain = "pretrain.ckpt";
inline constexpr const char* kEmbeddings = "embeddings.csv";
inline constexpr const char* kNeighbors = "neighbors.csv";
inline constexpr const char* kCluster = "cluster.ckpt";
inline constexpr const char* kLabelMap = "labelmap.csv";
inline constexpr const char* kFinetune = "finetune.ckpt";
}  // namespace files

}  // namespace sensorscan::pipeline
