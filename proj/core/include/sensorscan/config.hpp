#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sensorscan/data.hpp"
#include "sensorscan/model.hpp"
#include "sensorscan/scan.hpp"
#include "sensorscan/ssl.hpp"
#include "sensorscan/supervise.hpp"

// Pipeline configuration: JSON with every key optional, unknown keys rejected.
namespace sensorscan::config {

struct DataConfig {
  // Either a Run-CSV to ingest or the built-in generator.
  std::optional<std::string> runs_csv;
  data::SyntheticSpec synthetic;
  int runs_per_state = 12;
  int window = 100;
  int step = 1;  // training window stride
  std::vector<int> channels;  // allowlist; empty keeps all
  bool unbalance = false;
  int unbalance_normal = 500;
  int unbalance_per_fault = 5;
  double train_fraction = 0.8;
  double sampling_period_min = 3.0;
};

struct EvalConfig {
  int step = 1;  // test window stride
  int baseline_dims = 25;
  supervise::UnmatchedPolicy unmatched = supervise::UnmatchedPolicy::kError;
};

struct AblateConfig {
  std::string axis = "ssl-tasks";
  std::vector<int> n_clusters;                   // n-clusters axis values
  std::vector<std::vector<int>> fault_subsets;   // fault-subset axis: states kept besides normal
};

struct PipelineConfig {
  DataConfig data;
  model::ModelConfig model;  // channels and window are filled from the data section
  ssl::PretrainConfig pretrain;
  scan::ScanConfig scan;
  supervise::FinetuneConfig finetune;
  EvalConfig eval;
  AblateConfig ablate;
  std::uint64_t seed = 0;
  std::string workdir = "artifacts";

  // Copies the global seed into the stage configs (salted) and the data shape into the model.
  void propagate();
  void validate() const;
};

// The built-in process: one fault per family (step, random variation, slow drift, sticking).
std::vector<data::FaultDescriptor> default_faults();

PipelineConfig default_config();
PipelineConfig parse_config(const std::string& json_text, const std::string& source = "<config>");
PipelineConfig load_config(const std::string& path);

// Canonical JSON of the full configuration (after propagation).
std::string to_json(const PipelineConfig& cfg);

// JSON schema of the config file, generated from the defaults.
std::string config_schema();

enum class Stage { kDataset, kPretrain, kMine, kCluster, kMatch, kFinetune, kEvaluate };
const char* stage_name(Stage stage);

// FNV-1a over the config sections the stage output depends on.
std::uint64_t stage_fingerprint(const PipelineConfig& cfg, Stage stage);

}  // namespace sensorscan::config
