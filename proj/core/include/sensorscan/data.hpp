#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sensorscan/common.hpp"

namespace sensorscan::data {

// One contiguous plant or simulation trace.
struct SensorRun {
  std::string run_id;
  int fault_label = 0;  // 0 is the normal state
  std::optional<std::int64_t> fault_onset;
  Mat values;  // [T, D]
  double sampling_period_min = 3.0;

  Eigen::Index length() const { return values.rows(); }
  Eigen::Index channels() const { return values.cols(); }
  // Process state at timestamp t.
  int state_at(std::int64_t t) const;
};

// A fixed-length slice of a run, labeled by the state at its last timestamp.
struct WindowSample {
  std::string run_id;
  std::int64_t end_index = 0;
  Mat values;  // [L, D]
  int label = 0;
};

struct NormalizationStats {
  std::vector<Real> mean;
  std::vector<Real> std;
  std::vector<int> clamped_channels;  // channels whose variance was zero
};

enum class FaultKind { kStep, kRandomVariation, kSlowDrift, kSticking };

const char* to_string(FaultKind kind);
FaultKind fault_kind_from_string(const std::string& name);

struct FaultDescriptor {
  FaultKind kind = FaultKind::kStep;
  std::vector<int> channels;
  double magnitude = 1.0;
};

// Blueprint of the built-in synthetic process. State q >= 1 uses faults[q - 1].
struct SyntheticSpec {
  int channels = 8;
  int run_length = 300;
  int onset = 100;
  std::vector<FaultDescriptor> faults;
  double noise_std = 1.0;   // stationary std of each channel's AR(1) process
  double ar_coeff = 0.5;    // AR(1) coefficient; 0 gives white noise
  double baseline_spread = 2.0;  // channel baselines drawn from U(-spread, spread)
  double sampling_period_min = 3.0;
  std::uint64_t seed = 0;

  int n_states() const { return static_cast<int>(faults.size()) + 1; }
  void validate() const;
};

// Reads the Run-CSV interchange format: run_id,t,fault_label,fault_onset,s0..s{D-1}.
std::vector<SensorRun> ingest_csv(const std::string& path, double sampling_period_min = 3.0);
std::vector<SensorRun> parse_csv(const std::string& text, const std::string& source_name,
                                 double sampling_period_min = 3.0);
void write_csv(const std::vector<SensorRun>& runs, const std::string& path);
std::string format_csv(const std::vector<SensorRun>& runs);

std::vector<SensorRun> synth_generate(const SyntheticSpec& spec, int n_runs_per_state);

// Keeps only the listed channels, in the listed order.
std::vector<SensorRun> select_channels(const std::vector<SensorRun>& runs,
                                       const std::vector<int>& allowlist);

NormalizationStats compute_normalization(const std::vector<SensorRun>& runs);
std::vector<SensorRun> apply_normalization(std::vector<SensorRun> runs,
                                           const NormalizationStats& stats);
Mat normalize(const Mat& x, const NormalizationStats& stats);
Mat denormalize(const Mat& x, const NormalizationStats& stats);

std::vector<WindowSample> make_windows(const std::vector<SensorRun>& runs, int window, int step);
// Number of windows make_windows produces for one run.
std::int64_t window_count(std::int64_t run_length, int window, int step);

std::vector<SensorRun> unbalance_train(const std::vector<SensorRun>& runs, int normal_count,
                                       int per_fault_count, std::uint64_t seed);

struct Split {
  std::vector<SensorRun> train;
  std::vector<SensorRun> test;
};
Split split_runs(const std::vector<SensorRun>& runs, double train_fraction, std::uint64_t seed);

// Half-open window index range [begin, end) covering one run, in timestamp order.
struct RunBoundary {
  std::size_t begin = 0;
  std::size_t end = 0;
};
// Requires the windows of each run to be contiguous, as make_windows emits them.
std::vector<RunBoundary> run_boundaries(const std::vector<WindowSample>& windows);

std::vector<int> labels_of(const std::vector<WindowSample>& windows);
// Flattens each window into one row of length L*D.
Mat flatten_windows(const std::vector<WindowSample>& windows);

}  // namespace sensorscan::data
