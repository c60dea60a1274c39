#include "sensorscan/data.hpp"

#include "text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace sensorscan::data {

int SensorRun::state_at(std::int64_t t) const {
  if (fault_label == 0 || !fault_onset) return 0;
  return t >= *fault_onset ? fault_label : 0;
}

const char* to_string(FaultKind kind) {
  switch (kind) {
    case FaultKind::kStep: return "step";
    case FaultKind::kRandomVariation: return "random_variation";
    case FaultKind::kSlowDrift: return "slow_drift";
    case FaultKind::kSticking: return "sticking";
  }
  return "?";
}

FaultKind fault_kind_from_string(const std::string& name) {
  if (name == "step") return FaultKind::kStep;
  if (name == "random_variation") return FaultKind::kRandomVariation;
  if (name == "slow_drift") return FaultKind::kSlowDrift;
  if (name == "sticking") return FaultKind::kSticking;
  throw ValidationError("unknown fault kind '" + name + "'");
}

void SyntheticSpec::validate() const {
  if (channels < 1) throw ValidationError("synthetic spec: channels must be >= 1");
  if (run_length < 1) throw ValidationError("synthetic spec: run_length must be >= 1");
  if (onset < 0 || onset >= run_length)
    throw ValidationError("synthetic spec: onset must lie in [0, run_length)");
  if (noise_std < 0) throw ValidationError("synthetic spec: noise_std must be >= 0");
  if (!(ar_coeff > -1.0 && ar_coeff < 1.0))
    throw ValidationError("synthetic spec: ar_coeff must lie in (-1, 1)");
  for (std::size_t i = 0; i < faults.size(); ++i) {
    const auto& f = faults[i];
    const std::string where = "synthetic spec: fault " + std::to_string(i + 1);
    if (f.channels.empty() || static_cast<int>(f.channels.size()) > channels)
      throw ValidationError(where + " must affect between 1 and D channels");
    for (int c : f.channels)
      if (c < 0 || c >= channels) throw ValidationError(where + " has channel out of range");
    if (std::set<int>(f.channels.begin(), f.channels.end()).size() != f.channels.size())
      throw ValidationError(where + " lists a channel twice");
    if (f.kind == FaultKind::kSticking && (f.magnitude < 0 || f.magnitude > 1))
      throw ValidationError(where + ": sticking probability must lie in [0, 1]");
    if (f.kind == FaultKind::kRandomVariation && f.magnitude < 0)
      throw ValidationError(where + ": variation multiplier must be >= 0");
  }
}

// ---------------------------------------------------------------------------
// Run-CSV

namespace {

using detail::parse_number;
using detail::split_fields;
using detail::trim;

struct PendingRun {
  SensorRun run;
  std::vector<std::pair<std::int64_t, std::vector<Real>>> rows;
  std::size_t first_line = 0;
  std::optional<std::int64_t> onset;
  bool onset_seen = false;
};

}  // namespace

std::vector<SensorRun> parse_csv(const std::string& text, const std::string& source,
                                 double sampling_period_min) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;

  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  ++lineno;
  const auto header = split_fields(trim(line));
  static const char* kFixed[] = {"run_id", "t", "fault_label", "fault_onset"};
  if (header.size() < 5) throw ParseError(source, 1, "header needs run_id,t,fault_label,fault_onset and >= 1 sensor");
  for (int i = 0; i < 4; ++i)
    if (trim(header[i]) != kFixed[i])
      throw ParseError(source, 1, std::string("expected header column '") + kFixed[i] + "'");
  const std::size_t d = header.size() - 4;

  std::vector<PendingRun> pending;
  std::unordered_map<std::string, std::size_t> index;

  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto f = split_fields(body);
    if (f.size() < 4) throw ParseError(source, lineno, "row has fewer than 4 columns");
    const std::string run_id(trim(f[0]));
    const std::string run_desc = "run '" + run_id + "'";
    if (run_id.empty()) throw ParseError(source, lineno, "empty run_id");
    if (f.size() - 4 != d)
      throw ParseError(source, lineno,
                       run_desc + " has " + std::to_string(f.size() - 4) +
                           " sensor columns, expected " + std::to_string(d));

    std::int64_t t = 0;
    int label = 0;
    if (!parse_number(f[1], t) || t < 0)
      throw ParseError(source, lineno, run_desc + ": invalid timestamp '" + std::string(f[1]) + "'");
    if (!parse_number(f[2], label) || label < 0)
      throw ParseError(source, lineno, run_desc + ": invalid fault_label '" + std::string(f[2]) + "'");
    std::optional<std::int64_t> onset;
    if (!trim(f[3]).empty()) {
      std::int64_t o = 0;
      if (!parse_number(f[3], o) || o < 0)
        throw ParseError(source, lineno, run_desc + ": invalid fault_onset '" + std::string(f[3]) + "'");
      onset = o;
    }
    std::vector<Real> values(d);
    for (std::size_t j = 0; j < d; ++j) {
      double v = 0;
      if (!parse_number(f[4 + j], v) || !std::isfinite(v))
        throw ParseError(source, lineno,
                         run_desc + ": invalid value in column s" + std::to_string(j));
      values[j] = static_cast<Real>(v);
    }

    auto [it, inserted] = index.try_emplace(run_id, pending.size());
    if (inserted) {
      PendingRun p;
      p.run.run_id = run_id;
      p.run.fault_label = label;
      p.run.sampling_period_min = sampling_period_min;
      p.first_line = lineno;
      p.onset = onset;
      pending.push_back(std::move(p));
    }
    auto& p = pending[it->second];
    if (p.run.fault_label != label)
      throw ParseError(source, lineno, run_desc + ": fault_label changes within the run");
    if (p.onset != onset)
      throw ParseError(source, lineno, run_desc + ": fault_onset is not constant within the run");
    p.rows.emplace_back(t, std::move(values));
  }

  std::vector<SensorRun> runs;
  runs.reserve(pending.size());
  for (auto& p : pending) {
    const std::string run_desc = "run '" + p.run.run_id + "'";
    std::stable_sort(p.rows.begin(), p.rows.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < p.rows.size(); ++i)
      if (p.rows[i].first != static_cast<std::int64_t>(i))
        throw ParseError(source, p.first_line,
                         run_desc + ": timestamps must be 0..T-1 without gaps or duplicates");
    if (p.run.fault_label != 0) {
      if (!p.onset) throw ParseError(source, p.first_line, run_desc + ": faulty run without fault_onset");
      if (*p.onset >= static_cast<std::int64_t>(p.rows.size()))
        throw ParseError(source, p.first_line, run_desc + ": fault_onset beyond the end of the run");
      p.run.fault_onset = p.onset;
    } else if (p.onset) {
      throw ParseError(source, p.first_line, run_desc + ": normal run must leave fault_onset empty");
    }
    p.run.values.resize(static_cast<Eigen::Index>(p.rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < p.rows.size(); ++i)
      for (std::size_t j = 0; j < d; ++j)
        p.run.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p.rows[i].second[j];
    runs.push_back(std::move(p.run));
  }
  return runs;
}

std::vector<SensorRun> ingest_csv(const std::string& path, double sampling_period_min) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path, sampling_period_min);
}

std::string format_csv(const std::vector<SensorRun>& runs) {
  if (runs.empty()) throw ValidationError("write_csv: no runs");
  const auto d = runs.front().channels();
  std::string out = "run_id,t,fault_label,fault_onset";
  for (Eigen::Index j = 0; j < d; ++j) out += ",s" + std::to_string(j);
  out += '\n';
  char buf[32];
  for (const auto& run : runs) {
    if (run.channels() != d) throw ValidationError("write_csv: runs disagree on channel count");
    const std::string onset = run.fault_onset ? std::to_string(*run.fault_onset) : "";
    for (Eigen::Index t = 0; t < run.length(); ++t) {
      out += run.run_id;
      out += ',' + std::to_string(t) + ',' + std::to_string(run.fault_label) + ',' + onset;
      for (Eigen::Index j = 0; j < d; ++j) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), static_cast<double>(run.values(t, j)));
        out += ',';
        out.append(buf, ptr);
      }
      out += '\n';
    }
  }
  return out;
}

void write_csv(const std::vector<SensorRun>& runs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << format_csv(runs);
  if (!out) throw Error("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Synthetic process

std::vector<SensorRun> synth_generate(const SyntheticSpec& spec, int n_runs_per_state) {
  spec.validate();
  if (n_runs_per_state < 0) throw ValidationError("n_runs_per_state must be >= 0");

  const int d = spec.channels;
  Rng base_rng(mix_seed(spec.seed, 0xBA5E));
  std::uniform_real_distribution<double> base_dist(-spec.baseline_spread, spec.baseline_spread);
  std::vector<double> baseline(d);
  for (auto& b : baseline) b = spec.baseline_spread > 0 ? base_dist(base_rng) : 0.0;

  const double innov = spec.noise_std * std::sqrt(1.0 - spec.ar_coeff * spec.ar_coeff);
  std::vector<SensorRun> runs;
  runs.reserve(static_cast<std::size_t>(spec.n_states() * n_runs_per_state));

  for (int state = 0; state < spec.n_states(); ++state) {
    const FaultDescriptor* fault = state == 0 ? nullptr : &spec.faults[state - 1];
    std::vector<char> affected(d, 0);
    if (fault)
      for (int c : fault->channels) affected[c] = 1;

    for (int r = 0; r < n_runs_per_state; ++r) {
      Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(state) + 1, static_cast<std::uint64_t>(r)));
      std::normal_distribution<double> normal(0.0, 1.0);
      std::uniform_real_distribution<double> uniform(0.0, 1.0);

      SensorRun run;
      run.run_id = "s" + std::to_string(state) + "_r" + std::to_string(r);
      run.fault_label = state;
      run.sampling_period_min = spec.sampling_period_min;
      if (fault) run.fault_onset = spec.onset;
      run.values.resize(spec.run_length, d);

      std::vector<double> dev(d);
      for (auto& x : dev) x = spec.noise_std * normal(rng);  // stationary start
      std::vector<double> frozen(d, 0.0);

      for (int t = 0; t < spec.run_length; ++t) {
        const bool faulty = fault && t >= spec.onset;
        for (int c = 0; c < d; ++c) {
          double scale = innov;
          if (faulty && affected[c] && fault->kind == FaultKind::kRandomVariation) scale *= fault->magnitude;
          const double e = normal(rng);
          if (t > 0) dev[c] = spec.ar_coeff * dev[c] + scale * e;
          double v = baseline[c] + dev[c];
          if (faulty && affected[c]) {
            switch (fault->kind) {
              case FaultKind::kStep: v += fault->magnitude; break;
              case FaultKind::kSlowDrift: v += fault->magnitude * static_cast<double>(t - spec.onset + 1); break;
              case FaultKind::kSticking: {
                if (t == spec.onset) frozen[c] = v;
                if (uniform(rng) < fault->magnitude) v = frozen[c];
                break;
              }
              case FaultKind::kRandomVariation: break;
            }
          }
          run.values(t, c) = static_cast<Real>(v);
        }
      }
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

std::vector<SensorRun> select_channels(const std::vector<SensorRun>& runs,
                                       const std::vector<int>& allowlist) {
  if (allowlist.empty()) return runs;
  std::vector<SensorRun> out;
  out.reserve(runs.size());
  for (const auto& run : runs) {
    SensorRun r = run;
    r.values.resize(run.length(), static_cast<Eigen::Index>(allowlist.size()));
    for (std::size_t j = 0; j < allowlist.size(); ++j) {
      const int c = allowlist[j];
      if (c < 0 || c >= run.channels())
        throw ValidationError("channel allowlist entry " + std::to_string(c) + " out of range for run '" +
                              run.run_id + "'");
      r.values.col(static_cast<Eigen::Index>(j)) = run.values.col(c);
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

NormalizationStats compute_normalization(const std::vector<SensorRun>& runs) {
  if (runs.empty()) throw ValidationError("compute_normalization: no runs");
  const auto d = runs.front().channels();
  std::vector<double> sum(d, 0.0);
  double n = 0;
  for (const auto& run : runs) {
    if (run.channels() != d) throw ValidationError("compute_normalization: runs disagree on channel count");
    for (Eigen::Index t = 0; t < run.length(); ++t)
      for (Eigen::Index j = 0; j < d; ++j) sum[j] += run.values(t, j);
    n += static_cast<double>(run.length());
  }
  if (n == 0) throw ValidationError("compute_normalization: runs are empty");

  NormalizationStats stats;
  stats.mean.resize(d);
  stats.std.resize(d);
  std::vector<double> sq(d, 0.0);
  for (Eigen::Index j = 0; j < d; ++j) stats.mean[j] = static_cast<Real>(sum[j] / n);
  for (const auto& run : runs)
    for (Eigen::Index t = 0; t < run.length(); ++t)
      for (Eigen::Index j = 0; j < d; ++j) {
        const double dev = run.values(t, j) - static_cast<double>(stats.mean[j]);
        sq[j] += dev * dev;
      }
  for (Eigen::Index j = 0; j < d; ++j) {
    const double sd = std::sqrt(sq[j] / n);
    if (sd <= 1e-12 * std::max(1.0, std::abs(static_cast<double>(stats.mean[j])))) {
      stats.std[j] = 1;
      stats.clamped_channels.push_back(static_cast<int>(j));
      log_warning("channel " + std::to_string(j) + " has zero variance; std clamped to 1");
    } else {
      stats.std[j] = static_cast<Real>(sd);
    }
  }
  return stats;
}

Mat normalize(const Mat& x, const NormalizationStats& stats) {
  if (static_cast<std::size_t>(x.cols()) != stats.mean.size())
    throw ValidationError("normalize: channel count mismatch");
  Mat out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    out.col(j) = (x.col(j).array() - stats.mean[j]) / stats.std[j];
  return out;
}

Mat denormalize(const Mat& x, const NormalizationStats& stats) {
  if (static_cast<std::size_t>(x.cols()) != stats.mean.size())
    throw ValidationError("denormalize: channel count mismatch");
  Mat out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    out.col(j) = x.col(j).array() * stats.std[j] + stats.mean[j];
  return out;
}

std::vector<SensorRun> apply_normalization(std::vector<SensorRun> runs, const NormalizationStats& stats) {
  for (auto& run : runs) run.values = normalize(run.values, stats);
  return runs;
}

// ---------------------------------------------------------------------------
// Windows, unbalancing, splitting

std::int64_t window_count(std::int64_t run_length, int window, int step) {
  if (window < 1 || step < 1) throw ValidationError("window and step must be >= 1");
  if (run_length < window) return 0;
  return (run_length - window) / step + 1;
}

std::vector<WindowSample> make_windows(const std::vector<SensorRun>& runs, int window, int step) {
  std::vector<WindowSample> out;
  std::size_t total = 0;
  for (const auto& run : runs) total += static_cast<std::size_t>(window_count(run.length(), window, step));
  out.reserve(total);
  for (const auto& run : runs) {
    const auto n = window_count(run.length(), window, step);
    for (std::int64_t k = 0; k < n; ++k) {
      WindowSample w;
      w.run_id = run.run_id;
      w.end_index = k * step + window - 1;
      w.values = run.values.middleRows(w.end_index - window + 1, window);
      w.label = run.state_at(w.end_index);
      out.push_back(std::move(w));
    }
  }
  return out;
}

namespace {

std::map<int, std::vector<std::size_t>> group_by_state(const std::vector<SensorRun>& runs) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < runs.size(); ++i) groups[runs[i].fault_label].push_back(i);
  return groups;
}

}  // namespace

std::vector<SensorRun> unbalance_train(const std::vector<SensorRun>& runs, int normal_count,
                                       int per_fault_count, std::uint64_t seed) {
  std::vector<std::size_t> keep;
  for (const auto& [state, idx] : group_by_state(runs)) {
    const int want = state == 0 ? normal_count : per_fault_count;
    if (want < 0 || static_cast<std::size_t>(want) > idx.size())
      throw ValidationError("unbalance_train: state " + std::to_string(state) + " has " +
                            std::to_string(idx.size()) + " runs, " + std::to_string(want) + " requested");
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(state)));
    std::vector<std::size_t> shuffled = idx;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    keep.insert(keep.end(), shuffled.begin(), shuffled.begin() + want);
  }
  std::sort(keep.begin(), keep.end());
  std::vector<SensorRun> out;
  out.reserve(keep.size());
  for (auto i : keep) out.push_back(runs[i]);
  return out;
}

Split split_runs(const std::vector<SensorRun>& runs, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError("split_runs: train_fraction must lie in (0, 1)");
  std::vector<char> is_train(runs.size(), 0);
  for (const auto& [state, idx] : group_by_state(runs)) {
    Rng rng(mix_seed(seed, 0x5B117, static_cast<std::uint64_t>(state)));
    std::vector<std::size_t> shuffled = idx;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < n_train; ++k) is_train[shuffled[k]] = 1;
  }
  Split split;
  for (std::size_t i = 0; i < runs.size(); ++i) (is_train[i] ? split.train : split.test).push_back(runs[i]);
  return split;
}

std::vector<RunBoundary> run_boundaries(const std::vector<WindowSample>& windows) {
  std::vector<RunBoundary> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (i == 0 || windows[i].run_id != windows[i - 1].run_id) {
      if (!seen.insert(windows[i].run_id).second)
        throw ValidationError("run_boundaries: windows of run '" + windows[i].run_id + "' are not contiguous");
      if (!out.empty()) out.back().end = i;
      out.push_back({i, windows.size()});
    } else if (windows[i].end_index <= windows[i - 1].end_index) {
      throw ValidationError("run_boundaries: windows of run '" + windows[i].run_id + "' are not time ordered");
    }
  }
  return out;
}

std::vector<int> labels_of(const std::vector<WindowSample>& windows) {
  std::vector<int> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(w.label);
  return out;
}

Mat flatten_windows(const std::vector<WindowSample>& windows) {
  if (windows.empty()) return Mat(0, 0);
  const auto n = windows.front().values.size();
  Mat out(static_cast<Eigen::Index>(windows.size()), n);
  for (std::size_t i = 0; i < windows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const RowVec>(windows[i].values.data(), n);
  return out;
}

}  // namespace sensorscan::data
