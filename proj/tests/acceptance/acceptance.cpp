// Acceptance suite: one PASS/FAIL line per criterion, thresholds fixed below.
//
// Usage: acceptance [criterion ...]   (no arguments runs all of them)

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sensorscan/augment.hpp"
#include "sensorscan/config.hpp"
#include "sensorscan/eval.hpp"
#include "sensorscan/pipeline.hpp"
#include "sensorscan/ssl.hpp"
#include "sensorscan/supervise.hpp"
#include "testkit.hpp"

using namespace sensorscan;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr double kGradTol = 1e-5;
constexpr int kGradSeeds = 20;
constexpr double kGradSeconds = 60.0;
constexpr double kNtxentTol = 1e-10;
constexpr double kMaskFracTol = 0.01;
constexpr double kMaskLenTol = 0.2;
constexpr double kAriChance = 0.02;
constexpr double kDeskAcc = 0.8;
constexpr double kDeskDetTpr = 0.85;
constexpr double kDeskDetFpr = 0.05;
constexpr double kDeskFaultTpr = 0.7;
constexpr double kDeskMinutes = 15.0;
constexpr double kOverclusterMaxDrop = 0.1;
constexpr double kUnderclusterMinDrop = 0.1;
constexpr double kFinetuneGain = 0.1;
constexpr double kFinetuneFpr = 0.05;
constexpr int kFinetuneSeeds = 5;
constexpr int kFinetuneMinSeeds = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string source(const std::string& rel) { return std::string(SENSORSCAN_SOURCE_DIR) + "/" + rel; }

config::PipelineConfig load(const std::string& rel) {
  auto cfg = config::load_config(source(rel));
  cfg.workdir = (fs::temp_directory_path() / "sensorscan_acceptance").string();
  return cfg;
}

// ---------------------------------------------------------------------------

Verdict gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_case;
  for (const auto& c : testkit::grad_cases()) {
    const auto r = testkit::worst_over_seeds(c, kGradSeeds);
    if (r.max_rel_error > worst) worst = r.max_rel_error, worst_case = c.name + " (" + r.worst_param + ")";
  }
  const double s = seconds_since(t0);
  return {worst < kGradTol && s < kGradSeconds,
          std::to_string(testkit::grad_cases().size()) + " families x " + std::to_string(kGradSeeds) +
              " seeds, worst rel " + fmt(worst * 1e6, 2) + "e-6 in " + worst_case + ", " + fmt(s, 1) + " s"};
}

Verdict ntxent() {
  Rng rng(mix_seed(2, 0xC0));
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> tau(0.05, 2.0);
  double worst = 0.0;
  for (int b = 1; b <= 8; ++b)
    for (int t = 0; t < 50; ++t) {
      Mat z(2 * b, 1 + t % 8);
      for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n(rng);
      const double temp = tau(rng);
      worst = std::max(worst, std::abs(ssl::loss_ntxent(z, temp).value - testkit::ntxent_naive(z, temp)));
    }
  return {worst < kNtxentTol, "400 batches, max |diff| " + fmt(worst * 1e15, 2) + "e-15"};
}

Verdict mask_stats() {
  const aug::MaskConfig cfg(0.5, 6.0);
  Rng rng(mix_seed(3, 0x3A5));
  const int length = 100, per_draw = 1000, draws = 100;  // 1e5 columns
  // Segments still open at the column end are cut short. Their steps count, but only completed
  // segments count as endings: the usual estimate of a geometric mean under right censoring.
  double masked = 0, total = 0, completed = 0;
  for (int d = 0; d < draws; ++d) {
    const Mat m = aug::gen_mask(length, per_draw, cfg, rng);
    for (int c = 0; c < per_draw; ++c)
      for (int t = 0; t < length; ++t) {
        const bool is_masked = m(t, c) == 0.0;
        masked += is_masked;
        total += 1;
        completed += is_masked && t + 1 < length && m(t + 1, c) != 0.0;
      }
  }
  const double frac = masked / total, mean_len = masked / completed, lu = cfg.mean_unmasked_length();
  return {std::abs(frac - 0.5) <= kMaskFracTol && std::abs(mean_len - 6.0) <= kMaskLenTol && lu == 6.0,
          "masked fraction " + fmt(frac) + ", mean masked segment " + fmt(mean_len, 3) + " (" +
              std::to_string(static_cast<long>(completed)) + " completed segments), l_u " + fmt(lu, 1)};
}

std::vector<int> random_labels(int n, int k, Rng& rng) {
  std::uniform_int_distribution<int> d(0, k - 1);
  std::vector<int> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

Verdict metrics() {
  Rng rng(mix_seed(4, 0xACC));
  int acc_mismatch = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = 10 + t * 2;
    const auto y = random_labels(n, 1 + t % 6, rng), c = random_labels(n, 1 + (t * 7) % 6, rng);
    acc_mismatch += eval::acc(y, c) != testkit::acc_bruteforce(y, c);
  }
  const auto y = random_labels(200, 4, rng);
  const double ari_same = eval::ari(y, y);
  double ari_sum = 0;
  for (int t = 0; t < 1000; ++t) ari_sum += eval::ari(random_labels(100, 3, rng), random_labels(100, 4, rng));
  const double ari_mean = ari_sum / 1000;
  const double nmi_same = eval::nmi(y, y), nmi_indep = eval::nmi({0, 0, 1, 1}, {0, 1, 0, 1});
  const bool ok = acc_mismatch == 0 && std::abs(ari_same - 1.0) < 1e-12 && std::abs(ari_mean) < kAriChance &&
                  std::abs(nmi_same - 1.0) < 1e-12 && std::abs(nmi_indep) < 1e-12;
  return {ok, "ACC mismatches " + std::to_string(acc_mismatch) + "/100, ARI(Y,Y) " + fmt(ari_same) +
                  ", mean random ARI " + fmt(ari_mean) + ", NMI(Y,Y) " + fmt(nmi_same) + ", NMI independent " +
                  fmt(nmi_indep)};
}

Verdict matching() {
  Rng rng(mix_seed(5, 0x3A7C));
  int mismatch = 0;
  for (int t = 0; t < 1000; ++t) {
    const int clusters = 1 + t % 7, states = 2 + t % 6;
    std::uniform_int_distribution<int> cnt(0, t % 4 == 0 ? 3 : 50);
    std::bernoulli_distribution zero(0.35);
    std::vector<std::vector<std::int64_t>> counts(clusters, std::vector<std::int64_t>(states));
    for (auto& row : counts)
      for (auto& v : row) v = zero(rng) ? 0 : cnt(rng);
    mismatch += supervise::match_counts(counts).matched != testkit::match_bruteforce(counts);
  }
  return {mismatch == 0, std::to_string(mismatch) + "/1000 tables differ from brute force"};
}

Verdict mining() {
  Rng rng(mix_seed(6, 0x313E));
  std::normal_distribution<double> n(0, 1);
  int mismatch = 0, crossing = 0;
  for (int t = 0; t < 50; ++t) {
    const int points = 20 + (t * 37) % 181;  // up to 200
    scan::ScanConfig cfg;
    cfg.n_chunks = 1 + t % 5;
    cfg.k_neighbors = std::min(12, points / cfg.n_chunks - 1);
    cfg.seed = static_cast<std::uint64_t>(t);
    Mat x(points, 2 + t % 6);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    if (t % 7 == 0) x = x.array().round();
    const auto idx = scan::mine_neighbors(x, cfg);
    mismatch += idx.neighbors != testkit::knn_within_chunks(x, idx.chunk, cfg.k_neighbors);
    for (int i = 0; i < points; ++i)
      for (int j : idx.neighbors[i]) crossing += idx.chunk[j] != idx.chunk[i];
  }
  return {mismatch == 0 && crossing == 0, std::to_string(mismatch) + "/50 datasets differ from the oracle, " +
                                              std::to_string(crossing) + " cross-chunk neighbors"};
}

Verdict blobs() {
  int separated = 0, collapsed = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    separated += testkit::scan_two_blobs(s, 2.0).acc == 1.0;
    collapsed += testkit::scan_two_blobs(s, 0.0).largest_share > 0.9;
  }
  return {separated >= 9 && collapsed >= 1, "lambda=2: ACC=1 in " + std::to_string(separated) +
                                                "/10 seeds; lambda=0: collapse in " + std::to_string(collapsed) +
                                                "/10 seeds"};
}

// Desk-scale state shared by criteria 8 and 9.
struct Desk {
  config::PipelineConfig cfg;
  pipeline::PreparedData data;
  model::FeatureExtractor pretrained;
  Mat z;
  scan::NeighborIndex neighbors;
  double setup_seconds = 0;
};

Desk& desk() {
  static std::optional<Desk> d;
  if (!d) {
    const auto t0 = Clock::now();
    Desk x;
    x.cfg = load("configs/desk.json");
    const auto runs = pipeline::generate_runs(x.cfg);
    pipeline::bind_data_shape(x.cfg, runs);
    x.data = pipeline::prepare_data(x.cfg, runs);
    x.pretrained = pipeline::run_pretrain(x.cfg, x.data);
    x.z = x.pretrained.extract_features(x.data.train_windows);
    x.neighbors = pipeline::run_mine(x.cfg, x.z);
    x.setup_seconds = seconds_since(t0);
    d = std::move(x);
  }
  return *d;
}

// Same steps as pipeline::run_all after mining, for one cluster count.
eval::FddReport desk_unsupervised(int n_clusters) {
  auto& d = desk();
  auto cfg = d.cfg;
  cfg.scan.n_clusters = n_clusters;
  cfg.model.n_clusters = n_clusters;
  auto cm = pipeline::run_cluster(cfg, d.pretrained, d.data, d.neighbors, d.z);
  const auto map = pipeline::run_match(cm, d.data);
  return pipeline::evaluate_unsupervised(cfg, cm, map, d.data);
}

std::optional<eval::FddReport> desk_q_report;

double fault_tpr(const eval::FddReport& r, int state) {
  const auto* f = eval::find_fault(r, state);
  return f ? f->tpr : 0.0;
}

double fault_fpr(const eval::FddReport& r, int state) {
  const auto* f = eval::find_fault(r, state);
  return f ? f->fpr : 1.0;
}

int state_of_kind(const config::PipelineConfig& cfg, data::FaultKind kind) {
  const auto& faults = cfg.data.synthetic.faults;
  for (std::size_t i = 0; i < faults.size(); ++i)
    if (faults[i].kind == kind) return static_cast<int>(i) + 1;
  return -1;
}

Verdict desk_pipeline() {
  const auto t0 = Clock::now();
  auto& d = desk();
  desk_q_report = desk_unsupervised(d.cfg.scan.n_clusters);
  const double minutes = seconds_since(t0) / 60.0;
  const auto& r = *desk_q_report;
  const int step = state_of_kind(d.cfg, data::FaultKind::kStep), drift = state_of_kind(d.cfg, data::FaultKind::kSlowDrift);
  const double acc = r.clustering ? r.clustering->acc : 0.0;
  const bool ok = acc >= kDeskAcc && r.detection_tpr >= kDeskDetTpr && r.detection_fpr <= kDeskDetFpr &&
                  fault_tpr(r, step) >= kDeskFaultTpr && fault_tpr(r, drift) >= kDeskFaultTpr && minutes < kDeskMinutes;
  return {ok, "ACC " + fmt(acc, 3) + ", detection TPR " + fmt(r.detection_tpr, 3) + " at FPR " +
                  fmt(r.detection_fpr, 3) + ", step TPR " + fmt(fault_tpr(r, step), 3) + ", drift TPR " +
                  fmt(fault_tpr(r, drift), 3) + ", " + fmt(minutes, 1) + " min"};
}

Verdict cluster_count() {
  auto& d = desk();
  const int q = static_cast<int>(d.data.states.size());
  if (!desk_q_report) desk_q_report = desk_unsupervised(q);
  const double at_q = desk_q_report->detection_tpr;
  const double at_2q = desk_unsupervised(2 * q).detection_tpr;
  const double at_qm2 = desk_unsupervised(q - 2).detection_tpr;
  const bool ok = at_q - at_2q < kOverclusterMaxDrop && at_q - at_qm2 >= kUnderclusterMinDrop;
  return {ok, "detection TPR: M=" + std::to_string(q) + " " + fmt(at_q, 3) + ", M=" + std::to_string(2 * q) + " " +
                  fmt(at_2q, 3) + " (drop " + fmt(at_q - at_2q, 3) + "), M=" + std::to_string(q - 2) + " " +
                  fmt(at_qm2, 3) + " (drop " + fmt(at_q - at_qm2, 3) + ")"};
}

Verdict finetune_gain() {
  auto base = load("configs/desk_hard.json");
  const int hard = state_of_kind(base, data::FaultKind::kRandomVariation);
  const auto runs = pipeline::generate_runs(base);
  int good = 0;
  std::string per_seed;
  for (int s = 0; s < kFinetuneSeeds; ++s) {
    auto cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(s);
    cfg.propagate();
    cfg.data.synthetic.seed = base.data.synthetic.seed;  // same dataset, varied training
    const auto o = pipeline::run_all(cfg, runs, {true, false});
    const double gain = fault_tpr(*o.finetuned, hard) - fault_tpr(o.unsupervised, hard);
    const double fpr = fault_fpr(*o.finetuned, hard);
    good += gain >= kFinetuneGain && fpr <= kFinetuneFpr;
    per_seed += (s ? "; " : "") + fmt(fault_tpr(o.unsupervised, hard), 2) + "->" +
                fmt(fault_tpr(*o.finetuned, hard), 2) + " @FPR " + fmt(fpr, 3);
  }
  return {good >= kFinetuneMinSeeds, "hard fault TPR unsupervised->fine-tuned per seed: " + per_seed + " (" +
                                         std::to_string(good) + "/" + std::to_string(kFinetuneSeeds) + " qualify)"};
}

// ---------------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SENSORSCAN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot_dir(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().parent_path().filename() == "logs") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "sensorscan_acceptance_det";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto synth_cfg = (root / "synth.json").string(), ingest_cfg = (root / "ingest.json").string();
  const std::string body = R"(
  "seed": 21,
  "data": {"window": 20, "step": 4, "runs_per_state": 6, RUNS
           "synthetic": {"channels": 8, "run_length": 80, "onset": 30}},
  "model": {"n_layers": 1, "hidden": 16, "ff_dim": 32, "heads": 2, "embedding_dim": 6},
  "pretrain": {"epochs": 2, "batch": 64, "permute_chunks": 5},
  "scan": {"n_clusters": 5, "epochs": 3, "freeze_epochs": 2, "n_chunks": 2, "k_neighbors": 5},
  "finetune": {"epochs": 2},
  "eval": {"step": 4, "baseline_dims": 5}
})";
  auto write_cfg = [&](const std::string& path, const std::string& workdir, const std::string& runs) {
    std::string b = body;
    b.replace(b.find("RUNS"), 4, runs);
    std::ofstream(path) << "{\n  \"workdir\": \"" << workdir << "\"," << b;
  };
  write_cfg(synth_cfg, (root / "synth").string(), "");
  write_cfg(ingest_cfg, (root / "ingest").string(), "\"runs_csv\": \"" + (root / "input.csv").string() + "\",");

  const std::vector<std::string> stages = {"pretrain", "mine", "cluster", "match", "finetune",
                                           "evaluate --baseline pca-kmeans", "evaluate --seeds 2",
                                           "ablate --axis mining", "ablate --axis ssl-tasks", "report"};
  std::vector<std::string> failed;
  int commands = 0;
  auto all = [&](const std::string& cfg, const std::string& source_stage) {
    ++commands;
    if (run_cli(source_stage + " --config " + cfg) != 0) failed.push_back(source_stage);
    for (const auto& s : stages) {
      ++commands;
      if (run_cli(s + " --config " + cfg) != 0) failed.push_back(s);
    }
  };
  all(synth_cfg, "synth");
  fs::copy_file(root / "synth" / "runs.csv", root / "input.csv");
  all(ingest_cfg, "ingest");
  const auto synth1 = snapshot_dir(root / "synth"), ingest1 = snapshot_dir(root / "ingest");
  all(synth_cfg, "synth");
  all(ingest_cfg, "ingest");
  const auto synth2 = snapshot_dir(root / "synth"), ingest2 = snapshot_dir(root / "ingest");

  std::vector<std::string> differing;
  auto compare = [&](const auto& first, const auto& second, const std::string& tag) {
    for (const auto& [name, bytes] : first) {
      const auto it = second.find(name);
      if (it == second.end() || it->second != bytes) differing.push_back(tag + "/" + name);
    }
    if (first.size() != second.size()) differing.push_back(tag + "/<file set>");
  };
  compare(synth1, synth2, "synth");
  compare(ingest1, ingest2, "ingest");
  fs::remove_all(root);
  std::string detail = std::to_string(commands) + " commands, " + std::to_string(synth1.size() + ingest1.size()) +
                       " artifacts compared";
  for (const auto& f : failed) detail += "; failed: " + f;
  for (const auto& f : differing) detail += "; differs: " + f;
  return {failed.empty() && differing.empty() && !synth1.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  set_log_sink([](LogLevel, const std::string&) {});
  tune_allocator();
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient checks", gradients},
      {"NT-Xent vs naive oracle", ntxent},
      {"mask statistics", mask_stats},
      {"ACC / ARI / NMI", metrics},
      {"label matching vs brute force", matching},
      {"chunked mining vs oracle", mining},
      {"SCAN on two blobs", blobs},
      {"desk-scale pipeline", desk_pipeline},
      {"cluster count sensitivity", cluster_count},
      {"fine-tuning gain on the hard fault", finetune_gain},
      {"CLI determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
