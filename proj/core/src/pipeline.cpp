#include "sensorscan/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "sensorscan/nn/checkpoint.hpp"
#include "sensorscan/report.hpp"
#include "text.hpp"

namespace sensorscan::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace salt {
constexpr std::uint64_t kSplit = 0x5B1;
constexpr std::uint64_t kUnbalance = 0x0B1;
constexpr std::uint64_t kModelInit = 0x1417;
constexpr std::uint64_t kHeadInit = 0xC1D;
constexpr std::uint64_t kSubsample = 0x5B5;
constexpr std::uint64_t kBaseline = 0xBA5;
}  // namespace salt

// ---------------------------------------------------------------------------
// Data

std::vector<data::SensorRun> generate_runs(const PipelineConfig& cfg) {
  return data::synth_generate(cfg.data.synthetic, cfg.data.runs_per_state);
}

std::vector<data::SensorRun> filter_states(const std::vector<data::SensorRun>& runs, const std::vector<int>& faults) {
  std::vector<data::SensorRun> out;
  for (const auto& r : runs)
    if (r.fault_label == 0 || std::find(faults.begin(), faults.end(), r.fault_label) != faults.end())
      out.push_back(r);
  return out;
}

void bind_data_shape(PipelineConfig& cfg, const std::vector<data::SensorRun>& runs) {
  if (runs.empty()) throw ValidationError("dataset has no runs");
  const auto d = static_cast<int>(runs.front().channels());
  for (int c : cfg.data.channels)
    if (c < 0 || c >= d) throw ValidationError("data.channels lists channel " + std::to_string(c) + " but D=" + std::to_string(d));
  cfg.model.channels = cfg.data.channels.empty() ? d : static_cast<int>(cfg.data.channels.size());
}

PreparedData prepare_data(const PipelineConfig& cfg, const std::vector<data::SensorRun>& all_runs) {
  const std::vector<data::SensorRun> runs =
      cfg.data.channels.empty() ? all_runs : data::select_channels(all_runs, cfg.data.channels);
  const std::uint64_t data_seed = cfg.data.synthetic.seed;
  auto split = data::split_runs(runs, cfg.data.train_fraction, mix_seed(data_seed, salt::kSplit));
  if (cfg.data.unbalance) {
    split.train = data::unbalance_train(split.train, cfg.data.unbalance_normal, cfg.data.unbalance_per_fault,
                                        mix_seed(data_seed, salt::kUnbalance));
  }
  if (split.train.empty() || split.test.empty()) throw ValidationError("train/test split left an empty side");
  PreparedData p;
  p.stats = data::compute_normalization(split.train);
  p.train_runs = data::apply_normalization(std::move(split.train), p.stats);
  p.test_runs = data::apply_normalization(std::move(split.test), p.stats);
  p.train_windows = data::make_windows(p.train_runs, cfg.data.window, cfg.data.step);
  p.test_windows = data::make_windows(p.test_runs, cfg.data.window, cfg.eval.step);
  if (p.train_windows.empty() || p.test_windows.empty()) throw ValidationError("runs are shorter than the window");
  p.test_bounds = data::run_boundaries(p.test_windows);
  std::set<int> states;
  for (const auto& w : p.train_windows) states.insert(w.label);
  p.states.assign(states.begin(), states.end());
  return p;
}

// ---------------------------------------------------------------------------
// Stages in memory

namespace {

model::FeatureExtractor fresh_extractor(const PipelineConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, salt::kModelInit));
  return model::FeatureExtractor(cfg.model, rng);
}

model::ClusterHead fresh_head(const PipelineConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, salt::kHeadInit));
  return model::ClusterHead(cfg.model.embedding_dim, cfg.scan.n_clusters, rng);
}

}  // namespace

model::FeatureExtractor run_pretrain(const PipelineConfig& cfg, const PreparedData& data,
                                     const ssl::EpochCallback& on_epoch) {
  ssl::PretrainNet net(cfg.model, mix_seed(cfg.seed, salt::kModelInit));
  return ssl::pretrain(std::move(net), data.train_windows, cfg.pretrain, on_epoch);
}

scan::NeighborIndex run_mine(const PipelineConfig& cfg, const Mat& train_embeddings) {
  return scan::mine_neighbors(train_embeddings, cfg.scan);
}

ClusterModel run_cluster(const PipelineConfig& cfg, model::FeatureExtractor pretrained, const PreparedData& data,
                         const scan::NeighborIndex& neighbors, const Mat& train_embeddings) {
  ClusterModel m;
  m.extractor = std::move(pretrained);
  m.head = fresh_head(cfg);
  std::vector<std::size_t> ids;
  if (cfg.scan.subsample) {
    ids = scan::subsample_normal(train_embeddings, cfg.scan.n_clusters, mix_seed(cfg.scan.seed, salt::kSubsample));
  } else {
    ids.resize(data.train_windows.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
  }
  scan::WindowFeatures source(m.extractor, data.train_windows);
  m.history = scan::train_scan(source, m.head, neighbors, ids, cfg.scan);
  return m;
}

supervise::LabelMap run_match(ClusterModel& model, const PreparedData& data) {
  const Mat z = model.extractor.extract_features(data.train_windows);
  const auto clusters = model::argmax_rows(model.head.forward(z, nn::Mode::kEval));
  return supervise::match_labels(clusters, data::labels_of(data.train_windows), model.head.n_outputs());
}

supervise::FinetuneResult run_finetune(const PipelineConfig& cfg, model::FeatureExtractor pretrained,
                                       const PreparedData& data) {
  const auto ids = supervise::select_labeled_runs(data.train_runs, cfg.finetune.runs_per_state, cfg.finetune.seed);
  std::vector<data::SensorRun> labeled;
  for (const auto& r : data.train_runs)
    if (std::find(ids.begin(), ids.end(), r.run_id) != ids.end()) labeled.push_back(r);
  const auto windows = data::make_windows(labeled, cfg.data.window, cfg.data.step);
  return supervise::finetune(std::move(pretrained), windows, cfg.finetune);
}

eval::FddReport score(const PipelineConfig& cfg, const PreparedData& data, const std::vector<int>& predicted,
                      const std::vector<int>& test_clusters, const std::string& name) {
  const auto truth = data::labels_of(data.test_windows);
  eval::FddOptions opts;
  opts.step = cfg.eval.step;
  opts.sampling_period_min = cfg.data.sampling_period_min;
  for (int s : data.states)
    if (s != 0) opts.fault_states.push_back(s);
  eval::FddReport r = eval::fdd_metrics(truth, predicted, data.test_bounds, opts);
  r.name = name;
  r.clustering = eval::ClusteringScores{eval::acc(truth, test_clusters), eval::nmi(truth, test_clusters),
                                        eval::ari(truth, test_clusters)};
  r.fingerprint = hex64(config::stage_fingerprint(cfg, config::Stage::kEvaluate));
  return r;
}

eval::FddReport evaluate_unsupervised(const PipelineConfig& cfg, ClusterModel& model, const supervise::LabelMap& map,
                                      const PreparedData& data) {
  if (model.head.n_outputs() != map.n_clusters())
    throw ValidationError("evaluate: the clustering head has " + std::to_string(model.head.n_outputs()) +
                          " clusters but the label map has " + std::to_string(map.n_clusters()));
  const Mat z = model.extractor.extract_features(data.test_windows);
  const auto clusters = model::argmax_rows(model.head.forward(z, nn::Mode::kEval));
  const auto predicted = supervise::apply_label_map(map, clusters, cfg.eval.unmatched);
  return score(cfg, data, predicted, clusters, "sensorscan");
}

eval::FddReport evaluate_finetuned(const PipelineConfig& cfg, supervise::Classifier& classifier,
                                   const PreparedData& data) {
  const auto predicted = supervise::predict_supervised(classifier, data.test_windows);
  return score(cfg, data, predicted, predicted, "sensorscan+finetune");
}

eval::FddReport evaluate_baseline(const PipelineConfig& cfg, const PreparedData& data) {
  const auto result = eval::baseline_pca_kmeans(data::flatten_windows(data.train_windows),
                                                data::flatten_windows(data.test_windows), cfg.eval.baseline_dims,
                                                cfg.scan.n_clusters, mix_seed(cfg.seed, salt::kBaseline));
  const auto map = supervise::match_labels(result.train_clusters, data::labels_of(data.train_windows),
                                           cfg.scan.n_clusters);
  const auto predicted = supervise::apply_label_map(map, result.test_clusters, cfg.eval.unmatched);
  return score(cfg, data, predicted, result.test_clusters, "pca-kmeans");
}

Outcome run_all(const PipelineConfig& cfg_in, const std::vector<data::SensorRun>& runs, const RunOptions& options) {
  PipelineConfig cfg = cfg_in;
  bind_data_shape(cfg, runs);
  const PreparedData data = prepare_data(cfg, runs);
  model::FeatureExtractor pretrained = run_pretrain(cfg, data);
  const Mat z = pretrained.extract_features(data.train_windows);
  const auto neighbors = run_mine(cfg, z);
  ClusterModel cm = run_cluster(cfg, pretrained, data, neighbors, z);
  const auto map = run_match(cm, data);
  Outcome out{evaluate_unsupervised(cfg, cm, map, data), std::nullopt, std::nullopt};
  if (options.finetune) {
    auto ft = run_finetune(cfg, std::move(pretrained), data);
    out.finetuned = evaluate_finetuned(cfg, ft.classifier, data);
  }
  if (options.baseline) out.baseline = evaluate_baseline(cfg, data);
  return out;
}

// ---------------------------------------------------------------------------
// Artifacts

namespace {

fs::path artifact(const PipelineConfig& cfg, const std::string& name) { return fs::path(cfg.workdir) / name; }

std::string fingerprint_of(const PipelineConfig& cfg, config::Stage stage) {
  return hex64(config::stage_fingerprint(cfg, stage));
}

void ensure_workdir(const PipelineConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.workdir, ec);
  if (ec) throw Error("cannot create workdir '" + cfg.workdir + "': " + ec.message());
}

const char* command_of(config::Stage stage) {
  switch (stage) {
    case config::Stage::kDataset: return "synth (or ingest)";
    case config::Stage::kPretrain: return "pretrain";
    case config::Stage::kMine: return "mine";
    case config::Stage::kCluster: return "cluster";
    case config::Stage::kMatch: return "match";
    case config::Stage::kFinetune: return "finetune";
    case config::Stage::kEvaluate: return "evaluate";
  }
  return "?";
}

void require(const fs::path& path, config::Stage stage) {
  if (!fs::exists(path))
    throw MissingArtifactError(config::stage_name(stage), "missing " + path.string() + "; run `sensorscan " +
                                                              command_of(stage) + "` first");
}

void check_fingerprint(const std::string& found, const PipelineConfig& cfg, config::Stage stage,
                       const fs::path& path) {
  const std::string expected = fingerprint_of(cfg, stage);
  if (found != expected)
    throw MissingArtifactError(config::stage_name(stage),
                               path.string() + " was produced with a different config (fingerprint " + found +
                                   ", expected " + expected + "); re-run `sensorscan " + command_of(stage) + "`");
}

void write_meta(const fs::path& file, const PipelineConfig& cfg, config::Stage stage) {
  ordered_json j = {{"stage", config::stage_name(stage)}, {"fingerprint", fingerprint_of(cfg, stage)}};
  detail::write_file(file.string() + ".meta.json", j.dump(2) + "\n");
}

void check_meta(const fs::path& file, const PipelineConfig& cfg, config::Stage stage) {
  require(file, stage);
  const fs::path meta = file.string() + ".meta.json";
  require(meta, stage);
  std::string found;
  try {
    found = ordered_json::parse(detail::read_file(meta.string())).at("fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(meta.string() + ": malformed sidecar: " + e.what());
  }
  check_fingerprint(found, cfg, stage, file);
}

void save_model(const fs::path& path, const PipelineConfig& cfg, config::Stage stage, const std::string& kind,
                const nn::ParamRefs& params) {
  nn::Checkpoint ck;
  ck.kind = kind;
  ck.config_json = config::to_json(cfg);
  ck.fingerprint = fingerprint_of(cfg, stage);
  ck.tensors = nn::snapshot(params);
  nn::save_checkpoint(ck, path.string());
}

nn::Checkpoint load_model(const fs::path& path, const PipelineConfig& cfg, config::Stage stage,
                          const std::string& kind) {
  require(path, stage);
  nn::Checkpoint ck = nn::load_checkpoint(path.string());
  if (ck.kind != kind) throw ValidationError(path.string() + ": expected a '" + kind + "' checkpoint, found '" + ck.kind + "'");
  check_fingerprint(ck.fingerprint, cfg, stage, path);
  return ck;
}

// Every stage after the dataset starts here.
struct Loaded {
  PipelineConfig cfg;
  PreparedData data;
};

Loaded load_dataset(const PipelineConfig& cfg_in) {
  Loaded l{cfg_in, {}};
  const auto runs_path = artifact(l.cfg, files::kRuns);
  const auto manifest_path = artifact(l.cfg, files::kManifest);
  require(runs_path, config::Stage::kDataset);
  require(manifest_path, config::Stage::kDataset);
  std::string found;
  try {
    found = ordered_json::parse(detail::read_file(manifest_path.string())).at("fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(manifest_path.string() + ": malformed manifest: " + e.what());
  }
  check_fingerprint(found, l.cfg, config::Stage::kDataset, runs_path);
  const auto runs = data::ingest_csv(runs_path.string(), l.cfg.data.sampling_period_min);
  bind_data_shape(l.cfg, runs);
  l.data = prepare_data(l.cfg, runs);
  return l;
}

model::FeatureExtractor load_pretrained(const PipelineConfig& cfg) {
  const auto ck = load_model(artifact(cfg, files::kPretrain), cfg, config::Stage::kPretrain, "extractor");
  model::FeatureExtractor fx = fresh_extractor(cfg);
  nn::restore(ck.tensors, fx.parameters());
  return fx;
}

ClusterModel load_cluster(const PipelineConfig& cfg) {
  const auto ck = load_model(artifact(cfg, files::kCluster), cfg, config::Stage::kCluster, "cluster");
  ClusterModel m;
  m.extractor = fresh_extractor(cfg);
  m.head = fresh_head(cfg);
  auto params = m.extractor.parameters();
  m.head.collect(params);
  nn::restore(ck.tensors, params);
  return m;
}

supervise::Classifier load_classifier(const PipelineConfig& cfg, const PreparedData& data) {
  const auto ck = load_model(artifact(cfg, files::kFinetune), cfg, config::Stage::kFinetune, "classifier");
  supervise::Classifier c;
  c.extractor = fresh_extractor(cfg);
  c.states = data.states;
  Rng rng(0);
  c.head = model::ClusterHead(cfg.model.embedding_dim, static_cast<int>(c.states.size()), rng, "classifier_head");
  nn::restore(ck.tensors, c.parameters());
  return c;
}

void write_manifest(const PipelineConfig& cfg, const std::vector<data::SensorRun>& runs) {
  std::map<int, int> per_state;
  Eigen::Index tmin = runs.front().length(), tmax = tmin;
  for (const auto& r : runs) {
    ++per_state[r.fault_label];
    tmin = std::min(tmin, r.length());
    tmax = std::max(tmax, r.length());
  }
  ordered_json states = ordered_json::object();
  for (const auto& [s, n] : per_state) states[std::to_string(s)] = n;
  ordered_json j = {{"schema_version", 1},
                    {"fingerprint", fingerprint_of(cfg, config::Stage::kDataset)},
                    {"runs", runs.size()},
                    {"channels", runs.front().channels()},
                    {"runs_per_state", states},
                    {"length", {{"min", tmin}, {"max", tmax}}},
                    {"sampling_period_min", cfg.data.sampling_period_min}};
  detail::write_file(artifact(cfg, files::kManifest).string(), j.dump(2) + "\n");
}

eval::StateNames state_names(const PipelineConfig& cfg) {
  eval::StateNames names;
  names[0] = "normal";
  if (!cfg.data.runs_csv) {
    const auto& faults = cfg.data.synthetic.faults;
    for (std::size_t i = 0; i < faults.size(); ++i)
      names[static_cast<int>(i) + 1] = std::to_string(i + 1) + " " + data::to_string(faults[i].kind);
  }
  return names;
}

void emit_report(const PipelineConfig& cfg, const eval::FddReport& r, const std::string& stem) {
  eval::write_report(r, artifact(cfg, stem + ".json").string());
  const std::string table = eval::render_table(r, state_names(cfg));
  detail::write_file(artifact(cfg, stem + ".txt").string(), table);
  log_info(stem + ":\n" + table);
}

void log_latency(model::FeatureExtractor& fx, const PreparedData& data) {
  const std::vector<data::WindowSample> one(data.test_windows.begin(), data.test_windows.begin() + 1);
  const auto t0 = std::chrono::steady_clock::now();
  (void)fx.extract_features(one);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log_info("single-window inference latency: " + std::to_string(s) + " s");
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

void cmd_synth(const PipelineConfig& cfg) {
  if (cfg.data.runs_csv) throw ValidationError("synth: data.runs_csv is set; use `sensorscan ingest` instead");
  ensure_workdir(cfg);
  const auto runs = generate_runs(cfg);
  data::write_csv(runs, artifact(cfg, files::kRuns).string());
  write_manifest(cfg, runs);
  log_info("synth: wrote " + std::to_string(runs.size()) + " runs to " + artifact(cfg, files::kRuns).string());
}

void cmd_ingest(const PipelineConfig& cfg) {
  if (!cfg.data.runs_csv) throw ValidationError("ingest: data.runs_csv is not set");
  const auto runs = data::ingest_csv(*cfg.data.runs_csv, cfg.data.sampling_period_min);
  PipelineConfig bound = cfg;
  bind_data_shape(bound, runs);
  ensure_workdir(cfg);
  data::write_csv(runs, artifact(cfg, files::kRuns).string());
  write_manifest(cfg, runs);
  log_info("ingest: " + std::to_string(runs.size()) + " runs from " + *cfg.data.runs_csv);
}

void cmd_pretrain(const PipelineConfig& cfg_in) {
  auto [cfg, data] = load_dataset(cfg_in);
  fs::create_directories(artifact(cfg, "logs"));
  std::string log;
  auto fx = run_pretrain(cfg, data, [&](const ssl::EpochStats& s) {
    const auto line = ssl::format_epoch_log(s);
    log += line + '\n';
    log_info(line);
  });
  detail::write_file(artifact(cfg, "logs/pretrain.jsonl").string(), log);
  save_model(artifact(cfg, files::kPretrain), cfg, config::Stage::kPretrain, "extractor", fx.parameters());
}

void cmd_mine(const PipelineConfig& cfg_in) {
  auto [cfg, data] = load_dataset(cfg_in);
  auto fx = load_pretrained(cfg);
  const Mat z = fx.extract_features(data.train_windows);
  const auto labels = data::labels_of(data.train_windows);
  const auto emb_path = artifact(cfg, files::kEmbeddings);
  scan::export_embeddings(z, &labels, emb_path.string());
  write_meta(emb_path, cfg, config::Stage::kPretrain);
  const auto index = run_mine(cfg, z);
  const auto path = artifact(cfg, files::kNeighbors);
  scan::write_neighbors_csv(index, path.string());
  write_meta(path, cfg, config::Stage::kMine);
  log_info("mine: " + std::to_string(index.size()) + " samples, K=" + std::to_string(index.k) + ", mode " +
           scan::to_string(cfg.scan.mining));
}

void cmd_cluster(const PipelineConfig& cfg_in) {
  auto [cfg, data] = load_dataset(cfg_in);
  const auto nn_path = artifact(cfg, files::kNeighbors);
  check_meta(nn_path, cfg, config::Stage::kMine);
  auto fx = load_pretrained(cfg);
  const auto index = scan::read_neighbors_csv(nn_path.string());
  if (index.size() != data.train_windows.size())
    throw MissingArtifactError("mine", nn_path.string() + " does not match the training set; re-run `sensorscan mine`");
  const Mat z = fx.extract_features(data.train_windows);
  auto cm = run_cluster(cfg, std::move(fx), data, index, z);
  std::string log;
  for (const auto& h : cm.history) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), R"({"epoch":%d,"L_scan":%.6f,"consistency":%.6f,"entropy":%.6f,"frozen":%s})",
                  h.epoch + 1, h.loss, h.consistency, h.entropy, h.extractor_frozen ? "true" : "false");
    log += std::string(buf) + '\n';
    log_info(buf);
  }
  fs::create_directories(artifact(cfg, "logs"));
  detail::write_file(artifact(cfg, "logs/cluster.jsonl").string(), log);
  auto params = cm.extractor.parameters();
  cm.head.collect(params);
  save_model(artifact(cfg, files::kCluster), cfg, config::Stage::kCluster, "cluster", params);
}

void cmd_match(const PipelineConfig& cfg_in) {
  auto [cfg, data] = load_dataset(cfg_in);
  auto cm = load_cluster(cfg);
  const auto map = run_match(cm, data);
  const auto path = artifact(cfg, files::kLabelMap);
  supervise::write_labelmap_csv(map, path.string());
  write_meta(path, cfg, config::Stage::kMatch);
  int unmatched = 0;
  for (int l = 0; l < map.n_clusters(); ++l) unmatched += map.is_matched(l) ? 0 : 1;
  log_info("match: " + std::to_string(map.n_clusters()) + " clusters, " + std::to_string(unmatched) + " unmatched");
}

void cmd_finetune(const PipelineConfig& cfg_in) {
  auto [cfg, data] = load_dataset(cfg_in);
  auto fx = load_pretrained(cfg);
  auto result = run_finetune(cfg, std::move(fx), data);
  std::string log;
  for (const auto& h : result.history) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), R"({"epoch":%d,"L_ce":%.6f,"train_accuracy":%.4f})", h.epoch + 1, h.loss,
                  h.train_accuracy);
    log += std::string(buf) + '\n';
    log_info(buf);
  }
  fs::create_directories(artifact(cfg, "logs"));
  detail::write_file(artifact(cfg, "logs/finetune.jsonl").string(), log);
  save_model(artifact(cfg, files::kFinetune), cfg, config::Stage::kFinetune, "classifier",
             result.classifier.parameters());
}

void cmd_evaluate(const PipelineConfig& cfg_in, const CommandOptions& options) {
  if (options.seeds < 1) throw ValidationError("--seeds must be >= 1");
  if (options.seeds > 1) {
    // Full in-memory pipeline per seed on the same dataset and split.
    auto [base, data] = load_dataset(cfg_in);
    const auto runs = data::ingest_csv(artifact(base, files::kRuns).string(), base.data.sampling_period_min);
    std::vector<eval::FddReport> unsup, ft, bl;
    for (int s = 0; s < options.seeds; ++s) {
      PipelineConfig c = base;
      c.seed = base.seed + static_cast<std::uint64_t>(s);
      c.propagate();
      c.data.synthetic.seed = base.data.synthetic.seed;
      bind_data_shape(c, runs);
      log_info("evaluate: seed " + std::to_string(c.seed));
      auto o = run_all(c, runs, {fs::exists(artifact(base, files::kFinetune)), options.baseline});
      unsup.push_back(o.unsupervised);
      if (o.finetuned) ft.push_back(*o.finetuned);
      if (o.baseline) bl.push_back(*o.baseline);
    }
    auto emit = [&](const std::vector<eval::FddReport>& rs, const std::string& stem) {
      if (rs.empty()) return;
      const auto summary = eval::summarize(rs);
      detail::write_file(artifact(base, stem + ".json").string(), eval::format_summary_json(summary, options.seeds));
      const auto text = eval::render_summary(summary);
      detail::write_file(artifact(base, stem + ".txt").string(), text);
      log_info(stem + " (" + std::to_string(options.seeds) + " seeds):\n" + text);
    };
    emit(unsup, "summary_unsupervised");
    emit(ft, "summary_finetuned");
    emit(bl, "summary_baseline");
    return;
  }

  auto [cfg, data] = load_dataset(cfg_in);
  std::vector<eval::FddReport> reports;
  const auto map_path = artifact(cfg, files::kLabelMap);
  check_meta(map_path, cfg, config::Stage::kMatch);
  auto cm = load_cluster(cfg);
  const auto map = supervise::read_labelmap_csv(map_path.string());
  log_latency(cm.extractor, data);
  reports.push_back(evaluate_unsupervised(cfg, cm, map, data));
  emit_report(cfg, reports.back(), "report_unsupervised");
  if (fs::exists(artifact(cfg, files::kFinetune))) {
    auto clf = load_classifier(cfg, data);
    reports.push_back(evaluate_finetuned(cfg, clf, data));
    emit_report(cfg, reports.back(), "report_finetuned");
  }
  if (options.baseline) {
    reports.push_back(evaluate_baseline(cfg, data));
    emit_report(cfg, reports.back(), "report_baseline");
  }
  if (reports.size() > 1)
    detail::write_file(artifact(cfg, "comparison.txt").string(), eval::render_comparison(reports, state_names(cfg)));
}

void cmd_ablate(const PipelineConfig& cfg_in, const CommandOptions& options) {
  PipelineConfig cfg = cfg_in;
  if (options.axis) cfg.ablate.axis = *options.axis;
  cfg.validate();
  const auto& axis = cfg.ablate.axis;
  auto [base, data] = load_dataset(cfg);
  const auto runs = data::ingest_csv(artifact(base, files::kRuns).string(), base.data.sampling_period_min);
  std::vector<eval::FddReport> rows;
  auto run_variant = [&](PipelineConfig c, const std::string& name, const std::vector<data::SensorRun>& variant_runs) {
    log_info("ablate: variant " + name);
    auto o = run_all(c, variant_runs);
    o.unsupervised.name = name;
    rows.push_back(o.unsupervised);
  };
  if (axis == "ssl-tasks") {
    const std::pair<const char*, std::pair<bool, bool>> variants[] = {
        {"rec-only", {true, false}}, {"cont-only", {false, true}}, {"both", {true, true}}};
    for (const auto& [name, tasks] : variants) {
      PipelineConfig c = base;
      c.pretrain.use_reconstruction = tasks.first;
      c.pretrain.use_contrastive = tasks.second;
      run_variant(c, name, runs);
    }
  } else if (axis == "mining") {
    for (auto mode : {scan::MiningMode::kChunked, scan::MiningMode::kNaive}) {
      PipelineConfig c = base;
      c.scan.mining = mode;
      run_variant(c, scan::to_string(mode), runs);
    }
  } else if (axis == "n-clusters") {
    std::vector<int> values = cfg.ablate.n_clusters;
    const int q = static_cast<int>(data.states.size());
    if (values.empty()) values = {std::max(2, q - 2), q, q + 4, 2 * q};
    for (int m : values) {
      PipelineConfig c = base;
      c.scan.n_clusters = m;
      c.model.n_clusters = m;
      run_variant(c, "M=" + std::to_string(m), runs);
    }
  } else if (axis == "fault-subset") {
    auto subsets = cfg.ablate.fault_subsets;
    if (subsets.empty())
      for (int s : data.states)
        if (s != 0) subsets.push_back({s});
    for (const auto& subset : subsets) {
      std::string name = "faults";
      for (int s : subset) name += " " + std::to_string(s);
      run_variant(base, name, filter_states(runs, subset));
    }
  } else {
    throw ValidationError("unknown ablation axis '" + axis + "'");
  }
  const std::string stem = "ablate_" + axis;
  ordered_json j = {{"schema_version", eval::kReportSchemaVersion}, {"axis", axis}};
  ordered_json variants = ordered_json::array();
  for (const auto& r : rows) variants.push_back(ordered_json::parse(eval::format_report(r)));
  j["variants"] = variants;
  detail::write_file(artifact(base, stem + ".json").string(), j.dump(2) + "\n");
  const auto table = eval::render_comparison(rows, state_names(base));
  detail::write_file(artifact(base, stem + ".txt").string(), table);
  log_info(stem + ":\n" + table);
}

void cmd_report(const PipelineConfig& cfg) {
  std::vector<eval::FddReport> reports;
  for (const char* stem : {"report_unsupervised", "report_finetuned", "report_baseline"}) {
    const auto path = artifact(cfg, std::string(stem) + ".json");
    if (!fs::exists(path)) continue;
    reports.push_back(eval::read_report(path.string()));
    const auto table = eval::render_table(reports.back(), state_names(cfg));
    detail::write_file(artifact(cfg, std::string(stem) + ".txt").string(), table);
    log_info(std::string(stem) + ":\n" + table);
  }
  if (reports.empty())
    throw MissingArtifactError("evaluate", "no reports in " + cfg.workdir + "; run `sensorscan evaluate` first");
  if (reports.size() > 1)
    detail::write_file(artifact(cfg, "comparison.txt").string(), eval::render_comparison(reports, state_names(cfg)));
}

}  // namespace sensorscan::pipeline
