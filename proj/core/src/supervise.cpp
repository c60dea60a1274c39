#include "sensorscan/supervise.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sensorscan/nn/optim.hpp"
#include "text.hpp"

namespace sensorscan::supervise {

bool LabelMap::is_matched(int cluster) const {
  return cluster >= 0 && cluster < n_clusters() && matched[static_cast<std::size_t>(cluster)].has_value();
}

int LabelMap::state_of(int cluster) const {
  if (cluster < 0 || cluster >= n_clusters())
    throw Error("label map: cluster " + std::to_string(cluster) + " out of range (map has " +
                std::to_string(n_clusters()) + " clusters)");
  const auto& m = matched[static_cast<std::size_t>(cluster)];
  if (!m) throw Error("label map: cluster " + std::to_string(cluster) + " had no training samples and is unmatched");
  return *m;
}

LabelMap match_counts(std::vector<std::vector<std::int64_t>> counts) {
  LabelMap map;
  map.matched.resize(counts.size());
  for (std::size_t l = 0; l < counts.size(); ++l) {
    const auto& c = counts[l];
    std::int64_t present = 0;
    for (auto v : c) {
      if (v < 0) throw ValidationError("match_labels: negative count");
      if (v > 0) ++present;
    }
    if (present == 0) continue;
    // Normal first so that strict > gives it every tie; faults scanned upward keep the lowest id.
    int best = kNormalState;
    std::int64_t best_score = c.empty() ? 0 : c[0] * (present + 1);
    for (std::size_t q = 1; q < c.size(); ++q)
      if (c[q] > best_score) {
        best = static_cast<int>(q);
        best_score = c[q];
      }
    map.matched[l] = best;
  }
  map.counts = std::move(counts);
  return map;
}

LabelMap match_labels(const std::vector<int>& clusters, const std::vector<int>& labels, int n_clusters) {
  if (clusters.size() != labels.size()) throw ValidationError("match_labels: assignments and labels differ in length");
  int n_states = 1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw ValidationError("match_labels: negative state id");
    if (clusters[i] < 0 || clusters[i] >= n_clusters) throw ValidationError("match_labels: cluster id out of range");
    n_states = std::max(n_states, labels[i] + 1);
  }
  std::vector<std::vector<std::int64_t>> counts(static_cast<std::size_t>(n_clusters),
                                                std::vector<std::int64_t>(static_cast<std::size_t>(n_states), 0));
  for (std::size_t i = 0; i < labels.size(); ++i)
    ++counts[static_cast<std::size_t>(clusters[i])][static_cast<std::size_t>(labels[i])];
  return match_counts(std::move(counts));
}

std::vector<int> apply_label_map(const LabelMap& map, const std::vector<int>& clusters, UnmatchedPolicy policy) {
  std::vector<int> out(clusters.size());
  std::size_t fallbacks = 0;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    if (policy == UnmatchedPolicy::kNormal && !map.is_matched(clusters[i])) {
      out[i] = kNormalState;
      ++fallbacks;
    } else {
      out[i] = map.state_of(clusters[i]);
    }
  }
  if (fallbacks > 0)
    log_warning(std::to_string(fallbacks) + " samples fell into unmatched clusters and were labeled normal");
  return out;
}

std::vector<int> predict_unsupervised(const std::vector<data::WindowSample>& windows,
                                      model::FeatureExtractor& extractor, model::ClusterHead& head,
                                      const LabelMap& map, UnmatchedPolicy policy) {
  if (head.n_outputs() != map.n_clusters())
    throw ValidationError("predict_unsupervised: head has " + std::to_string(head.n_outputs()) +
                          " clusters but the label map has " + std::to_string(map.n_clusters()));
  const Mat z = extractor.extract_features(windows);
  return apply_label_map(map, model::argmax_rows(head.forward(z, nn::Mode::kEval)), policy);
}

void write_labelmap_csv(const LabelMap& map, const std::string& path) {
  std::string out = "cluster,matched_state,contingency_json\n";
  for (int l = 0; l < map.n_clusters(); ++l) {
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    const auto& c = map.counts[static_cast<std::size_t>(l)];
    for (std::size_t q = 0; q < c.size(); ++q)
      if (c[q] > 0) counts[std::to_string(q)] = c[q];
    std::string js = counts.dump();
    // Quote for CSV: the JSON contains commas and quotes.
    std::string quoted = "\"";
    for (char ch : js) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    quoted += '"';
    out += std::to_string(l) + ',';
    if (map.matched[static_cast<std::size_t>(l)]) out += std::to_string(*map.matched[static_cast<std::size_t>(l)]);
    out += ',' + quoted + '\n';
  }
  detail::write_file(path, out);
}

LabelMap read_labelmap_csv(const std::string& path) {
  const std::string text = detail::read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "cluster,matched_state,contingency_json")
    throw ParseError(path, 1, "expected header cluster,matched_state,contingency_json");
  LabelMap map;
  std::size_t lineno = 1;
  std::size_t n_states = 1;
  std::vector<std::map<std::size_t, std::int64_t>> raw;
  while (std::getline(in, line)) {
    ++lineno;
    const auto s = detail::trim(line);
    if (s.empty()) continue;
    const auto c1 = s.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : s.find(',', c1 + 1);
    if (c2 == std::string_view::npos) throw ParseError(path, lineno, "expected 3 fields");
    int cluster = 0;
    if (!detail::parse_number(s.substr(0, c1), cluster) || cluster != static_cast<int>(raw.size()))
      throw ParseError(path, lineno, "cluster ids must be consecutive from 0");
    const auto state_field = detail::trim(s.substr(c1 + 1, c2 - c1 - 1));
    std::optional<int> state;
    if (!state_field.empty()) {
      int v = 0;
      if (!detail::parse_number(state_field, v) || v < 0) throw ParseError(path, lineno, "bad matched_state");
      state = v;
    }
    auto js_field = std::string(detail::trim(s.substr(c2 + 1)));
    if (js_field.size() < 2 || js_field.front() != '"' || js_field.back() != '"')
      throw ParseError(path, lineno, "contingency_json must be quoted");
    std::string js;
    for (std::size_t i = 1; i + 1 < js_field.size(); ++i) {
      js += js_field[i];
      if (js_field[i] == '"' && js_field[i + 1] == '"') ++i;
    }
    std::map<std::size_t, std::int64_t> counts;
    try {
      const auto parsed = nlohmann::json::parse(js);
      if (!parsed.is_object()) throw std::runtime_error("not an object");
      for (const auto& [k, v] : parsed.items()) {
        const auto q = static_cast<std::size_t>(std::stoul(k));
        counts[q] = v.get<std::int64_t>();
        n_states = std::max(n_states, q + 1);
      }
    } catch (const std::exception& e) {
      throw ParseError(path, lineno, std::string("bad contingency_json: ") + e.what());
    }
    raw.push_back(std::move(counts));
    map.matched.push_back(state);
  }
  for (const auto& r : raw) {
    std::vector<std::int64_t> row(n_states, 0);
    for (const auto& [q, v] : r) row[q] = v;
    map.counts.push_back(std::move(row));
  }
  return map;
}

// ---------------------------------------------------------------------------
// Fine-tuning

void FinetuneConfig::validate() const {
  if (runs_per_state < 1) throw ValidationError("finetune: runs_per_state must be >= 1");
  if (epochs < 0) throw ValidationError("finetune: epochs must be >= 0");
  if (!(lr > 0)) throw ValidationError("finetune: lr must be > 0");
  if (weight_decay < 0) throw ValidationError("finetune: weight_decay must be >= 0");
  if (!(label_smoothing >= 0 && label_smoothing < 1))
    throw ValidationError("finetune: label_smoothing must lie in [0, 1)");
  if (batch < 2) throw ValidationError("finetune: batch must be >= 2");
}

std::vector<std::string> select_labeled_runs(const std::vector<data::SensorRun>& runs, int per_state,
                                             std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_state;
  for (std::size_t i = 0; i < runs.size(); ++i) by_state[runs[i].fault_label].push_back(i);
  std::vector<std::size_t> chosen;
  for (auto& [state, ids] : by_state) {
    if (static_cast<int>(ids.size()) < per_state)
      throw ValidationError("finetune: state " + std::to_string(state) + " has only " + std::to_string(ids.size()) +
                            " runs, fewer than the " + std::to_string(per_state) + " requested");
    Rng rng(mix_seed(seed, 0xF17, static_cast<std::uint64_t>(state)));
    std::sample(ids.begin(), ids.end(), std::back_inserter(chosen), static_cast<std::size_t>(per_state), rng);
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<std::string> out;
  for (auto i : chosen) out.push_back(runs[i].run_id);
  return out;
}

Mat smoothed_targets(const std::vector<int>& classes, int n_classes, double eps) {
  Mat t = Mat::Constant(static_cast<Eigen::Index>(classes.size()), n_classes, static_cast<Real>(eps / n_classes));
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= n_classes) throw ValidationError("smoothed_targets: class out of range");
    t(static_cast<Eigen::Index>(i), classes[i]) += static_cast<Real>(1.0 - eps);
  }
  return t;
}

CrossEntropy smoothed_cross_entropy(const Mat& logits, const std::vector<int>& classes, double eps) {
  if (static_cast<std::size_t>(logits.rows()) != classes.size() || classes.empty())
    throw ValidationError("cross_entropy: logits and labels differ in length");
  const Mat t = smoothed_targets(classes, static_cast<int>(logits.cols()), eps);
  const Mat p = nn::softmax_rows(logits);
  const double inv_n = 1.0 / static_cast<double>(classes.size());
  CrossEntropy out;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = static_cast<double>(logits.row(i).maxCoeff());
    double lse = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) lse += std::exp(static_cast<double>(logits(i, j)) - mx);
    lse = mx + std::log(lse);
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      out.value -= static_cast<double>(t(i, j)) * (static_cast<double>(logits(i, j)) - lse);
  }
  out.value *= inv_n;
  out.grad = (p - t) * static_cast<Real>(inv_n);
  return out;
}

nn::ParamRefs Classifier::parameters() {
  auto out = extractor.parameters();
  head.collect(out);
  return out;
}

int Classifier::class_of(int state) const {
  const auto it = std::lower_bound(states.begin(), states.end(), state);
  if (it == states.end() || *it != state) throw ValidationError("classifier: unknown state " + std::to_string(state));
  return static_cast<int>(it - states.begin());
}

FinetuneResult finetune(model::FeatureExtractor pretrained, const std::vector<data::WindowSample>& labeled,
                        const FinetuneConfig& cfg, const std::function<void(const FinetuneEpoch&)>& on_epoch) {
  cfg.validate();
  if (labeled.size() < 2) throw ValidationError("finetune: need at least 2 labeled windows");
  FinetuneResult result;
  Classifier& clf = result.classifier;
  for (const auto& w : labeled) clf.states.push_back(w.label);
  std::sort(clf.states.begin(), clf.states.end());
  clf.states.erase(std::unique(clf.states.begin(), clf.states.end()), clf.states.end());
  if (clf.states.size() < 2) throw ValidationError("finetune: labeled windows cover fewer than 2 states");
  clf.extractor = std::move(pretrained);
  Rng init_rng(mix_seed(cfg.seed, 0xF1E));
  clf.head = model::ClusterHead(clf.extractor.config().embedding_dim, static_cast<int>(clf.states.size()), init_rng,
                                "classifier_head");

  std::vector<int> classes(labeled.size());
  for (std::size_t i = 0; i < labeled.size(); ++i) classes[i] = clf.class_of(labeled[i].label);

  nn::AdamOptions opts;
  opts.weight_decay = cfg.weight_decay;
  nn::Adam optimizer({nn::ParamGroup{clf.parameters(), cfg.lr}}, opts);
  std::vector<std::size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto b = static_cast<std::size_t>(cfg.batch);
  std::vector<int> batch_classes;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0xF5A, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    FinetuneEpoch stats;
    stats.epoch = epoch;
    std::size_t seen = 0, correct = 0;
    int batches = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += b) {
      const std::size_t end = std::min(order.size(), start + b);
      const std::span<const std::size_t> ids(order.data() + start, end - start);
      batch_classes.clear();
      for (auto id : ids) batch_classes.push_back(classes[id]);
      Rng drop_rng(mix_seed(mix_seed(cfg.seed, 0xFD0), static_cast<std::uint64_t>(epoch), start));
      model::FeatureExtractor::Cache ec;
      model::MlpHead::Cache hc;
      const Mat z = clf.extractor.forward(model::stack_windows(labeled, ids), nn::Mode::kTrain, &drop_rng, &ec);
      const Mat logits = clf.head.logits(z, nn::Mode::kTrain, &hc);
      const CrossEntropy ce = smoothed_cross_entropy(logits, batch_classes, cfg.label_smoothing);
      const Mat dz = clf.head.mlp.backward(ce.grad, hc);
      clf.extractor.backward(dz, Mat(), ec);
      optimizer.step();
      const auto pred = model::argmax_rows(logits);
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch_classes[i] ? 1 : 0;
      seen += pred.size();
      stats.loss += ce.value;
      ++batches;
    }
    if (batches > 0) stats.loss /= batches;
    stats.train_accuracy = seen > 0 ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

Mat predict_proba(Classifier& classifier, const std::vector<data::WindowSample>& windows) {
  return classifier.head.forward(classifier.extractor.extract_features(windows), nn::Mode::kEval);
}

std::vector<int> predict_supervised(Classifier& classifier, const std::vector<data::WindowSample>& windows) {
  auto idx = model::argmax_rows(predict_proba(classifier, windows));
  for (auto& i : idx) i = classifier.states[static_cast<std::size_t>(i)];
  return idx;
}

}  // namespace sensorscan::supervise
