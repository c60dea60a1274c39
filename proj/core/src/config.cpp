#include "sensorscan/config.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "text.hpp"

namespace sensorscan::config {

using nlohmann::ordered_json;

std::vector<data::FaultDescriptor> default_faults() {
  using data::FaultKind;
  return {
      {FaultKind::kStep, {0, 1}, 2.0},
      {FaultKind::kRandomVariation, {2, 3}, 2.0},
      {FaultKind::kSlowDrift, {4, 5}, 0.03},
      {FaultKind::kSticking, {6, 7}, 1.0},
  };
}

PipelineConfig default_config() {
  PipelineConfig cfg;
  cfg.data.synthetic.faults = default_faults();
  cfg.propagate();
  return cfg;
}

void PipelineConfig::propagate() {
  data.synthetic.seed = mix_seed(seed, 0xDA7A);
  data.synthetic.sampling_period_min = data.sampling_period_min;
  pretrain.seed = mix_seed(seed, 0x9E7);
  scan.seed = mix_seed(seed, 0x5CA9);
  finetune.seed = mix_seed(seed, 0xF19E);
  model.window = data.window;
  if (!data.channels.empty())
    model.channels = static_cast<int>(data.channels.size());
  else if (!data.runs_csv)
    model.channels = data.synthetic.channels;
  model.n_clusters = scan.n_clusters;
}

void PipelineConfig::validate() const {
  if (data.window < 1) throw ValidationError("config: data.window must be >= 1");
  if (data.step < 1) throw ValidationError("config: data.step must be >= 1");
  if (eval.step < 1) throw ValidationError("config: eval.step must be >= 1");
  if (data.runs_per_state < 1) throw ValidationError("config: data.runs_per_state must be >= 1");
  if (!(data.train_fraction > 0 && data.train_fraction < 1))
    throw ValidationError("config: data.train_fraction must lie in (0, 1)");
  if (!(data.sampling_period_min > 0)) throw ValidationError("config: data.sampling_period_min must be > 0");
  if (data.unbalance && (data.unbalance_normal < 1 || data.unbalance_per_fault < 1))
    throw ValidationError("config: unbalancing counts must be >= 1");
  if (!data.runs_csv) {
    data.synthetic.validate();
    if (data.window > data.synthetic.run_length)
      throw ValidationError("config: data.window exceeds the synthetic run length");
  }
  if (eval.baseline_dims < 1) throw ValidationError("config: eval.baseline_dims must be >= 1");
  if (workdir.empty()) throw ValidationError("config: workdir must not be empty");
  model.validate();
  pretrain.validate(data.window);
  scan.validate();
  finetune.validate();
  if (ablate.axis != "ssl-tasks" && ablate.axis != "mining" && ablate.axis != "n-clusters" &&
      ablate.axis != "fault-subset")
    throw ValidationError("config: unknown ablation axis '" + ablate.axis +
                          "' (expected ssl-tasks, mining, n-clusters or fault-subset)");
  for (int m : ablate.n_clusters)
    if (m < 2) throw ValidationError("config: ablate.n_clusters values must be >= 2");
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace {

ordered_json fault_json(const data::FaultDescriptor& f) {
  return {{"kind", data::to_string(f.kind)}, {"channels", f.channels}, {"magnitude", f.magnitude}};
}

ordered_json data_json(const DataConfig& d) {
  const auto& s = d.synthetic;
  ordered_json faults = ordered_json::array();
  for (const auto& f : s.faults) faults.push_back(fault_json(f));
  return {
      {"runs_csv", d.runs_csv ? ordered_json(*d.runs_csv) : ordered_json(nullptr)},
      {"synthetic",
       {{"channels", s.channels},
        {"run_length", s.run_length},
        {"onset", s.onset},
        {"noise_std", s.noise_std},
        {"ar_coeff", s.ar_coeff},
        {"baseline_spread", s.baseline_spread},
        {"faults", faults}}},
      {"runs_per_state", d.runs_per_state},
      {"window", d.window},
      {"step", d.step},
      {"channels", d.channels},
      {"unbalance", {{"enabled", d.unbalance}, {"normal", d.unbalance_normal}, {"per_fault", d.unbalance_per_fault}}},
      {"train_fraction", d.train_fraction},
      {"sampling_period_min", d.sampling_period_min},
  };
}

ordered_json model_json(const model::ModelConfig& m) {
  return {{"n_layers", m.n_layers}, {"hidden", m.hidden},   {"ff_dim", m.ff_dim},
          {"heads", m.heads},       {"dropout", m.dropout}, {"embedding_dim", m.embedding_dim}};
}

ordered_json pretrain_json(const ssl::PretrainConfig& p) {
  return {{"epochs", p.epochs},
          {"batch", p.batch},
          {"lr", p.lr},
          {"weight_decay", p.weight_decay},
          {"lambda_cont", p.lambda_cont},
          {"temperature", p.temperature},
          {"mask_ratio", p.mask.masked_ratio()},
          {"mask_mean_length", p.mask.mean_masked_length()},
          {"jitter_std", p.augment.jitter_std},
          {"scale_std", p.augment.scale_std},
          {"scale_mean_weak", p.augment.scale_mean_weak},
          {"scale_mean_strong", p.augment.scale_mean_strong},
          {"permute_chunks", p.augment.n_permute_chunks},
          {"use_reconstruction", p.use_reconstruction},
          {"use_contrastive", p.use_contrastive}};
}

ordered_json scan_json(const scan::ScanConfig& s) {
  return {{"k_neighbors", s.k_neighbors},
          {"n_chunks", s.n_chunks},
          {"lambda_ent", s.lambda_ent},
          {"epochs", s.epochs},
          {"freeze_epochs", s.freeze_epochs},
          {"lr_head", s.lr_head},
          {"lr_extractor", s.lr_extractor},
          {"weight_decay", s.weight_decay},
          {"batch", s.batch},
          {"n_clusters", s.n_clusters},
          {"mining", scan::to_string(s.mining)},
          {"subsample", s.subsample},
          {"literal_entropy_sign", s.literal_entropy_sign}};
}

ordered_json finetune_json(const supervise::FinetuneConfig& f) {
  return {{"runs_per_state", f.runs_per_state}, {"epochs", f.epochs},
          {"lr", f.lr},                         {"weight_decay", f.weight_decay},
          {"label_smoothing", f.label_smoothing}, {"batch", f.batch}};
}

ordered_json eval_json(const EvalConfig& e) {
  return {{"step", e.step},
          {"baseline_dims", e.baseline_dims},
          {"unmatched", e.unmatched == supervise::UnmatchedPolicy::kError ? "error" : "normal"}};
}

ordered_json ablate_json(const AblateConfig& a) {
  return {{"axis", a.axis}, {"n_clusters", a.n_clusters}, {"fault_subsets", a.fault_subsets}};
}

ordered_json full_json(const PipelineConfig& c) {
  return {{"seed", c.seed},
          {"workdir", c.workdir},
          {"data", data_json(c.data)},
          {"model", model_json(c.model)},
          {"pretrain", pretrain_json(c.pretrain)},
          {"scan", scan_json(c.scan)},
          {"finetune", finetune_json(c.finetune)},
          {"eval", eval_json(c.eval)},
          {"ablate", ablate_json(c.ablate)}};
}

const char* type_name(const ordered_json& j) {
  if (j.is_null()) return "null";
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  return "object";
}

bool compatible(const ordered_json& def, const ordered_json& v) {
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return true;
}

// Overlays `user` onto `base`, rejecting keys that base does not have and mistyped values.
void overlay(ordered_json& base, const ordered_json& user, const std::string& path, const std::string& source) {
  if (!user.is_object()) throw ValidationError(source + ": '" + path + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ValidationError(source + ": unknown key '" + where + "'");
    auto& slot = base[key];
    if (key == "runs_csv") {
      if (!value.is_null() && !value.is_string())
        throw ValidationError(source + ": '" + where + "' must be a string or null");
      slot = value;
      continue;
    }
    if (!compatible(slot, value))
      throw ValidationError(source + ": '" + where + "' must be of type " + type_name(slot) + ", got " +
                            type_name(value));
    if (slot.is_object())
      overlay(slot, value, where, source);
    else
      slot = value;
  }
}

template <typename T>
T get(const ordered_json& j, const char* key) {
  return j.at(key).get<T>();
}

data::FaultDescriptor parse_fault(const ordered_json& j, std::size_t i, const std::string& source) {
  const std::string where = source + ": data.synthetic.faults[" + std::to_string(i) + "]";
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [key, v] : j.items())
    if (key != "kind" && key != "channels" && key != "magnitude")
      throw ValidationError(where + ": unknown key '" + key + "'");
  if (!j.contains("kind") || !j.contains("channels"))
    throw ValidationError(where + " needs 'kind' and 'channels'");
  data::FaultDescriptor f;
  f.kind = data::fault_kind_from_string(j.at("kind").get<std::string>());
  f.channels = j.at("channels").get<std::vector<int>>();
  if (j.contains("magnitude")) f.magnitude = j.at("magnitude").get<double>();
  return f;
}

PipelineConfig from_json(const ordered_json& j, const std::string& source) {
  PipelineConfig c;
  c.seed = get<std::uint64_t>(j, "seed");
  c.workdir = get<std::string>(j, "workdir");

  const auto& d = j.at("data");
  if (!d.at("runs_csv").is_null()) c.data.runs_csv = d.at("runs_csv").get<std::string>();
  const auto& s = d.at("synthetic");
  c.data.synthetic.channels = get<int>(s, "channels");
  c.data.synthetic.run_length = get<int>(s, "run_length");
  c.data.synthetic.onset = get<int>(s, "onset");
  c.data.synthetic.noise_std = get<double>(s, "noise_std");
  c.data.synthetic.ar_coeff = get<double>(s, "ar_coeff");
  c.data.synthetic.baseline_spread = get<double>(s, "baseline_spread");
  std::size_t i = 0;
  for (const auto& f : s.at("faults")) c.data.synthetic.faults.push_back(parse_fault(f, i++, source));
  c.data.runs_per_state = get<int>(d, "runs_per_state");
  c.data.window = get<int>(d, "window");
  c.data.step = get<int>(d, "step");
  c.data.channels = get<std::vector<int>>(d, "channels");
  c.data.unbalance = get<bool>(d.at("unbalance"), "enabled");
  c.data.unbalance_normal = get<int>(d.at("unbalance"), "normal");
  c.data.unbalance_per_fault = get<int>(d.at("unbalance"), "per_fault");
  c.data.train_fraction = get<double>(d, "train_fraction");
  c.data.sampling_period_min = get<double>(d, "sampling_period_min");

  const auto& m = j.at("model");
  c.model.n_layers = get<int>(m, "n_layers");
  c.model.hidden = get<int>(m, "hidden");
  c.model.ff_dim = get<int>(m, "ff_dim");
  c.model.heads = get<int>(m, "heads");
  c.model.dropout = get<double>(m, "dropout");
  c.model.embedding_dim = get<int>(m, "embedding_dim");

  const auto& p = j.at("pretrain");
  c.pretrain.epochs = get<int>(p, "epochs");
  c.pretrain.batch = get<int>(p, "batch");
  c.pretrain.lr = get<double>(p, "lr");
  c.pretrain.weight_decay = get<double>(p, "weight_decay");
  c.pretrain.lambda_cont = get<double>(p, "lambda_cont");
  c.pretrain.temperature = get<double>(p, "temperature");
  try {
    c.pretrain.mask = aug::MaskConfig(get<double>(p, "mask_ratio"), get<double>(p, "mask_mean_length"));
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": pretrain: " + e.what());
  }
  c.pretrain.augment.jitter_std = get<double>(p, "jitter_std");
  c.pretrain.augment.scale_std = get<double>(p, "scale_std");
  c.pretrain.augment.scale_mean_weak = get<double>(p, "scale_mean_weak");
  c.pretrain.augment.scale_mean_strong = get<double>(p, "scale_mean_strong");
  c.pretrain.augment.n_permute_chunks = get<int>(p, "permute_chunks");
  c.pretrain.use_reconstruction = get<bool>(p, "use_reconstruction");
  c.pretrain.use_contrastive = get<bool>(p, "use_contrastive");

  const auto& sc = j.at("scan");
  c.scan.k_neighbors = get<int>(sc, "k_neighbors");
  c.scan.n_chunks = get<int>(sc, "n_chunks");
  c.scan.lambda_ent = get<double>(sc, "lambda_ent");
  c.scan.epochs = get<int>(sc, "epochs");
  c.scan.freeze_epochs = get<int>(sc, "freeze_epochs");
  c.scan.lr_head = get<double>(sc, "lr_head");
  c.scan.lr_extractor = get<double>(sc, "lr_extractor");
  c.scan.weight_decay = get<double>(sc, "weight_decay");
  c.scan.batch = get<int>(sc, "batch");
  c.scan.n_clusters = get<int>(sc, "n_clusters");
  c.scan.mining = scan::mining_mode_from_string(get<std::string>(sc, "mining"));
  c.scan.subsample = get<bool>(sc, "subsample");
  c.scan.literal_entropy_sign = get<bool>(sc, "literal_entropy_sign");

  const auto& f = j.at("finetune");
  c.finetune.runs_per_state = get<int>(f, "runs_per_state");
  c.finetune.epochs = get<int>(f, "epochs");
  c.finetune.lr = get<double>(f, "lr");
  c.finetune.weight_decay = get<double>(f, "weight_decay");
  c.finetune.label_smoothing = get<double>(f, "label_smoothing");
  c.finetune.batch = get<int>(f, "batch");

  const auto& e = j.at("eval");
  c.eval.step = get<int>(e, "step");
  c.eval.baseline_dims = get<int>(e, "baseline_dims");
  const auto unmatched = get<std::string>(e, "unmatched");
  if (unmatched == "error")
    c.eval.unmatched = supervise::UnmatchedPolicy::kError;
  else if (unmatched == "normal")
    c.eval.unmatched = supervise::UnmatchedPolicy::kNormal;
  else
    throw ValidationError(source + ": eval.unmatched must be \"error\" or \"normal\"");

  const auto& a = j.at("ablate");
  c.ablate.axis = get<std::string>(a, "axis");
  c.ablate.n_clusters = get<std::vector<int>>(a, "n_clusters");
  c.ablate.fault_subsets = get<std::vector<std::vector<int>>>(a, "fault_subsets");
  return c;
}

}  // namespace

PipelineConfig parse_config(const std::string& json_text, const std::string& source) {
  ordered_json user;
  try {
    user = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, json_text.size());
    const auto line = 1 + static_cast<std::size_t>(std::count(json_text.begin(), json_text.begin() + upto, '\n'));
    throw ParseError(source, line, std::string("invalid JSON: ") + e.what());
  }
  ordered_json merged = full_json(default_config());
  overlay(merged, user, "", source);
  PipelineConfig cfg;
  try {
    cfg = from_json(merged, source);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(source + ": " + e.what());
  }
  cfg.propagate();
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
  return cfg;
}

PipelineConfig load_config(const std::string& path) { return parse_config(detail::read_file(path), path); }

std::string to_json(const PipelineConfig& cfg) { return full_json(cfg).dump(2) + "\n"; }

namespace {

ordered_json schema_of(const ordered_json& v, const std::string& key) {
  if (key == "runs_csv") return {{"type", {"string", "null"}}};
  if (key == "faults")
    return {{"type", "array"},
            {"items",
             {{"type", "object"},
              {"additionalProperties", false},
              {"required", {"kind", "channels"}},
              {"properties",
               {{"kind", {{"enum", {"step", "random_variation", "slow_drift", "sticking"}}}},
                {"channels", {{"type", "array"}, {"items", {{"type", "integer"}}}}},
                {"magnitude", {{"type", "number"}}}}}}}};
  if (key == "mining") return {{"enum", {"chunked", "naive"}}, {"default", v}};
  if (key == "unmatched") return {{"enum", {"error", "normal"}}, {"default", v}};
  if (key == "axis") return {{"enum", {"ssl-tasks", "mining", "n-clusters", "fault-subset"}}, {"default", v}};
  if (key == "fault_subsets")
    return {{"type", "array"}, {"items", {{"type", "array"}, {"items", {{"type", "integer"}}}}}};
  if (v.is_object()) {
    ordered_json props = ordered_json::object();
    for (const auto& [k, child] : v.items()) props[k] = schema_of(child, k);
    return {{"type", "object"}, {"additionalProperties", false}, {"properties", props}};
  }
  if (v.is_array()) return {{"type", "array"}, {"items", {{"type", "integer"}}}};
  ordered_json s = {{"type", type_name(v)}};
  s["default"] = v;
  return s;
}

}  // namespace

std::string config_schema() {
  ordered_json defaults = full_json(default_config());
  ordered_json s = schema_of(defaults, "");
  ordered_json out;
  out["$schema"] = "https://json-schema.org/draft/2020-12/schema";
  out["title"] = "sensorscan pipeline config";
  for (const auto& [k, v] : s.items()) out[k] = v;
  return out.dump(2) + "\n";
}

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::kDataset: return "synth/ingest";
    case Stage::kPretrain: return "pretrain";
    case Stage::kMine: return "mine";
    case Stage::kCluster: return "cluster";
    case Stage::kMatch: return "match";
    case Stage::kFinetune: return "finetune";
    case Stage::kEvaluate: return "evaluate";
  }
  return "?";
}

std::uint64_t stage_fingerprint(const PipelineConfig& cfg, Stage stage) {
  const auto all = full_json(cfg);
  ordered_json parts;
  parts["stage"] = stage_name(stage);
  parts["seed"] = all["seed"];
  parts["data"] = all["data"];
  if (stage != Stage::kDataset) {
    parts["model"] = all["model"];
    parts["pretrain"] = all["pretrain"];
  }
  if (stage == Stage::kMine) {
    const auto& s = all["scan"];
    parts["scan"] = {{"k_neighbors", s["k_neighbors"]}, {"n_chunks", s["n_chunks"]}, {"mining", s["mining"]}};
  }
  if (stage == Stage::kCluster || stage == Stage::kMatch || stage == Stage::kEvaluate) parts["scan"] = all["scan"];
  if (stage == Stage::kFinetune || stage == Stage::kEvaluate) parts["finetune"] = all["finetune"];
  if (stage == Stage::kEvaluate) parts["eval"] = all["eval"];
  return fnv1a(parts.dump());
}

}  // namespace sensorscan::config
