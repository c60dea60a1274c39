#include "sensorscan/report.hpp"

#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "text.hpp"

namespace sensorscan::eval {

using nlohmann::ordered_json;

namespace {

ordered_json optional_value(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::optional<double> read_optional(const ordered_json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fixed2(const std::optional<double>& v) { return v ? fixed2(*v) : "n/a"; }

std::string state_name(int state, const StateNames& names) {
  const auto it = names.find(state);
  return it != names.end() ? it->second : "fault " + std::to_string(state);
}

std::string pad(const std::string& s, std::size_t width) { return s.size() >= width ? s : s + std::string(width - s.size(), ' '); }
std::string lpad(const std::string& s, std::size_t width) { return s.size() >= width ? s : std::string(width - s.size(), ' ') + s; }

}  // namespace

std::string format_report(const FddReport& r) {
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["name"] = r.name;
  j["fingerprint"] = r.fingerprint;
  j["normal_samples"] = r.normal_samples;
  j["faulty_samples"] = r.faulty_samples;
  ordered_json faults = ordered_json::array();
  for (const auto& f : r.per_fault)
    faults.push_back({{"state", f.state}, {"samples", f.samples}, {"tpr", f.tpr}, {"fpr", f.fpr}});
  j["per_fault"] = faults;
  j["aggregate"] = {{"detection_tpr", r.detection_tpr},
                    {"detection_fpr", r.detection_fpr},
                    {"cdr", optional_value(r.cdr)},
                    {"add_samples", optional_value(r.add_samples)},
                    {"add_minutes", optional_value(r.add_minutes)}};
  if (r.clustering)
    j["clustering"] = {{"acc", r.clustering->acc}, {"nmi", r.clustering->nmi}, {"ari", r.clustering->ari}};
  else
    j["clustering"] = nullptr;
  return j.dump(2) + "\n";
}

FddReport parse_report(const std::string& text, const std::string& source) {
  FddReport r;
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    throw ParseError(source, 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + upto, '\n')),
                     std::string("malformed report: ") + e.what());
  }
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kReportSchemaVersion)
      throw ValidationError(source + ": unsupported report schema_version " + std::to_string(version));
    r.name = j.at("name").get<std::string>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.normal_samples = j.at("normal_samples").get<std::int64_t>();
    r.faulty_samples = j.at("faulty_samples").get<std::int64_t>();
    for (const auto& f : j.at("per_fault"))
      r.per_fault.push_back({f.at("state").get<int>(), f.at("samples").get<std::int64_t>(), f.at("tpr").get<double>(),
                             f.at("fpr").get<double>()});
    const auto& a = j.at("aggregate");
    r.detection_tpr = a.at("detection_tpr").get<double>();
    r.detection_fpr = a.at("detection_fpr").get<double>();
    r.cdr = read_optional(a, "cdr");
    r.add_samples = read_optional(a, "add_samples");
    r.add_minutes = read_optional(a, "add_minutes");
    const auto& c = j.at("clustering");
    if (!c.is_null()) r.clustering = ClusteringScores{c.at("acc").get<double>(), c.at("nmi").get<double>(), c.at("ari").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(source + ": malformed report: " + e.what());
  }
  return r;
}

void write_report(const FddReport& report, const std::string& path) { detail::write_file(path, format_report(report)); }

FddReport read_report(const std::string& path) { return parse_report(detail::read_file(path), path); }

std::string render_table(const FddReport& report, const StateNames& names) { return render_comparison({report}, names); }

std::string render_comparison(const std::vector<FddReport>& reports, const StateNames& names) {
  if (reports.empty()) return "";
  std::vector<int> states;
  for (const auto& r : reports)
    for (const auto& f : r.per_fault)
      if (std::find(states.begin(), states.end(), f.state) == states.end()) states.push_back(f.state);
  std::sort(states.begin(), states.end());

  std::size_t label_w = 14;
  for (int s : states) label_w = std::max(label_w, state_name(s, names).size() + 2);
  std::vector<std::size_t> col_w;
  for (const auto& r : reports) col_w.push_back(std::max<std::size_t>(20, r.name.size() + 2));

  std::string out;
  auto row = [&](const std::string& label, const std::vector<std::string>& cells) {
    std::string line = pad(label, label_w);
    for (std::size_t i = 0; i < cells.size(); ++i) line += lpad(cells[i], col_w[i]);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  };
  std::vector<std::string> header;
  for (const auto& r : reports) header.push_back(r.name.empty() ? "TPR / FPR" : r.name);
  row("Fault", header);
  for (int s : states) {
    std::vector<std::string> cells;
    for (const auto& r : reports) {
      const FaultRates* f = find_fault(r, s);
      cells.push_back(f ? fixed2(f->tpr) + " / " + fixed2(f->fpr) : "-");
    }
    row(state_name(s, names), cells);
  }
  out += '\n';
  std::vector<std::string> blank(reports.size(), "");
  row("Aggregate", blank);
  std::vector<std::string> tpr, fpr, cdr, add;
  for (const auto& r : reports) {
    tpr.push_back(fixed2(r.detection_tpr));
    fpr.push_back(fixed2(r.detection_fpr));
    cdr.push_back(fixed2(r.cdr));
    // samples, then minutes
    add.push_back(r.add_samples ? fixed2(r.add_samples) + " (" + fixed2(r.add_minutes) + " min)" : "n/a");
  }
  row("Detection TPR", tpr);
  row("Detection FPR", fpr);
  row("CDR", cdr);
  row("ADD", add);
  bool any_clustering = false;
  for (const auto& r : reports) any_clustering |= r.clustering.has_value();
  if (any_clustering) {
    out += '\n';
    std::vector<std::string> a, n, ar;
    for (const auto& r : reports) {
      a.push_back(r.clustering ? fixed2(r.clustering->acc) : "-");
      n.push_back(r.clustering ? fixed2(r.clustering->nmi) : "-");
      ar.push_back(r.clustering ? fixed2(r.clustering->ari) : "-");
    }
    row("ACC", a);
    row("NMI", n);
    row("ARI", ar);
  }
  return out;
}

std::vector<MetricSummary> summarize(const std::vector<FddReport>& reports) {
  std::vector<std::pair<std::string, std::vector<double>>> series;
  auto add = [&](const std::string& name, const std::optional<double>& v) {
    auto it = std::find_if(series.begin(), series.end(), [&](const auto& s) { return s.first == name; });
    if (it == series.end()) {
      series.emplace_back(name, std::vector<double>{});
      it = series.end() - 1;
    }
    if (v) it->second.push_back(*v);
  };
  for (const auto& r : reports) {
    for (const auto& f : r.per_fault) {
      add("tpr_" + std::to_string(f.state), f.tpr);
      add("fpr_" + std::to_string(f.state), f.fpr);
    }
    add("detection_tpr", r.detection_tpr);
    add("detection_fpr", r.detection_fpr);
    add("cdr", r.cdr);
    add("add_samples", r.add_samples);
    add("add_minutes", r.add_minutes);
    if (r.clustering) {
      add("acc", r.clustering->acc);
      add("nmi", r.clustering->nmi);
      add("ari", r.clustering->ari);
    }
  }
  std::vector<MetricSummary> out;
  for (const auto& [name, values] : series) {
    MetricSummary m;
    m.metric = name;
    m.count = static_cast<int>(values.size());
    if (!values.empty()) {
      double s = 0.0;
      for (double v : values) s += v;
      m.mean = s / static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += (v - m.mean) * (v - m.mean);
      m.std = std::sqrt(ss / static_cast<double>(values.size()));
    }
    out.push_back(m);
  }
  return out;
}

std::string format_summary_json(const std::vector<MetricSummary>& summary, int n_reports) {
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["runs"] = n_reports;
  ordered_json metrics = ordered_json::object();
  for (const auto& m : summary) metrics[m.metric] = {{"mean", m.mean}, {"std", m.std}, {"count", m.count}};
  j["metrics"] = metrics;
  return j.dump(2) + "\n";
}

std::string render_summary(const std::vector<MetricSummary>& summary) {
  std::string out;
  for (const auto& m : summary) {
    if (m.count == 0) {
      out += pad(m.metric, 16) + "n/a\n";
      continue;
    }
    out += pad(m.metric, 16) + fixed2(m.mean) + " ± " + fixed2(m.std) + '\n';
  }
  return out;
}

}  // namespace sensorscan::eval
