#pragma once

#include <map>
#include <string>
#include <vector>

#include "sensorscan/eval.hpp"

namespace sensorscan::eval {

inline constexpr int kReportSchemaVersion = 1;

// JSON document with a schema_version field; parse_report(format_report(r)) == r.
std::string format_report(const FddReport& report);
FddReport parse_report(const std::string& text, const std::string& source = "<memory>");
void write_report(const FddReport& report, const std::string& path);
FddReport read_report(const std::string& path);

// Optional display names per state id.
using StateNames = std::map<int, std::string>;

// Per-fault TPR/FPR block followed by the aggregate block, rates with 2 decimals.
std::string render_table(const FddReport& report, const StateNames& names = {});

// One column per report; rows match render_table.
std::string render_comparison(const std::vector<FddReport>& reports, const StateNames& names = {});

struct MetricSummary {
  std::string metric;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over the defined values
  int count = 0;     // number of reports in which the metric was defined
};

// Mean and standard deviation of every metric across reports (e.g. one per seed).
std::vector<MetricSummary> summarize(const std::vector<FddReport>& reports);
std::string format_summary_json(const std::vector<MetricSummary>& summary, int n_reports);
std::string render_summary(const std::vector<MetricSummary>& summary);

}  // namespace sensorscan::eval
