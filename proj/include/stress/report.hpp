#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stress/harness.hpp"
#include "stress/metrics.hpp"

namespace stress {

inline constexpr std::string_view kResultsSchema = "stress-results/1";

std::string_view status_name(ResultStatus s) noexcept;
std::optional<ResultStatus> parse_status(std::string_view s) noexcept;

// Long-format results CSV. The first line is "# stress-results/1"; values are
// shortest round-trip decimals, NA when absent.
void write_results_csv(const std::vector<MetricResult>& rows, std::ostream& os);
// Accepts files with or without the schema line; n and status columns are
// optional (status defaults from the value).
std::vector<MetricResult> parse_results_csv(std::string_view text, const std::string& source = "results");

// results.csv + metadata.json in dir.
void write_results(const ResultTable& rt, const std::filesystem::path& dir);
// A results directory or a results CSV (metadata.json next to it is used when present).
ResultTable read_results(const std::filesystem::path& path);

// hi - lo computed exactly on the shortest decimal forms of both values and
// rounded once, so 0.88 - 0.87 gives 0.01.
double decimal_difference(double hi, double lo);

struct DisparityRow {
  std::string dataset;
  std::string class_name;
  Metric metric = Metric::AUC;
  std::string kind;
  int level = 0;
  std::vector<std::pair<std::string, std::optional<double>>> values;  // subgroup order
  std::optional<double> gap;  // max - min over defined values
  std::string worst;          // lowest value, or highest for FPR/ECE; ties by name
  std::vector<std::string> undefined;
};

// One row per (dataset, class, metric, kind, level) over subgroups other
// than "All".
std::vector<DisparityRow> disparity_table(const ResultTable& rt);
void write_disparity(const std::vector<DisparityRow>& rows, const std::vector<std::string>& subgroups,
                     const std::filesystem::path& path);

void write_trends(const std::vector<TrendSummary>& trends, const std::filesystem::path& path);
// compare.csv (per-cell diffs) and stability.csv.
void write_comparison(const Comparison& cmp, const std::filesystem::path& dir);

struct PlotStyle {
  int width = 640;
  int height = 400;
  int margin_left = 60;
  int margin_right = 150;
  int margin_top = 40;
  int margin_bottom = 50;
  std::vector<std::string> palette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                      "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  nlohmann::json to_json() const;
};

std::string render_plot(const ResultTable& rt, Metric metric, const std::string& class_name,
                        const std::string& kind, const PlotStyle& style = {});

// One SVG per (class, kind) under dir/<metric>/<class>__<kind>.svg. Returns
// the written paths in order.
std::vector<std::filesystem::path> emit_plots(const ResultTable& rt, Metric metric,
                                              const std::filesystem::path& dir,
                                              const PlotStyle& style = {});

struct ReportOptions {
  double monotone_epsilon = kDefaultMonotoneEpsilon;
  bool plots = true;
  PlotStyle style;
};

// results.csv, metadata.json, disparity.csv, trends.csv and plots/. The
// report settings are stored under "report" in the metadata.
void write_reports(ResultTable& rt, const std::filesystem::path& dir, const ReportOptions& opts = {});

void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace stress
