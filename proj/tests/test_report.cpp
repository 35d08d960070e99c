#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "stress/error.hpp"
#include "stress/report.hpp"
#include "support.hpp"

using namespace stress;
using testing_support::TempDir;

namespace {

MetricResult row(std::string subgroup, std::optional<double> v, std::string kind = "clean", int level = 0,
                 Metric m = Metric::AUC, std::string cls = "a") {
  MetricResult r{"d", std::move(cls), std::move(subgroup), std::move(kind), level, m, v, 10, ResultStatus::Ok};
  if (!v) r.status = ResultStatus::Undefined;
  return r;
}

ResultTable table(std::vector<MetricResult> rows, std::vector<std::string> groups) {
  ResultTable rt;
  rt.rows = std::move(rows);
  rt.meta.dataset = "d";
  rt.meta.class_names = {"a"};
  rt.meta.subgroup_names = std::move(groups);
  rt.meta.thresholds = {ThresholdPolicy::Fixed, {0.5}};
  return rt;
}

// Five subgroups with the AUC values of the motivating example.
ResultTable five_groups() {
  const std::vector<std::pair<std::string, double>> values = {
      {"Asian", 0.87}, {"Black", 0.88}, {"Female", 0.88}, {"Male", 0.87}, {"White", 0.87}};
  std::vector<MetricResult> rows = {row("All", 0.875)};
  std::vector<std::string> groups = {"All"};
  for (const auto& [g, v] : values) {
    rows.push_back(row(g, v));
    groups.push_back(g);
  }
  return table(rows, groups);
}

std::vector<std::string> tick_labels(const std::string& svg) {
  static const std::regex tick(R"re(text-anchor="middle">([+-]?\d+)</text>)re");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), tick); it != std::sregex_iterator(); ++it)
    out.push_back((*it)[1]);
  return out;
}

}  // namespace

TEST(ResultsCsv, RoundTripKeepsEveryField) {
  std::vector<MetricResult> rows = {row("All", 0.1 + 0.2), row("g", std::nullopt, "gamma", -3, Metric::ECE),
                                    row("g", 1.0 / 3.0, "blur", 6, Metric::FPR, "b,c")};
  rows.push_back(row("h", std::nullopt, "blur", 2));
  rows.back().status = ResultStatus::Failed;
  rows.back().n = 7;
  std::ostringstream os;
  write_results_csv(rows, os);
  const auto text = os.str();
  EXPECT_EQ(text.rfind("# stress-results/1\n", 0), 0u);
  EXPECT_NE(text.find(",NA,"), std::string::npos);
  EXPECT_EQ(parse_results_csv(text), rows);
}

TEST(ResultsCsv, OptionalColumnsAndBadSchema) {
  const auto rows = parse_results_csv("dataset,class,subgroup,kind,level,metric,value\nd,a,All,clean,0,AUC,0.5\n"
                                      "d,a,x,clean,0,AUC,NA\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].status, ResultStatus::Ok);
  EXPECT_EQ(rows[1].status, ResultStatus::Undefined);
  EXPECT_THROW(parse_results_csv("# other/2\ndataset\n"), Error);
  EXPECT_THROW(parse_results_csv("dataset,class,subgroup,kind,level,metric,value\nd,a,All,clean,0,XYZ,0.5\n"), Error);
}

TEST(ResultsCsv, DirectoryRoundTripWithMetadata) {
  TempDir dir;
  auto rt = five_groups();
  rt.meta.config_hash = "h";
  write_results(rt, dir.path());
  const auto back = read_results(dir.path());
  EXPECT_EQ(back.rows, rt.rows);
  EXPECT_EQ(back.meta.to_json(), rt.meta.to_json());
  const auto from_csv = read_results(dir / "results.csv");
  EXPECT_EQ(from_csv.rows, rt.rows);
}

TEST(DecimalDifference, ExactOnShortestForms) {
  EXPECT_NE(0.88 - 0.87, 0.01);
  EXPECT_EQ(decimal_difference(0.88, 0.87), 0.01);
  EXPECT_EQ(decimal_difference(0.3, 0.1), 0.2);
  EXPECT_EQ(decimal_difference(1.0, 0.0), 1.0);
  EXPECT_EQ(decimal_difference(0.5, 0.5), 0.0);
  EXPECT_EQ(decimal_difference(0.123456789, 0.1), 0.023456789);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    double a = u(rng);
    double b = u(rng);
    if (a < b) std::swap(a, b);
    EXPECT_NEAR(decimal_difference(a, b), a - b, 1e-15);
  }
}

TEST(Disparity, GapOfFiveSubgroupsIsExact) {
  const auto rows = disparity_table(five_groups());
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(*rows[0].gap, 0.01);
  EXPECT_EQ(rows[0].worst, "Asian");
  EXPECT_EQ(rows[0].values.size(), 5u);
  EXPECT_TRUE(rows[0].undefined.empty());
}

TEST(Disparity, EqualValuesGiveZeroGap) {
  const auto rt = table({row("All", 0.7), row("x", 0.7), row("y", 0.7)}, {"All", "x", "y"});
  const auto rows = disparity_table(rt);
  EXPECT_EQ(*rows[0].gap, 0.0);
  EXPECT_EQ(rows[0].worst, "x");
}

TEST(Disparity, UndefinedSubgroupIsListedNotCounted) {
  const auto rt = table({row("All", 0.7), row("x", 0.9), row("y", std::nullopt), row("z", 0.6)}, {"All", "x", "y", "z"});
  const auto rows = disparity_table(rt);
  EXPECT_EQ(rows[0].undefined, std::vector<std::string>{"y"});
  EXPECT_EQ(*rows[0].gap, decimal_difference(0.9, 0.6));
  EXPECT_EQ(rows[0].worst, "z");
  const auto lone = disparity_table(table({row("All", 0.7), row("x", 0.9), row("y", std::nullopt)}, {"All", "x", "y"}));
  EXPECT_EQ(*lone[0].gap, 0.0);
  const auto none = disparity_table(table({row("All", 0.7), row("y", std::nullopt)}, {"All", "y"}));
  EXPECT_FALSE(none[0].gap.has_value());
}

TEST(Disparity, WorstFollowsMetricDirection) {
  const auto rt = table({row("p", 0.1, "clean", 0, Metric::FPR), row("q", 0.3, "clean", 0, Metric::FPR),
                         row("p", 0.1, "clean", 0, Metric::ECE), row("q", 0.05, "clean", 0, Metric::ECE)},
                        {"All", "p", "q"});
  for (const auto& r : disparity_table(rt)) EXPECT_EQ(r.worst, r.metric == Metric::FPR ? "q" : "p");
}

TEST(Disparity, InvariantUnderRowPermutation) {
  auto rt = five_groups();
  for (int level = 1; level <= 3; ++level)
    for (const auto& g : rt.meta.subgroup_names) rt.rows.push_back(row(g, 0.8 - 0.01 * level, "gamma", level));
  const auto reference = disparity_table(rt);
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(rt.rows.begin(), rt.rows.end(), rng);
    const auto rows = disparity_table(rt);
    ASSERT_EQ(rows.size(), reference.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      EXPECT_EQ(rows[i].gap, reference[i].gap);
      EXPECT_EQ(rows[i].worst, reference[i].worst);
      EXPECT_EQ(rows[i].values, reference[i].values);
    }
  }
}

TEST(Disparity, CsvHasValueColumnPerSubgroup) {
  TempDir dir;
  const auto rt = five_groups();
  write_disparity(disparity_table(rt), rt.meta.subgroup_names, dir / "disparity.csv");
  const auto text = testing_support::read_file(dir / "disparity.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "dataset,class,metric,kind,level,gap,worst_subgroup,undefined_subgroups,value:Asian,value:Black,"
            "value:Female,value:Male,value:White");
  EXPECT_NE(text.find("d,a,AUC,clean,0,0.01,Asian,,0.87,0.88,0.88,0.87,0.87"), std::string::npos);
}

TEST(Plots, DomainCoversLevelsAndClean) {
  std::vector<MetricResult> rows = {row("All", 0.9)};
  for (int l : {-3, -2, -1, 1, 2, 3}) rows.push_back(row("All", 0.8, "gamma", l));
  for (int l = 1; l <= 6; ++l) rows.push_back(row("All", 0.8, "blur", l));
  const auto rt = table(rows, {"All"});
  EXPECT_EQ(tick_labels(render_plot(rt, Metric::AUC, "a", "gamma")),
            (std::vector<std::string>{"-3", "-2", "-1", "0", "+1", "+2", "+3"}));
  EXPECT_EQ(tick_labels(render_plot(rt, Metric::AUC, "a", "blur")),
            (std::vector<std::string>{"0", "1", "2", "3", "4", "5", "6"}));
}

TEST(Plots, FlatSeriesIsHorizontal) {
  std::vector<MetricResult> rows = {row("All", 0.75), row("x", 0.5)};
  for (int l = 1; l <= 6; ++l) {
    rows.push_back(row("All", 0.75, "blur", l));
    rows.push_back(row("x", 0.5, "blur", l));
  }
  const auto svg = render_plot(table(rows, {"All", "x"}), Metric::AUC, "a", "blur");
  static const std::regex poly(R"re(points="([^"]*)")re");
  int lines = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), poly); it != std::sregex_iterator(); ++it) {
    ++lines;
    std::istringstream pts((*it)[1]);
    std::set<std::string> ys;
    std::string p;
    int count = 0;
    while (pts >> p) {
      ys.insert(p.substr(p.find(',') + 1));
      ++count;
    }
    EXPECT_EQ(count, 7);
    EXPECT_EQ(ys.size(), 1u);
  }
  EXPECT_EQ(lines, 2);
}

TEST(Plots, UndefinedPointsBreakTheLine) {
  std::vector<MetricResult> rows = {row("All", 0.9), row("All", 0.8, "blur", 1), row("All", std::nullopt, "blur", 2),
                                    row("All", 0.7, "blur", 3)};
  const auto svg = render_plot(table(rows, {"All"}), Metric::AUC, "a", "blur");
  std::size_t polylines = 0;
  for (std::size_t pos = 0; (pos = svg.find("<polyline", pos)) != std::string::npos; ++pos) ++polylines;
  EXPECT_EQ(polylines, 2u);
}

TEST(Plots, EmittedFilesAreDeterministic) {
  TempDir a;
  TempDir b;
  std::vector<MetricResult> rows = {row("All", 0.9), row("All", 0.9, "clean", 0, Metric::AUC, "b/c")};
  for (int l = 1; l <= 2; ++l) {
    rows.push_back(row("All", 0.8, "sharpness", l));
    rows.push_back(row("All", 0.8, "sharpness", l, Metric::AUC, "b/c"));
  }
  const auto rt = table(rows, {"All"});
  const auto pa = emit_plots(rt, Metric::AUC, a.path());
  emit_plots(rt, Metric::AUC, b.path());
  ASSERT_EQ(pa.size(), 2u);
  EXPECT_EQ(pa[0].filename(), "a__sharpness.svg");
  EXPECT_EQ(testing_support::snapshot(a.path()), testing_support::snapshot(b.path()));
}

TEST(Reports, WritesEveryArtifact) {
  TempDir dir;
  auto rt = five_groups();
  for (const auto& g : rt.meta.subgroup_names) rt.rows.push_back(row(g, 0.8, "blur", 1));
  write_reports(rt, dir.path());
  for (const char* f : {"results.csv", "metadata.json", "disparity.csv", "trends.csv", "plots/AUC/a__blur.svg"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  EXPECT_TRUE(rt.meta.extra.contains("report"));
  ReportOptions no_plots;
  no_plots.plots = false;
  TempDir bare;
  write_reports(rt, bare.path(), no_plots);
  EXPECT_FALSE(std::filesystem::exists(bare / "plots"));
}
