#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "stress/config.hpp"
#include "stress/dataset.hpp"
#include "stress/metrics.hpp"
#include "stress/perturb.hpp"
#include "stress/scorer.hpp"

namespace stress {

struct StressJob {
  Dataset dataset;
  std::vector<SubgroupDef> subgroups;
  SuiteConfig suite = SuiteConfig::defaults();
  ThresholdPolicy policy = ThresholdPolicy::F1OptimalOnClean;
  // Thresholds frozen on another (development) run. When set they are used
  // unchanged instead of being selected on this dataset's clean scores.
  std::optional<ThresholdVector> frozen_thresholds;
  std::size_t n_bins = kDefaultBins;
  std::size_t batch_size = 32;
  std::size_t workers = 1;
  int retries = 2;
  std::filesystem::path out_dir;
  bool resume = false;
  bool keep_images = false;

  // Throws ConfigError when a field is out of range.
  void validate() const;
};

// Produces the score matrix for one evaluation pass (clean when spec is
// empty), rows in dataset order.
class PassScorer {
 public:
  virtual ~PassScorer() = default;
  virtual ScorerInfo handshake() = 0;
  virtual ScoreMatrix score_pass(const std::optional<PerturbationSpec>& spec) = 0;
};

// Perturbs dataset images and sends them to one or more scorer connections.
// Batches are spread over `workers` connections; each connection runs one
// job at a time. Images are perturbed at native resolution, then converted
// to the scorer's channel count and bilinearly resized to its input size.
class ImagePassScorer final : public PassScorer {
 public:
  ImagePassScorer(ScorerFactory factory, const Dataset& ds, std::size_t batch_size,
                  std::size_t workers, std::optional<std::filesystem::path> keep_images_dir = {});
  ~ImagePassScorer() override;

  ScorerInfo handshake() override;
  ScoreMatrix score_pass(const std::optional<PerturbationSpec>& spec) override;

 private:
  void connect();

  ScorerFactory factory_;
  const Dataset& ds_;
  std::size_t batch_size_;
  std::size_t workers_;
  std::optional<std::filesystem::path> keep_dir_;
  std::vector<std::unique_ptr<Scorer>> connections_;
  std::optional<ScorerInfo> info_;
  bool healthy_ = false;
};

// Reads pass scores from prediction CSVs: either a directory holding
// <tag>.csv per pass, or one file with a tag column.
class PrecomputedPassScorer final : public PassScorer {
 public:
  PrecomputedPassScorer(std::filesystem::path source, const Dataset& ds);
  ScorerInfo handshake() override;
  ScoreMatrix score_pass(const std::optional<PerturbationSpec>& spec) override;

 private:
  std::filesystem::path source_;
  const Dataset& ds_;
};

struct RunMetadata {
  std::string schema = "stress-results/1";
  std::string dataset;
  std::string config_hash;
  std::string scorer_identity;
  std::vector<std::string> class_names;
  std::vector<std::string> subgroup_names;  // including "All"
  ThresholdVector thresholds;
  std::size_t n_bins = kDefaultBins;
  nlohmann::json suite;
  std::vector<std::string> failed_specs;
  nlohmann::json extra = nlohmann::json::object();  // report settings etc.

  nlohmann::json to_json() const;
  static RunMetadata from_json(const nlohmann::json& j);
};

struct ResultTable {
  std::vector<MetricResult> rows;
  RunMetadata meta;
};

// Sorts rows by (dataset, class, subgroup, kind, level, metric).
void sort_rows(std::vector<MetricResult>& rows);

struct CleanResult {
  ScoreMatrix scores;
  ThresholdVector thresholds;
  std::vector<MetricResult> rows;
  std::vector<std::string> warnings;
};

struct StressOutcome {
  ResultTable table;
  std::size_t passes_scored = 0;  // passes sent to the scorer in this invocation
  std::size_t passes_reused = 0;  // passes restored from the resume cache
  std::vector<std::string> warnings;
  bool complete() const noexcept { return table.meta.failed_specs.empty(); }
};

// Hash of everything that determines result values (dataset content,
// subgroups, suite, policy, bins, frozen thresholds).
std::string config_hash(const StressJob& job);

// Scores the clean set, freezes thresholds, caches scores to
// out_dir/scores/clean.csv and returns level-0 rows.
CleanResult run_clean(const StressJob& job, PassScorer& scorer);

// Clean baseline plus every suite spec. Per-spec scorer failures are retried
// job.retries times and then recorded as failed rows; a failing clean pass is
// fatal. Progress is checkpointed in out_dir/state.json so a resumed run
// re-scores only passes that are missing or failed.
StressOutcome run_stress(const StressJob& job, PassScorer& scorer);

struct TrendSummary {
  std::string dataset;
  std::string class_name;
  std::string subgroup;
  std::string kind;
  int sign = 1;
  Metric metric = Metric::AUC;
  std::optional<double> clean;
  std::vector<int> levels;                    // ordered by |level|
  std::vector<std::optional<double>> values;  // same order
  bool monotone = true;
  std::optional<double> max_drop;
};

inline constexpr double kDefaultMonotoneEpsilon = 0.005;

// Monotone means non-increasing within epsilon for AUC/F1/TPR,
// non-decreasing for ECE, and consistently one-directional for FPR.
// max_drop is the degradation of the worst level relative to clean.
std::vector<TrendSummary> summarize_monotonic(const ResultTable& rt, Metric metric,
                                              double epsilon = kDefaultMonotoneEpsilon);

struct CellDiff {
  MetricResult a;
  std::optional<double> b;
  std::optional<double> diff;  // b - a where both are defined
};

struct StabilityRow {
  std::string dataset;
  std::string class_name;
  std::string subgroup;
  std::string kind;
  Metric metric = Metric::AUC;
  std::optional<double> stability_a;  // max |metric(level) - metric(clean)|
  std::optional<double> stability_b;
};

struct Comparison {
  std::vector<CellDiff> diffs;
  std::vector<StabilityRow> stability;
};

// Throws ConfigError describing the difference when the two grids do not
// cover the same cells.
Comparison compare_runs(const ResultTable& a, const ResultTable& b);

std::vector<StabilityRow> stability_scores(const ResultTable& rt);

// Resume checkpoint stored next to the results.
struct JobState {
  std::string config_hash;
  std::optional<ThresholdVector> thresholds;
  std::set<std::string> completed;
  std::set<std::string> failed;

  nlohmann::json to_json() const;
  static JobState from_json(const nlohmann::json& j);
};

JobState load_state(const std::filesystem::path& path);
void save_state(const JobState& state, const std::filesystem::path& path);

nlohmann::json thresholds_to_json(const ThresholdVector& tv);
ThresholdVector thresholds_from_json(const nlohmann::json& j);

}  // namespace stress
