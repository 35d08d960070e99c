#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stress/dataset.hpp"
#include "stress/protocol.hpp"

namespace stress {

enum class Metric { AUC, F1, TPR, FPR, ECE };

inline constexpr std::array<Metric, 5> kAllMetrics = {Metric::AUC, Metric::F1, Metric::TPR,
                                                      Metric::FPR, Metric::ECE};

std::string_view metric_name(Metric m) noexcept;
std::optional<Metric> parse_metric(std::string_view name) noexcept;
// AUC, F1 and TPR improve upward; FPR and ECE improve downward.
bool higher_is_better(Metric m) noexcept;

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct Rates {
  std::optional<double> tpr;
  std::optional<double> fpr;
  std::optional<double> f1;
};

// Mann-Whitney AUC via mid-ranks; ties between a positive and a negative
// count one half. nullopt when either class is empty.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Predicted positive iff score >= threshold.
ConfusionCounts confusion_at(std::span<const double> scores, std::span<const std::uint8_t> labels,
                             double threshold);

Rates rates(const ConfusionCounts& c) noexcept;

enum class ThresholdPolicy { Fixed, F1OptimalOnClean };

std::string_view policy_name(ThresholdPolicy p) noexcept;
std::optional<ThresholdPolicy> parse_policy(std::string_view name) noexcept;

inline constexpr double kFixedThreshold = 0.5;

struct ThresholdChoice {
  double threshold = kFixedThreshold;
  bool fell_back = false;
};

// f1-optimal: best F1 over midpoints of consecutive distinct scores, ties
// toward the larger threshold. Falls back to 0.5 without positives or with
// fewer than two distinct scores.
ThresholdChoice select_threshold(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels, ThresholdPolicy policy);

// Per-class operating points, frozen from clean scores.
struct ThresholdVector {
  ThresholdPolicy policy = ThresholdPolicy::F1OptimalOnClean;
  std::vector<double> values;
  friend bool operator==(const ThresholdVector&, const ThresholdVector&) = default;
};

ThresholdVector freeze_thresholds(const ScoreMatrix& clean, const Dataset& ds,
                                  ThresholdPolicy policy,
                                  std::vector<std::string>* warnings = nullptr);

struct CalibrationBins {
  std::size_t n_bins = 0;
  std::vector<std::size_t> count;
  std::vector<double> mean_confidence;  // 0 for empty bins
  std::vector<double> accuracy;         // positive rate; 0 for empty bins
};

inline constexpr std::size_t kDefaultBins = 15;

// Equal-width bins over [0,1]; bin b holds [b/B, (b+1)/B), the last bin is closed.
CalibrationBins calibration_bins(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels, std::size_t n_bins);

// Sum over bins of (count/N) * |accuracy - mean confidence|. nullopt if empty.
std::optional<double> ece(std::span<const double> scores, std::span<const std::uint8_t> labels,
                          std::size_t n_bins = kDefaultBins);

enum class ResultStatus { Ok, Undefined, Failed };

struct MetricResult {
  std::string dataset;
  std::string class_name;
  std::string subgroup;
  std::string kind;  // "clean" or a perturbation kind name
  int level = 0;     // 0 for clean
  Metric metric = Metric::AUC;
  std::optional<double> value;
  std::size_t n = 0;
  ResultStatus status = ResultStatus::Ok;

  friend bool operator==(const MetricResult&, const MetricResult&) = default;
};

// The five metrics of one (class, subgroup) cell.
struct CellMetrics {
  std::optional<double> auc;
  std::optional<double> f1;
  std::optional<double> tpr;
  std::optional<double> fpr;
  std::optional<double> ece;
  ConfusionCounts counts;
  std::size_t n = 0;

  std::optional<double> get(Metric m) const noexcept;
};

CellMetrics evaluate_cell(std::span<const double> scores, std::span<const std::uint8_t> labels,
                          double threshold, std::size_t n_bins);

struct EvalContext {
  std::string dataset;
  std::string kind = "clean";
  int level = 0;
  std::size_t n_bins = kDefaultBins;
};

// Every class x group (including "All") x metric; undefined cells are kept
// as rows with status Undefined. Throws AlignmentError if score rows do not
// match the dataset ids.
std::vector<MetricResult> stratified_eval(const ScoreMatrix& scores, const Dataset& ds,
                                          const SubgroupPartition& partition,
                                          const ThresholdVector& thresholds, const EvalContext& ctx);

// Rows marking a pass that could not be scored.
std::vector<MetricResult> failed_rows(const Dataset& ds, const SubgroupPartition& partition,
                                      const EvalContext& ctx);

}  // namespace stress
