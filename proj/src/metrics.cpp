#include "stress/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stress/error.hpp"

namespace stress {

namespace {

constexpr std::array<std::string_view, 5> kMetricNames = {"AUC", "F1", "TPR", "FPR", "ECE"};

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b)
    throw InvalidParameter("scores and labels differ in length (" + std::to_string(a) + " vs " +
                           std::to_string(b) + ")");
}

double ratio(std::size_t num, std::size_t den) {
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::string_view metric_name(Metric m) noexcept { return kMetricNames[static_cast<std::size_t>(m)]; }

std::optional<Metric> parse_metric(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kMetricNames.size(); ++i)
    if (kMetricNames[i] == name) return static_cast<Metric>(i);
  return std::nullopt;
}

bool higher_is_better(Metric m) noexcept { return m == Metric::AUC || m == Metric::F1 || m == Metric::TPR; }

std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores.size(), labels.size());
  const std::size_t n = scores.size();
  const std::size_t pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the positive rank sum, with tied blocks sharing their mid-rank.
  unsigned long long rank_sum_x2 = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const unsigned long long mid_x2 = i + 1 + j;  // (i+1) + j = 2 * mean 1-based rank
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum_x2 += mid_x2;
    i = j;
  }
  const unsigned long long u_x2 = rank_sum_x2 - static_cast<unsigned long long>(pos) * (pos + 1);
  return static_cast<double>(u_x2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

ConfusionCounts confusion_at(std::span<const double> scores, std::span<const std::uint8_t> labels,
                             double threshold) {
  check_lengths(scores.size(), labels.size());
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i]) predicted ? ++c.tp : ++c.fn;
    else predicted ? ++c.fp : ++c.tn;
  }
  return c;
}

Rates rates(const ConfusionCounts& c) noexcept {
  Rates r;
  if (c.tp + c.fn > 0) r.tpr = ratio(c.tp, c.tp + c.fn);
  if (c.fp + c.tn > 0) r.fpr = ratio(c.fp, c.fp + c.tn);
  if (c.tp + c.fp + c.fn > 0) r.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return r;
}

std::string_view policy_name(ThresholdPolicy p) noexcept {
  return p == ThresholdPolicy::Fixed ? "fixed" : "f1-optimal-on-clean";
}

std::optional<ThresholdPolicy> parse_policy(std::string_view name) noexcept {
  if (name == "fixed") return ThresholdPolicy::Fixed;
  if (name == "f1-optimal-on-clean" || name == "f1") return ThresholdPolicy::F1OptimalOnClean;
  return std::nullopt;
}

ThresholdChoice select_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                 ThresholdPolicy policy) {
  check_lengths(scores.size(), labels.size());
  if (policy == ThresholdPolicy::Fixed) return {kFixedThreshold, false};

  const std::size_t pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (pos == 0) return {kFixedThreshold, true};

  // Walk distinct scores from the top; after consuming block d_{j+1..} the
  // predicted positives are exactly those above midpoint(d_j, d_{j+1}).
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::optional<double> best_f1;
  double best_threshold = kFixedThreshold;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double block = scores[order[i]];
    while (i < order.size() && scores[order[i]] == block) {
      labels[order[i]] ? ++tp : ++fp;
      ++i;
    }
    if (i == order.size()) break;
    const double below = scores[order[i]];
    const double threshold = (below + block) / 2.0;
    const double f1 = ratio(2 * tp, 2 * tp + fp + (pos - tp));
    // Descending walk: strictly better wins, so ties keep the larger threshold.
    if (!best_f1 || f1 > *best_f1) {
      best_f1 = f1;
      best_threshold = threshold;
    }
  }
  if (!best_f1) return {kFixedThreshold, true};
  return {best_threshold, false};
}

ThresholdVector freeze_thresholds(const ScoreMatrix& clean, const Dataset& ds, ThresholdPolicy policy,
                                  std::vector<std::string>* warnings) {
  if (clean.n_classes != ds.n_classes() || clean.rows() != ds.size())
    throw AlignmentError("clean scores do not match the dataset shape");
  ThresholdVector tv;
  tv.policy = policy;
  std::vector<std::uint8_t> labels(ds.size());
  for (std::size_t c = 0; c < ds.n_classes(); ++c) {
    for (std::size_t i = 0; i < ds.size(); ++i) labels[i] = ds.samples[i].labels[c];
    const auto scores = clean.column(c);
    const auto choice = select_threshold(scores, labels, policy);
    if (choice.fell_back && warnings)
      warnings->push_back("class '" + ds.class_names[c] +
                          "': f1-optimal threshold undefined, using fixed 0.5");
    tv.values.push_back(choice.threshold);
  }
  return tv;
}

CalibrationBins calibration_bins(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                 std::size_t n_bins) {
  check_lengths(scores.size(), labels.size());
  if (n_bins < 1) throw InvalidParameter("ECE needs at least one bin");
  CalibrationBins bins;
  bins.n_bins = n_bins;
  bins.count.assign(n_bins, 0);
  bins.mean_confidence.assign(n_bins, 0.0);
  bins.accuracy.assign(n_bins, 0.0);
  std::vector<std::size_t> positives(n_bins, 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = std::clamp(scores[i], 0.0, 1.0);
    const double nb = static_cast<double>(n_bins);
    auto b = std::min(static_cast<std::size_t>(s * nb), n_bins - 1);
    // The product can land one bin off near an edge; compare against b/B itself.
    if (b > 0 && s < static_cast<double>(b) / nb) --b;
    else if (b + 1 < n_bins && s >= static_cast<double>(b + 1) / nb) ++b;
    ++bins.count[b];
    bins.mean_confidence[b] += s;
    positives[b] += labels[i] ? 1 : 0;
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (bins.count[b] == 0) continue;
    bins.mean_confidence[b] /= static_cast<double>(bins.count[b]);
    bins.accuracy[b] = ratio(positives[b], bins.count[b]);
  }
  return bins;
}

std::optional<double> ece(std::span<const double> scores, std::span<const std::uint8_t> labels,
                          std::size_t n_bins) {
  const auto bins = calibration_bins(scores, labels, n_bins);
  if (scores.empty()) return std::nullopt;
  double total = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (bins.count[b] == 0) continue;
    total += ratio(bins.count[b], scores.size()) * std::fabs(bins.accuracy[b] - bins.mean_confidence[b]);
  }
  return std::clamp(total, 0.0, 1.0);
}

std::optional<double> CellMetrics::get(Metric m) const noexcept {
  switch (m) {
    case Metric::AUC: return auc;
    case Metric::F1: return f1;
    case Metric::TPR: return tpr;
    case Metric::FPR: return fpr;
    case Metric::ECE: return ece;
  }
  return std::nullopt;
}

CellMetrics evaluate_cell(std::span<const double> scores, std::span<const std::uint8_t> labels,
                          double threshold, std::size_t n_bins) {
  CellMetrics cell;
  cell.n = scores.size();
  cell.auc = roc_auc(scores, labels);
  cell.counts = confusion_at(scores, labels, threshold);
  const auto r = rates(cell.counts);
  cell.f1 = r.f1;
  cell.tpr = r.tpr;
  cell.fpr = r.fpr;
  cell.ece = ece(scores, labels, n_bins);
  return cell;
}

std::vector<MetricResult> stratified_eval(const ScoreMatrix& scores, const Dataset& ds,
                                          const SubgroupPartition& partition,
                                          const ThresholdVector& thresholds, const EvalContext& ctx) {
  if (scores.rows() != ds.size() || scores.n_classes != ds.n_classes())
    throw AlignmentError("score matrix shape does not match the dataset");
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (scores.ids[i] != ds.samples[i].id)
      throw AlignmentError("score row " + std::to_string(i) + " has id '" + scores.ids[i] +
                           "', expected '" + ds.samples[i].id + "'");
  if (thresholds.values.size() != ds.n_classes())
    throw AlignmentError("threshold vector does not match the class count");

  std::vector<MetricResult> out;
  out.reserve(ds.n_classes() * partition.groups.size() * kAllMetrics.size());
  std::vector<double> sub_scores;
  std::vector<std::uint8_t> sub_labels;
  for (std::size_t c = 0; c < ds.n_classes(); ++c) {
    for (const auto& group : partition.groups) {
      sub_scores.clear();
      sub_labels.clear();
      for (auto i : group.indices) {
        sub_scores.push_back(scores.at(i, c));
        sub_labels.push_back(ds.samples[i].labels[c]);
      }
      const auto cell = evaluate_cell(sub_scores, sub_labels, thresholds.values[c], ctx.n_bins);
      for (auto m : kAllMetrics) {
        MetricResult r{ctx.dataset, ds.class_names[c], group.name, ctx.kind, ctx.level, m,
                       cell.get(m), group.indices.size(), ResultStatus::Ok};
        if (!r.value) r.status = ResultStatus::Undefined;
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

std::vector<MetricResult> failed_rows(const Dataset& ds, const SubgroupPartition& partition,
                                      const EvalContext& ctx) {
  std::vector<MetricResult> out;
  for (std::size_t c = 0; c < ds.n_classes(); ++c)
    for (const auto& group : partition.groups)
      for (auto m : kAllMetrics)
        out.push_back({ctx.dataset, ds.class_names[c], group.name, ctx.kind, ctx.level, m,
                       std::nullopt, group.indices.size(), ResultStatus::Failed});
  return out;
}

}  // namespace stress
