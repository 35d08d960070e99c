#include <gtest/gtest.h>

#include <random>

#include "stress/error.hpp"
#include "stress/metrics.hpp"
#include "support.hpp"

using namespace stress;
using testing_support::naive_counts;
using testing_support::naive_ece;
using testing_support::pairwise_auc;
using testing_support::random_labels;
using testing_support::sweep_threshold;
using testing_support::tied_scores;

namespace {

using Labels = std::vector<std::uint8_t>;
using Scores = std::vector<double>;

// Dataset with random labels and two attributes; scores in a matching matrix.
struct Fixture {
  Dataset ds;
  ScoreMatrix scores;
  std::vector<SubgroupDef> defs;
};

Fixture random_fixture(std::mt19937_64& rng, std::size_t n) {
  Fixture f;
  f.ds.name = "rand";
  f.ds.class_names = {"a", "b", "c"};
  f.ds.attributes = {{"site", AttributeType::String}, {"age", AttributeType::Number}};
  f.scores.n_classes = 3;
  std::uniform_int_distribution<int> site(0, 3);
  std::uniform_real_distribution<double> age(20, 90);
  std::bernoulli_distribution unknown(0.1);
  for (std::size_t i = 0; i < n; ++i) {
    SampleRecord s;
    s.id = "s" + std::to_string(i);
    s.labels = random_labels(rng, 3, 0.4);
    const int st = site(rng);
    s.attributes["site"] = unknown(rng) ? AttributeValue{} : AttributeValue{std::string(1, static_cast<char>('A' + st))};
    s.attributes["age"] = std::floor(age(rng));
    f.ds.samples.push_back(s);
    f.scores.ids.push_back(s.id);
    for (double v : tied_scores(rng, 3)) f.scores.values.push_back(static_cast<float>(v));
  }
  f.defs = {{"A", "site", EqualsPredicate{"A"}},
            {"B", "site", EqualsPredicate{"B"}},
            {"C", "site", EqualsPredicate{"C"}},
            {"D", "site", EqualsPredicate{"D"}},
            {"young", "age", RangePredicate{std::nullopt, 50.0}},
            {"old", "age", RangePredicate{50.0, std::nullopt}}};
  return f;
}

}  // namespace

TEST(Auc, HandCases) {
  EXPECT_EQ(*roc_auc(Scores{0.1, 0.2, 0.8, 0.9}, Labels{0, 0, 1, 1}), 1.0);
  EXPECT_EQ(*roc_auc(Scores{0.9, 0.8, 0.2, 0.1}, Labels{0, 0, 1, 1}), 0.0);
  EXPECT_EQ(*roc_auc(Scores{0.5, 0.5, 0.5}, Labels{0, 1, 1}), 0.5);
  EXPECT_EQ(*roc_auc(Scores{0.1, 0.4, 0.35, 0.8}, Labels{0, 0, 1, 1}), 0.75);
  EXPECT_FALSE(roc_auc(Scores{0.1, 0.2}, Labels{1, 1}));
  EXPECT_FALSE(roc_auc(Scores{}, Labels{}));
  EXPECT_THROW(roc_auc(Scores{0.1}, Labels{1, 0}), InvalidParameter);
}

TEST(AucProperty, EqualsPairCountingAndComplement) {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<std::size_t> size(2, 50);
  int defined = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = size(rng);
    const auto s = tied_scores(rng, n);
    const auto y = random_labels(rng, n);
    const auto got = roc_auc(s, y);
    const auto want = pairwise_auc(s, y);
    ASSERT_EQ(got.has_value(), want.has_value());
    if (!got) continue;
    ++defined;
    EXPECT_NEAR(*got, *want, 1e-12);
    Scores flipped(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) flipped[i] = 1.0 - s[i];
    EXPECT_NEAR(*roc_auc(flipped, y), 1.0 - *got, 1e-12);
  }
  EXPECT_GT(defined, 900);
}

TEST(Confusion, ThresholdIsInclusive) {
  const auto c = confusion_at(Scores{0.5, 0.5, 0.49, 0.9}, Labels{1, 0, 1, 0}, 0.5);
  EXPECT_EQ(c, (ConfusionCounts{1, 2, 0, 1}));
  const auto r = rates(c);
  EXPECT_EQ(*r.tpr, 0.5);
  EXPECT_EQ(*r.fpr, 1.0);
  EXPECT_EQ(*r.f1, 2.0 / 5.0);
}

TEST(Confusion, UndefinedRates) {
  const auto only_neg = rates(confusion_at(Scores{0.1, 0.2}, Labels{0, 0}, 0.5));
  EXPECT_FALSE(only_neg.tpr);
  EXPECT_EQ(*only_neg.fpr, 0.0);
  EXPECT_FALSE(only_neg.f1);
  const auto only_pos = rates(confusion_at(Scores{0.9}, Labels{1}, 0.5));
  EXPECT_FALSE(only_pos.fpr);
  EXPECT_EQ(*only_pos.f1, 1.0);
}

TEST(Threshold, HandCasesAndFallbacks) {
  EXPECT_EQ(select_threshold(Scores{0.1, 0.4, 0.6, 0.9}, Labels{0, 0, 1, 1}, ThresholdPolicy::F1OptimalOnClean)
                .threshold,
            0.5);
  EXPECT_EQ(select_threshold(Scores{0.2, 0.3, 0.7}, Labels{0, 1, 1}, ThresholdPolicy::F1OptimalOnClean).threshold,
            0.25);
  const auto no_pos = select_threshold(Scores{0.1, 0.9}, Labels{0, 0}, ThresholdPolicy::F1OptimalOnClean);
  EXPECT_TRUE(no_pos.fell_back);
  EXPECT_EQ(no_pos.threshold, 0.5);
  const auto one_value = select_threshold(Scores{0.3, 0.3}, Labels{0, 1}, ThresholdPolicy::F1OptimalOnClean);
  EXPECT_TRUE(one_value.fell_back);
  EXPECT_EQ(select_threshold(Scores{0.1, 0.9}, Labels{0, 1}, ThresholdPolicy::Fixed).threshold, 0.5);
}

TEST(Threshold, TiesGoToTheLargerThreshold) {
  // Cutting below the second or the fifth score both give F1 = 2/3.
  const Scores s = {0.95, 0.85, 0.75, 0.65, 0.55, 0.45};
  const Labels y = {1, 1, 0, 0, 1, 1};
  EXPECT_EQ(*rates(confusion_at(s, y, 0.8)).f1, *rates(confusion_at(s, y, 0.5)).f1);
  EXPECT_EQ(select_threshold(s, y, ThresholdPolicy::F1OptimalOnClean).threshold, (0.75 + 0.85) / 2.0);
}

TEST(ThresholdProperty, MatchesExhaustiveSweep) {
  std::mt19937_64 rng(2002);
  std::uniform_int_distribution<std::size_t> size(1, 40);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = size(rng);
    const auto s = tied_scores(rng, n);
    const auto y = random_labels(rng, n);
    EXPECT_EQ(select_threshold(s, y, ThresholdPolicy::F1OptimalOnClean).threshold, sweep_threshold(s, y))
        << "trial " << trial;
  }
}

TEST(Ece, HandCases) {
  EXPECT_DOUBLE_EQ(*ece(Scores{0.2, 0.8}, Labels{0, 1}, 2), 0.2);
  EXPECT_EQ(*ece(Scores{0.5, 0.5}, Labels{0, 1}, 10), 0.0);
  EXPECT_EQ(*ece(Scores{1.0}, Labels{0}, 15), 1.0);
  EXPECT_EQ(*ece(Scores{0.0}, Labels{0}, 15), 0.0);
  EXPECT_DOUBLE_EQ(*ece(Scores{0.25, 0.75, 0.75, 0.75}, Labels{0, 1, 1, 0}, 1), 0.125);
  EXPECT_FALSE(ece(Scores{}, Labels{}, 15));
}

TEST(Ece, BinEdgesAreLeftClosedLastBinClosed) {
  const auto b = calibration_bins(Scores{0.0, 0.5, 1.0, 0.29, 0.999}, Labels{0, 0, 1, 1, 0}, 2);
  EXPECT_EQ(b.count, (std::vector<std::size_t>{2, 3}));
  const auto fine = calibration_bins(Scores{0.29, 0.7, 0.3}, Labels{0, 0, 0}, 100);
  EXPECT_EQ(fine.count[29], 1u);
  EXPECT_EQ(fine.count[70], 1u);
  EXPECT_EQ(fine.count[30], 1u);
}

TEST(EceProperty, ConservesCountsAndStaysInRange) {
  std::mt19937_64 rng(3003);
  std::uniform_int_distribution<std::size_t> size(1, 60);
  std::uniform_int_distribution<std::size_t> bins(1, 20);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = size(rng);
    const std::size_t nb = bins(rng);
    const auto s = tied_scores(rng, n);
    const auto y = random_labels(rng, n);
    const auto b = calibration_bins(s, y, nb);
    std::size_t total = 0;
    for (auto c : b.count) total += c;
    EXPECT_EQ(total, n);
    const double e = *ece(s, y, nb);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
    EXPECT_NEAR(e, naive_ece(s, y, nb), 1e-12);
  }
}

TEST(Stratify, GridShapeAndUndefinedRows) {
  std::mt19937_64 rng(4);
  auto f = random_fixture(rng, 40);
  f.defs.push_back({"nobody", "site", EqualsPredicate{"Z"}});
  const auto partition = resolve_subgroups(f.defs, f.ds);
  const auto tv = freeze_thresholds(f.scores, f.ds, ThresholdPolicy::Fixed);
  const auto rows = stratified_eval(f.scores, f.ds, partition, tv, {"rand", "clean", 0, 15});
  EXPECT_EQ(rows.size(), 3u * partition.groups.size() * 5u);
  for (const auto& r : rows) {
    if (r.subgroup != "nobody") continue;
    EXPECT_EQ(r.status, ResultStatus::Undefined);
    EXPECT_FALSE(r.value);
    EXPECT_EQ(r.n, 0u);
  }
}

TEST(StratifyProperty, SubgroupsEqualStandaloneRunsBitExact) {
  std::mt19937_64 rng(5005);
  for (int trial = 0; trial < 25; ++trial) {
    auto f = random_fixture(rng, 30 + trial * 3);
    const auto partition = resolve_subgroups(f.defs, f.ds);
    const auto tv = freeze_thresholds(f.scores, f.ds, ThresholdPolicy::F1OptimalOnClean);
    const auto rows = stratified_eval(f.scores, f.ds, partition, tv, {"rand", "clean", 0, 10});
    std::size_t k = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      const auto column = f.scores.column(c);
      for (const auto& g : partition.groups) {
        Scores s;
        Labels y;
        for (auto i : g.indices) {
          s.push_back(column[i]);
          y.push_back(f.ds.samples[i].labels[c]);
        }
        const auto cell = evaluate_cell(s, y, tv.values[c], 10);
        for (Metric m : kAllMetrics) {
          const auto& r = rows[k++];
          ASSERT_EQ(r.class_name, f.ds.class_names[c]);
          ASSERT_EQ(r.subgroup, g.name);
          ASSERT_EQ(r.metric, m);
          EXPECT_EQ(r.value, cell.get(m));
          EXPECT_EQ(r.n, g.indices.size());
        }
      }
    }
  }
}

TEST(StratifyProperty, DisjointSubgroupCountsSumToPooled) {
  std::mt19937_64 rng(6006);
  for (int trial = 0; trial < 50; ++trial) {
    auto f = random_fixture(rng, 60);
    const auto partition = resolve_subgroups(f.defs, f.ds);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto column = f.scores.column(c);
      auto counts_for = [&](const std::vector<std::size_t>& idx) {
        Scores s;
        Labels y;
        for (auto i : idx) {
          s.push_back(column[i]);
          y.push_back(f.ds.samples[i].labels[c]);
        }
        return confusion_at(s, y, 0.5);
      };
      ConfusionCounts by_age;
      by_age += counts_for(partition.find("young")->indices);
      by_age += counts_for(partition.find("old")->indices);
      EXPECT_EQ(by_age, counts_for(partition.groups[0].indices));
      ConfusionCounts by_site;
      std::vector<std::size_t> unknown;
      for (const char* g : {"A", "B", "C", "D"}) by_site += counts_for(partition.find(g)->indices);
      for (std::size_t i = 0; i < f.ds.size(); ++i)
        if (!is_known(f.ds.samples[i].attributes.at("site"))) unknown.push_back(i);
      by_site += counts_for(unknown);
      EXPECT_EQ(by_site, counts_for(partition.groups[0].indices));
      const auto naive = naive_counts(column, [&] {
        Labels y;
        for (const auto& s : f.ds.samples) y.push_back(s.labels[c]);
        return y;
      }(), 0.5);
      EXPECT_EQ(by_age.tp, naive.tp);
      EXPECT_EQ(by_age.fp, naive.fp);
    }
  }
}

TEST(Stratify, MisalignedScoresAreRejected) {
  std::mt19937_64 rng(7);
  auto f = random_fixture(rng, 10);
  const auto partition = resolve_subgroups(f.defs, f.ds);
  const auto tv = freeze_thresholds(f.scores, f.ds, ThresholdPolicy::Fixed);
  std::swap(f.scores.ids[0], f.scores.ids[1]);
  EXPECT_THROW(stratified_eval(f.scores, f.ds, partition, tv, {}), AlignmentError);
}

TEST(Stratify, FailedRowsKeepGroupSizes) {
  std::mt19937_64 rng(8);
  auto f = random_fixture(rng, 20);
  const auto partition = resolve_subgroups(f.defs, f.ds);
  const auto rows = failed_rows(f.ds, partition, {"rand", "gamma", 2, 15});
  EXPECT_EQ(rows.size(), 3u * partition.groups.size() * 5u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.status, ResultStatus::Failed);
    EXPECT_FALSE(r.value);
    EXPECT_EQ(r.n, partition.find(r.subgroup)->indices.size());
  }
}

TEST(Thresholds, FreezeWarnsOnFallback) {
  Dataset ds;
  ds.class_names = {"a", "b"};
  ScoreMatrix m;
  m.n_classes = 2;
  for (int i = 0; i < 4; ++i) {
    ds.samples.push_back({"s" + std::to_string(i), "", {static_cast<std::uint8_t>(i % 2), 0}, {}});
    m.ids.push_back("s" + std::to_string(i));
    m.values.push_back(i % 2 ? 0.8f : 0.2f);
    m.values.push_back(0.3f);
  }
  std::vector<std::string> warnings;
  const auto tv = freeze_thresholds(m, ds, ThresholdPolicy::F1OptimalOnClean, &warnings);
  EXPECT_EQ(tv.values[0], (0.2f + static_cast<double>(0.8f)) / 2.0);
  EXPECT_EQ(tv.values[1], 0.5);
  EXPECT_EQ(warnings.size(), 1u);
}
