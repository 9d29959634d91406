#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace ssltsc;
using namespace ssltsc::metrics;

TEST(BinaryAuc, PerfectAndInverted) {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  EXPECT_DOUBLE_EQ(binary_auc(s, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(binary_auc(s, std::vector<int>{1, 1, 0, 0}), 0.0);
}

TEST(BinaryAuc, AllTiedIsHalf) {
  const std::vector<double> s(6, 0.3);
  EXPECT_DOUBLE_EQ(binary_auc(s, std::vector<int>{0, 1, 0, 1, 1, 0}), 0.5);
}

TEST(BinaryAuc, SingleClassUndefined) {
  const std::vector<double> s{0.1, 0.2};
  EXPECT_THROW(binary_auc(s, std::vector<int>{1, 1}), UndefinedMetricError);
}

TEST(WeightedAuc, MatchesPairwiseOracle) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto inst = oracle::random_auc_instance(rng);
    ASSERT_NEAR(weighted_auc(inst.probs, inst.labels), oracle::pairwise_weighted_auc(inst.probs, inst.labels), 1e-9)
        << "instance " << i;
  }
}

TEST(WeightedAuc, BinaryCaseEqualsPlainAuc) {
  Tensor<double> p(Shape{4, 2}, std::vector<double>{0.9, 0.1, 0.6, 0.4, 0.3, 0.7, 0.45, 0.55});
  const std::vector<int> y{0, 1, 1, 0};
  const std::vector<double> s1{0.1, 0.4, 0.7, 0.55};
  EXPECT_NEAR(weighted_auc(p, y), binary_auc(s1, y), 1e-12);
}

TEST(WeightedAuc, AbsentClassSkipped) {
  Tensor<double> p(Shape{4, 3}, std::vector<double>{0.8, 0.1, 0.1, 0.7, 0.2, 0.1, 0.2, 0.7, 0.1, 0.1, 0.8, 0.1});
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_NEAR(weighted_auc(p, y), 1.0, 1e-12);
}

TEST(WeightedAuc, SingleClassUndefined) {
  Tensor<double> p(Shape{3, 2}, 0.5);
  EXPECT_THROW(weighted_auc(p, std::vector<int>{1, 1, 1}), UndefinedMetricError);
}

TEST(CheckpointSelection, EarliestMaximum) {
  const std::vector<std::pair<std::int64_t, double>> h{{500, 0.7}, {1000, 0.9}, {1500, 0.9}, {2000, 0.8}};
  EXPECT_EQ(select_checkpoint(h), 1000);
  EXPECT_THROW(select_checkpoint(std::vector<std::pair<std::int64_t, double>>{}), ConfigError);
}

TEST(ResultsTable, CsvRoundTripWithFailedRow) {
  ResultsTable t;
  t.add({"ds", "vat", 50, 0, 0.81234567, 0.79, 1500, 12.5, "ok"});
  t.add({"ds", "vat", 50, 1, 0, 0, 0, 3.25, "failed"});
  const auto dir = ssltsc::testing::temp_dir("results");
  const auto path = (dir / "results.csv").string();
  t.write_csv(path);
  const auto back = ResultsTable::read_csv(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_NEAR(back.records()[0].wauc_val, 0.812346, 1e-9);
  EXPECT_EQ(back.records()[0].best_step, 1500);
  EXPECT_EQ(back.records()[1].status, "failed");
  EXPECT_DOUBLE_EQ(back.records()[1].wall_time_s, 3.25);
}

TEST(ResultsTable, DuplicateKeyRejected) {
  ResultsTable t;
  EXPECT_TRUE(t.add({"ds", "vat", 50, 0, 0.5, 0.5, 1, 1, "ok"}));
  EXPECT_FALSE(t.add({"ds", "vat", 50, 0, 0.6, 0.6, 1, 1, "ok"}));
  EXPECT_THROW(t.add({"ds", "vat", 50, 2, 0.5, 1.5, 1, 1, "ok"}), InternalError);
}

TEST(Summary, SampleStandardDeviation) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto s = summarize(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std, std::sqrt(5.0 / 3.0), 1e-12);
  EXPECT_DOUBLE_EQ(summarize(std::vector<double>{0.7}).std, 0.0);
}

TEST(Ranks, TiesShareMeanPosition) {
  const std::vector<double> v{0.9, 0.8, 0.9, 0.7};
  EXPECT_EQ(descending_ranks(v), (std::vector<double>{1.5, 3.0, 1.5, 4.0}));
}

TEST(Ranks, RowSumsArePositionSums) {
  Rng rng(2);
  ResultsTable t;
  const std::vector<std::string> methods{"a", "b", "c", "d", "e"};
  for (int d = 0; d < 4; ++d) {
    for (const auto& m : methods) {
      t.add({"ds" + std::to_string(d), m, 50, 0, 0.5, std::round(uniform(rng) * 10) / 10, 1, 1, "ok"});
    }
  }
  const auto r = aggregate_ranks(t);
  double total = 0;
  for (const auto& e : r.entries) total += e.average_rank;
  EXPECT_NEAR(total, 15.0, 1e-12);  // 1 + ... + 5 per dataset, averaged
}

TEST(Ranks, MissingMethodExcludedFromItsAverage) {
  ResultsTable t;
  t.add({"d1", "a", 50, 0, 0.5, 0.9, 1, 1, "ok"});
  t.add({"d1", "b", 50, 0, 0.5, 0.8, 1, 1, "ok"});
  t.add({"d2", "a", 50, 0, 0.5, 0.7, 1, 1, "ok"});
  const auto r = aggregate_ranks(t);
  EXPECT_DOUBLE_EQ(*r.rank("a", 50), 1.0);
  EXPECT_DOUBLE_EQ(*r.rank("b", 50), 2.0);
  for (const auto& e : r.entries) {
    if (e.method == "b") EXPECT_EQ(e.datasets, 1u);
  }
}

TEST(Ranks, RoundingCreatesTies) {
  ResultsTable t;
  t.add({"d", "a", 50, 0, 0.5, 0.9001, 1, 1, "ok"});
  t.add({"d", "b", 50, 0, 0.5, 0.9004, 1, 1, "ok"});
  EXPECT_DOUBLE_EQ(*aggregate_ranks(t).rank("b", 50), 1.0);
  EXPECT_DOUBLE_EQ(*aggregate_ranks(t, 3).rank("b", 50), 1.5);
}
