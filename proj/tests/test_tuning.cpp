#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace ssltsc;
using namespace ssltsc::tuning;

TEST(Hyperband, LadderForR27Eta3) {
  const auto schedule = hyperband_schedule(27, 3);
  const auto want = oracle::hyperband_ladder_27_3();
  ASSERT_EQ(schedule.size(), want.size());
  for (std::size_t b = 0; b < want.size(); ++b) {
    ASSERT_EQ(schedule[b].rungs.size(), want[b].size()) << "bracket " << b;
    for (std::size_t r = 0; r < want[b].size(); ++r) {
      EXPECT_EQ(schedule[b].rungs[r].n_configs, want[b][r].first) << b << "/" << r;
      EXPECT_EQ(schedule[b].rungs[r].resource, want[b][r].second) << b << "/" << r;
    }
  }
}

TEST(Hyperband, MinimumResourceShortensLadder) {
  const auto schedule = hyperband_schedule(25000, 3, 500);
  ASSERT_EQ(schedule.size(), 4u);  // floor(log3(50)) = 3
  for (const auto& b : schedule) {
    EXPECT_EQ(b.rungs.back().resource, 25000);
    EXPECT_GE(b.rungs.front().resource, 500);
  }
}

TEST(Hyperband, FloorLogExactPowers) {
  EXPECT_EQ(floor_log(27, 3), 3);
  EXPECT_EQ(floor_log(26.9, 3), 2);
  EXPECT_EQ(floor_log(1, 3), 0);
  EXPECT_EQ(floor_log(1024, 2), 10);
}

TEST(Hyperband, InvalidArguments) {
  EXPECT_THROW(hyperband_schedule(27, 1), ConfigError);
  EXPECT_THROW(hyperband_schedule(27, 3, 30), ConfigError);
}

TEST(Hyperband, RunsEveryScheduledTrialAndFindsOptimum) {
  SearchSpace space{{continuous("x", 0.0, 1.0)}};
  HyperbandOptions opts;
  opts.r_max = 27;
  opts.eta = 3;
  std::vector<std::int64_t> resources;
  opts.on_trial = [&](const TrialRecord& r) { resources.push_back(r.resource); };
  const auto best = hyperband(
      space, [](const json& c, std::int64_t r) { return -std::abs(c["x"].get<double>() - 0.3) * (1.0 + 1.0 / r); }, opts);
  EXPECT_EQ(resources.size(), 27u + 9 + 3 + 1 + 12 + 4 + 1 + 6 + 2 + 4);
  EXPECT_FALSE(best.incomplete);
  EXPECT_LT(std::abs(best.config["x"].get<double>() - 0.3), 0.1);
}

TEST(Hyperband, BudgetCapReturnsBestSoFar) {
  SearchSpace space{{continuous("x", 0.0, 1.0)}};
  HyperbandOptions opts;
  opts.r_max = 27;
  opts.max_trials = 5;
  const auto best = hyperband(space, [](const json& c, std::int64_t) { return c["x"].get<double>(); }, opts);
  EXPECT_TRUE(best.incomplete);
  EXPECT_EQ(best.trials.size(), 5u);
  EXPECT_TRUE(std::isfinite(best.objective));
}

TEST(Hyperband, FailedTrialsDoNotWin) {
  SearchSpace space{{continuous("x", 0.0, 1.0)}};
  HyperbandOptions opts;
  opts.r_max = 9;
  const auto best = hyperband(
      space,
      [](const json& c, std::int64_t) -> double {
        if (c["x"].get<double>() > 0.5) throw DivergedError("boom", 0);
        return c["x"].get<double>();
      },
      opts);
  EXPECT_LE(best.config["x"].get<double>(), 0.5);
  EXPECT_TRUE(std::any_of(best.trials.begin(), best.trials.end(), [](const auto& t) { return t.status == "failed"; }));
}

TEST(RandomSearch, BestOfHundredInTopTwoPercent) {
  SearchSpace space{{continuous("x", 0.0, 1.0)}};
  const double optimum = 0.37;
  int hits = 0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    const auto best = random_search(space, [&](const json& c) { return -std::abs(c["x"].get<double>() - optimum); }, 100, rep);
    if (std::abs(best.config["x"].get<double>() - optimum) <= 0.01) ++hits;
  }
  EXPECT_GE(hits, 80);
}

TEST(SearchSpaces, SamplesStayInRange) {
  Rng rng(3);
  for (const char* m : {"supervised", "mean_teacher", "vat", "mixmatch", "ladder", "selfsup", "random_forest",
                        "logistic_regression"}) {
    const auto space = space_for(m);
    for (int i = 0; i < 200; ++i) ASSERT_TRUE(space.contains(sample_config(space, rng))) << m;
  }
  EXPECT_THROW(space_for("nope"), ConfigError);
}

TEST(SearchSpaces, PolicyCountCappedAtAvailablePolicies) {
  for (const auto& p : space_for("vat").params) {
    if (p.name == "augment.n_policies") EXPECT_EQ(p.hi, 4.0);
  }
}

TEST(SearchSpaces, SupervisedHasNoRampup) {
  for (const auto& p : space_for("supervised").params) EXPECT_NE(p.name, "rampup_length");
}

TEST(SearchSpaces, LogScaleSamplesSpanDecades) {
  Rng rng(4);
  const auto p = continuous("lr", 1e-5, 1e-2, Scale::log);
  int below = 0;
  for (int i = 0; i < 3000; ++i) below += sample_value(p, rng).get<double>() < 1e-4;
  EXPECT_NEAR(below / 3000.0, 1.0 / 3.0, 0.04);
}

TEST(TunedConfigJson, RoundTripIncludingMissingObjective) {
  TunedConfig t;
  t.method = "vat";
  t.config = {{"vat", {{"epsilon", 2.5}}}};
  auto back = TunedConfig::from_json(json::parse(t.to_json().dump()));
  EXPECT_TRUE(std::isinf(back.objective));
  t.objective = 0.83;
  back = TunedConfig::from_json(json::parse(t.to_json().dump()));
  EXPECT_DOUBLE_EQ(back.objective, 0.83);
  EXPECT_EQ(back.config, t.config);
}
