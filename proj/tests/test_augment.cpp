#include <gtest/gtest.h>

#include <numbers>

#include "test_util.hpp"

using namespace ssltsc;
using namespace ssltsc::augment;

namespace {

Tensor<double> sine(std::size_t c, std::size_t t) {
  Tensor<double> x(Shape{c, t});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t s = 0; s < t; ++s) x.at(ch, s) = std::sin(2 * std::numbers::pi * (ch + 1) * s / static_cast<double>(t));
  }
  return x;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Policies, IdentityAtZeroIntensity) {
  const auto x = sine(3, 50);
  Rng rng(1);
  EXPECT_EQ(jitter(x, 0.0, rng), x);
  EXPECT_EQ(rescale(x, 0.0, rng), x);
  EXPECT_EQ(magnitude_warp(x, 0.0, rng), x);
  EXPECT_EQ(time_warp(x, 0.0, rng), x);
}

TEST(Policies, ShapePreservedAndFinite) {
  Rng rng(2);
  for (std::size_t t : {2u, 3u, 8u, 46u, 100u}) {
    const auto x = sine(2, t);
    for (Policy p : kAllPolicies) {
      const auto y = apply_policy(x, p, 10, rng);
      ASSERT_EQ(y.shape(), x.shape());
      for (double v : y.values()) ASSERT_TRUE(std::isfinite(v));
    }
  }
}

TEST(Policies, DeterministicPerSeed) {
  const auto x = sine(2, 40);
  for (Policy p : kAllPolicies) {
    Rng a(5), b(5);
    EXPECT_EQ(apply_policy(x, p, 7, a), apply_policy(x, p, 7, b));
  }
}

TEST(Jitter, EmpiricalStd) {
  Tensor<double> x(Shape{1, 100000});
  Rng rng(3);
  const auto y = jitter(x, 0.1, rng);
  double ss = 0;
  for (double v : y.values()) ss += v * v;
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(y.size())), 0.1, 0.002);
}

TEST(Rescale, PerChannelFactors) {
  Tensor<double> x(Shape{2, 10}, 1.0);
  Rng rng(4);
  const auto y = rescale(x, 0.1, rng);
  EXPECT_NE(y.at(0, 0), y.at(1, 0));
  EXPECT_DOUBLE_EQ(y.at(0, 0), y.at(0, 9));
}

TEST(Rescale, MeanFactorNearOne) {
  Tensor<double> x(Shape{1, 1}, 2.0);
  Rng rng(5);
  double sum = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += rescale(x, 0.1, rng)[0] / 2.0;
  EXPECT_NEAR(sum / n, 1.0, 0.02);
}

TEST(MagnitudeWarp, CurvePassesThroughKnots) {
  const std::vector<double> values{1.2, 0.7, 1.05, 0.95};
  const auto curve = smooth_curve(64, values);  // knots at 0, 21, 42, 63
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(curve[21 * i], values[i], 1e-9);
}

TEST(MagnitudeWarp, ShortSeriesFallsBackToLinear) {
  const auto curve = smooth_curve(3, {1.0, 2.0, 3.0, 4.0});
  ASSERT_EQ(curve.size(), 3u);
  EXPECT_DOUBLE_EQ(curve[0], 1.0);
  EXPECT_DOUBLE_EQ(curve[2], 4.0);
}

TEST(TimeWarp, EndpointsFixed) {
  const auto x = sine(2, 30);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const auto y = time_warp(x, 0.2, rng);
    EXPECT_DOUBLE_EQ(y.at(0, 0), x.at(0, 0));
    EXPECT_DOUBLE_EQ(y.at(1, 29), x.at(1, 29));
  }
}

TEST(TimeWarp, MapStrictlyIncreasing) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    const auto tau = time_warp_map(64, 0.2, rng);
    EXPECT_DOUBLE_EQ(tau.front(), 0.0);
    EXPECT_DOUBLE_EQ(tau.back(), 63.0);
    for (std::size_t s = 1; s < tau.size(); ++s) ASSERT_GT(tau[s], tau[s - 1]) << "seed " << seed;
  }
}

TEST(RandAugment, AllPoliciesWhenNEqualsK) {
  AugmentConfig cfg;
  cfg.n_policies = 4;
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    auto p = sample_policies(cfg, rng);
    std::sort(p.begin(), p.end());
    EXPECT_EQ(p, std::vector<Policy>(kAllPolicies.begin(), kAllPolicies.end()));
  }
}

TEST(RandAugment, NAboveKRejected) {
  AugmentConfig cfg;
  cfg.n_policies = 5;
  Rng rng(0);
  EXPECT_THROW(rand_augment(sine(1, 10), cfg, rng), ConfigError);
}

TEST(RandAugment, WeakestSettingIsSmallPerturbation) {
  AugmentConfig cfg;
  cfg.magnitude = 1;
  const auto x = sine(1, 64);
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const auto y = rand_augment(x, cfg, rng);
    EXPECT_LT(max_abs_diff(x, y), 0.15);
    EXPECT_GT(max_abs_diff(x, y), 0.0);
  }
}

TEST(RandAugment, PolicyFrequencyUniform) {
  AugmentConfig cfg;
  Rng rng(8);
  std::map<Policy, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[sample_policies(cfg, rng).front()];
  double chi2 = 0;
  for (Policy p : kAllPolicies) chi2 += std::pow(counts[p] - n / 4.0, 2) / (n / 4.0);
  // chi^2 with 3 degrees of freedom: mean 3, std sqrt(6).
  EXPECT_LT(chi2, 3.0 + 3.0 * std::sqrt(6.0));
}

TEST(AugmentBatch, AbsentConfigIsIdentity) {
  Tensor<double> x(Shape{3, 1, 8}, 0.5);
  Rng rng(0);
  EXPECT_EQ(augment_batch(x, std::nullopt, rng), x);
}
