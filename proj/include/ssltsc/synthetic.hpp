#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "ssltsc/core/random.hpp"
#include "ssltsc/data_io.hpp"

namespace ssltsc::data {

/// Classes differ in the frequency and phase of a noisy sinusoid. Per-series
/// jitter of both makes neighbouring classes overlap.
struct SyntheticSpec {
  std::size_t n = 4000;
  std::size_t length = 64;
  std::vector<double> frequencies{3.0, 3.0, 4.0, 4.0};  // cycles per series, one per class
  std::vector<double> phases{0.0, std::numbers::pi / 2, 0.0, std::numbers::pi / 2};
  double frequency_jitter = 0.25;
  double phase_jitter = 0.5;
  double amplitude_jitter = 0.2;  // amplitude ~ U(1 - a, 1 + a)
  double noise = 0.5;
  double trend = 0.5;             // std of a random linear trend over the series
  std::uint64_t seed = 0;
};

/// Balanced single-channel dataset drawn from `spec`; labels cycle 0..K-1.
inline TimeSeriesDataset make_synthetic(const SyntheticSpec& spec, const std::string& name = "synthetic") {
  const std::size_t k = spec.frequencies.size();
  if (k < 2 || spec.phases.size() != k) throw ConfigError("synthetic: need >= 2 classes with one phase each");
  Rng rng(derive_seed(spec.seed, 0x5E));
  TimeSeriesDataset ds;
  ds.name = name;
  ds.n_classes = static_cast<int>(k);
  ds.values = Tensor<double>(Shape{spec.n, 1, spec.length});
  ds.labels.resize(spec.n);
  const double len = static_cast<double>(spec.length);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t y = i % k;
    ds.labels[i] = static_cast<int>(y);
    const double f = spec.frequencies[y] + normal(rng, 0.0, spec.frequency_jitter);
    const double phi = spec.phases[y] + normal(rng, 0.0, spec.phase_jitter);
    const double amp = uniform(rng, 1.0 - spec.amplitude_jitter, 1.0 + spec.amplitude_jitter);
    const double slope = normal(rng, 0.0, spec.trend);
    auto row = ds.values.row(i);
    for (std::size_t t = 0; t < spec.length; ++t) {
      const double u = static_cast<double>(t) / len;
      row[t] = amp * std::sin(2.0 * std::numbers::pi * f * u + phi) + slope * (u - 0.5) + normal(rng, 0.0, spec.noise);
    }
  }
  return ds;
}

}  // namespace ssltsc::data
