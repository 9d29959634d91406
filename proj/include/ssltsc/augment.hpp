#pragma once

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ssltsc/core/random.hpp"
#include "ssltsc/core/tensor.hpp"
#include "ssltsc/errors.hpp"

namespace ssltsc::augment {

enum class Policy { time_warp, magnitude_warp, jitter, rescale };

inline constexpr std::array<Policy, 4> kAllPolicies{Policy::time_warp, Policy::magnitude_warp, Policy::jitter,
                                                    Policy::rescale};

inline std::string_view policy_name(Policy p) {
  switch (p) {
    case Policy::time_warp: return "time_warp";
    case Policy::magnitude_warp: return "magnitude_warp";
    case Policy::jitter: return "jitter";
    case Policy::rescale: return "rescale";
  }
  return "unknown";
}

inline Policy policy_from_name(std::string_view name) {
  for (Policy p : kAllPolicies) {
    if (policy_name(p) == name) return p;
  }
  throw ConfigError("unknown augmentation policy '" + std::string(name) + "'");
}

/// RandAugment settings: N policies drawn per batch out of `policies`,
/// all applied at the shared `magnitude`.
struct AugmentConfig {
  int n_policies = 1;
  int magnitude = 5;
  std::vector<Policy> policies{kAllPolicies.begin(), kAllPolicies.end()};

  void validate() const {
    if (policies.empty()) throw ConfigError("augment: policy set is empty");
    if (magnitude < 1 || magnitude > 10) throw ConfigError("augment: magnitude must lie in [1, 10]");
    if (n_policies < 1 || n_policies > 6) throw ConfigError("augment: N must lie in [1, 6]");
    if (static_cast<std::size_t>(n_policies) > policies.size()) {
      throw ConfigError("augment: N = " + std::to_string(n_policies) + " exceeds the number of policies K = " +
                        std::to_string(policies.size()));
    }
  }
};

inline constexpr int kWarpKnots = 4;

/// Noise scale of a policy at RandAugment magnitude m. Data is assumed
/// z-normalized, so intensities are in units of channel std.
inline double intensity(Policy p, int magnitude) {
  switch (p) {
    case Policy::jitter:
    case Policy::rescale: return 0.01 * magnitude;
    case Policy::magnitude_warp:
    case Policy::time_warp: return 0.02 * magnitude;
  }
  return 0.0;
}

/// Natural cubic spline through (xs[i], ys[i]), xs strictly increasing.
class CubicSpline {
 public:
  CubicSpline(std::vector<double> xs, std::vector<double> ys) : xs_(std::move(xs)), ys_(std::move(ys)) {
    const std::size_t n = xs_.size();
    m_.assign(n, 0.0);
    if (n < 3) return;
    // Tridiagonal system for second derivatives with m_0 = m_{n-1} = 0.
    std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0), d(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = xs_[i] - xs_[i - 1], h1 = xs_[i + 1] - xs_[i];
      a[i] = h0;
      b[i] = 2.0 * (h0 + h1);
      c[i] = h1;
      d[i] = 6.0 * ((ys_[i + 1] - ys_[i]) / h1 - (ys_[i] - ys_[i - 1]) / h0);
    }
    for (std::size_t i = 2; i + 1 < n; ++i) {
      const double w = a[i] / b[i - 1];
      b[i] -= w * c[i - 1];
      d[i] -= w * d[i - 1];
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      m_[i] = (d[i] - (i + 2 < n ? c[i] * m_[i + 1] : 0.0)) / b[i];
    }
  }

  double operator()(double x) const {
    const std::size_t n = xs_.size();
    if (n == 1) return ys_[0];
    std::size_t i = static_cast<std::size_t>(std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin());
    i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
    const double h = xs_[i + 1] - xs_[i];
    const double A = (xs_[i + 1] - x) / h, B = (x - xs_[i]) / h;
    return A * ys_[i] + B * ys_[i + 1] + ((A * A * A - A) * m_[i] + (B * B * B - B) * m_[i + 1]) * h * h / 6.0;
  }

 private:
  std::vector<double> xs_, ys_, m_;
};

/// Evenly spaced knot positions over [0, t-1].
inline std::vector<double> knot_positions(std::size_t t, int knots) {
  std::vector<double> xs(static_cast<std::size_t>(knots));
  for (int i = 0; i < knots; ++i) {
    xs[static_cast<std::size_t>(i)] = knots == 1 ? 0.0 : static_cast<double>(t - 1) * i / (knots - 1);
  }
  return xs;
}

/// Smooth curve over 0..t-1 through `values` at `knot_positions(t, K)`.
/// Cubic spline; linear interpolation when t < K.
inline std::vector<double> smooth_curve(std::size_t t, const std::vector<double>& values) {
  const int knots = static_cast<int>(values.size());
  std::vector<double> curve(t);
  if (t == 1) {
    curve[0] = values[0];
    return curve;
  }
  const auto xs = knot_positions(t, knots);
  if (t < values.size()) {
    spdlog::warn("augment: series length {} is shorter than {} knots; using linear interpolation", t, knots);
    for (std::size_t s = 0; s < t; ++s) {
      const double x = static_cast<double>(s);
      std::size_t i = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
      i = std::clamp<std::size_t>(i, 1, xs.size() - 1) - 1;
      const double w = (x - xs[i]) / (xs[i + 1] - xs[i]);
      curve[s] = (1 - w) * values[i] + w * values[i + 1];
    }
    return curve;
  }
  const CubicSpline spline(xs, values);
  for (std::size_t s = 0; s < t; ++s) curve[s] = spline(static_cast<double>(s));
  return curve;
}

/// x + N(0, sigma^2) noise, i.i.d. per element.
inline Tensor<double> jitter(const Tensor<double>& x, double sigma, Rng& rng) {
  Tensor<double> out = x;
  if (sigma <= 0.0) return out;
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& v : out.values()) v += noise(rng);
  return out;
}

/// Each channel scaled by its own factor ~ N(1, sigma^2).
inline Tensor<double> rescale(const Tensor<double>& x, double sigma, Rng& rng) {
  Tensor<double> out = x;
  if (sigma <= 0.0) return out;
  const std::size_t c = x.dim(0), t = x.dim(1);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double f = normal(rng, 1.0, sigma);
    for (std::size_t s = 0; s < t; ++s) out.at(ch, s) *= f;
  }
  return out;
}

/// Per-channel multiplication by a smooth random curve through `knots`
/// values ~ N(1, sigma^2).
inline Tensor<double> magnitude_warp(const Tensor<double>& x, double sigma, Rng& rng, int knots = kWarpKnots) {
  if (knots < 2) throw ConfigError("magnitude_warp: knots must be >= 2");
  Tensor<double> out = x;
  if (sigma <= 0.0) return out;
  const std::size_t c = x.dim(0), t = x.dim(1);
  std::vector<double> values(static_cast<std::size_t>(knots));
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (auto& v : values) v = normal(rng, 1.0, sigma);
    const auto curve = smooth_curve(t, values);
    for (std::size_t s = 0; s < t; ++s) out.at(ch, s) *= curve[s];
  }
  return out;
}

inline constexpr double kMinWarpSpeed = 0.1;

/// Monotone time-distortion map tau over 0..t-1 with tau(0) = 0 and
/// tau(t-1) = t-1, built from cumulative local speeds. Speeds follow a
/// smooth curve through knot values ~ N(1, sigma^2), clipped at 0.1.
inline std::vector<double> time_warp_map(std::size_t t, double sigma, Rng& rng, int knots = kWarpKnots) {
  if (knots < 2) throw ConfigError("time_warp: knots must be >= 2");
  std::vector<double> tau(t);
  for (std::size_t s = 0; s < t; ++s) tau[s] = static_cast<double>(s);
  if (sigma <= 0.0 || t < 2) return tau;
  std::vector<double> values(static_cast<std::size_t>(knots));
  for (auto& v : values) v = std::max(normal(rng, 1.0, sigma), kMinWarpSpeed);
  auto speed = smooth_curve(t, values);
  tau[0] = 0.0;
  for (std::size_t s = 1; s < t; ++s) tau[s] = tau[s - 1] + std::max(speed[s], kMinWarpSpeed);
  const double norm = static_cast<double>(t - 1) / tau[t - 1];
  for (std::size_t s = 1; s + 1 < t; ++s) tau[s] *= norm;
  tau[t - 1] = static_cast<double>(t - 1);
  return tau;
}

/// Resamples every channel of x at the warped positions by linear
/// interpolation.
inline Tensor<double> resample(const Tensor<double>& x, const std::vector<double>& tau) {
  const std::size_t c = x.dim(0), t = x.dim(1);
  Tensor<double> out(x.shape());
  for (std::size_t s = 0; s < t; ++s) {
    const double p = std::clamp(tau[s], 0.0, static_cast<double>(t - 1));
    const auto lo = static_cast<std::size_t>(std::floor(p));
    const std::size_t hi = std::min(lo + 1, t - 1);
    const double w = p - static_cast<double>(lo);
    for (std::size_t ch = 0; ch < c; ++ch) out.at(ch, s) = (1.0 - w) * x.at(ch, lo) + w * x.at(ch, hi);
  }
  return out;
}

inline Tensor<double> time_warp(const Tensor<double>& x, double sigma, Rng& rng, int knots = kWarpKnots) {
  if (sigma <= 0.0) return x;
  return resample(x, time_warp_map(x.dim(1), sigma, rng, knots));
}

inline Tensor<double> apply_policy(const Tensor<double>& x, Policy p, int magnitude, Rng& rng) {
  const double s = intensity(p, magnitude);
  switch (p) {
    case Policy::time_warp: return time_warp(x, s, rng);
    case Policy::magnitude_warp: return magnitude_warp(x, s, rng);
    case Policy::jitter: return jitter(x, s, rng);
    case Policy::rescale: return rescale(x, s, rng);
  }
  return x;
}

/// N distinct policies drawn uniformly without replacement, in draw order.
inline std::vector<Policy> sample_policies(const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<Policy> pool = cfg.policies;
  for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.n_policies); ++i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(i),
                                                        static_cast<std::int64_t>(pool.size() - 1)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(cfg.n_policies));
  return pool;
}

/// RandAugment on one (c, t) series.
inline Tensor<double> rand_augment(const Tensor<double>& x, const AugmentConfig& cfg, Rng& rng) {
  Tensor<double> out = x;
  for (Policy p : sample_policies(cfg, rng)) out = apply_policy(out, p, cfg.magnitude, rng);
  return out;
}

/// RandAugment on a (b, c, t) batch: one policy draw for the whole batch,
/// per-sample random perturbations. An absent config leaves data untouched.
inline Tensor<double> augment_batch(const Tensor<double>& x, const std::optional<AugmentConfig>& cfg, Rng& rng) {
  if (!cfg || x.dim(0) == 0) return x;
  const auto policies = sample_policies(*cfg, rng);
  Tensor<double> out = x;
  const std::size_t b = x.dim(0), c = x.dim(1), t = x.dim(2);
  for (std::size_t i = 0; i < b; ++i) {
    Tensor<double> s(Shape{c, t}, std::vector<double>(x.row(i).begin(), x.row(i).end()));
    for (Policy p : policies) s = apply_policy(s, p, cfg->magnitude, rng);
    std::copy(s.data(), s.data() + s.size(), out.row(i).begin());
  }
  return out;
}

}  // namespace ssltsc::augment
