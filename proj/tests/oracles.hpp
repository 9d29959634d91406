#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner. None of these call the code they check.

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "ssltsc/ssltsc.hpp"

namespace ssltsc::oracle {

/// AUC by enumerating every (positive, negative) pair.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& positive) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      pairs += 1;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

/// Prevalence-weighted one-vs-rest AUC from pairwise counts.
inline double pairwise_weighted_auc(const Tensor<double>& probs, const std::vector<int>& labels) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  double total = 0, weight = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> s(n);
    std::vector<int> pos(n);
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = probs.at(i, c);
      pos[i] = labels[i] == static_cast<int>(c);
      count += static_cast<std::size_t>(pos[i]);
    }
    if (count == 0 || count == n) continue;
    total += static_cast<double>(count) * pairwise_auc(s, pos);
    weight += static_cast<double>(count);
  }
  return total / weight;
}

/// Random probability table with labels; a fraction of scores is rounded
/// to force ties.
struct AucInstance {
  Tensor<double> probs;
  std::vector<int> labels;
};

inline AucInstance random_auc_instance(Rng& rng) {
  const auto n = static_cast<std::size_t>(uniform_int(rng, 10, 200));
  const auto k = static_cast<std::size_t>(uniform_int(rng, 2, 5));
  AucInstance inst;
  inst.probs = Tensor<double>(Shape{n, k});
  inst.labels.resize(n);
  const bool coarse = uniform(rng) < 0.3;
  for (std::size_t i = 0; i < n; ++i) {
    inst.labels[i] = static_cast<int>(i < k ? i : static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(k) - 1)));
    double z = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double v = uniform(rng) + (inst.labels[i] == static_cast<int>(c) ? 0.5 * uniform(rng) : 0.0);
      if (coarse) v = std::round(v * 4) / 4 + 0.01;
      inst.probs.at(i, c) = v;
      z += v;
    }
    for (std::size_t c = 0; c < k; ++c) inst.probs.at(i, c) /= z;
  }
  return inst;
}

/// Hand-computed Hyperband ladder for R = 27, eta = 3: per bracket the
/// (n_configs, resource) pairs of every rung.
inline std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> hyperband_ladder_27_3() {
  return {{{27, 1}, {9, 3}, {3, 9}, {1, 27}},
          {{12, 3}, {4, 9}, {1, 27}},
          {{6, 9}, {2, 27}},
          {{4, 27}}};
}

/// Worst-case unit direction of a 2-D linear softmax model at x, by sweeping
/// 360 directions of radius eps and keeping the largest KL(p(x) || p(x + r)).
inline double worst_direction_degrees(const std::array<std::array<double, 2>, 2>& w, const std::array<double, 2>& b,
                                      const std::array<double, 2>& x, double eps) {
  auto probs = [&](double u, double v) {
    const double l0 = w[0][0] * u + w[0][1] * v + b[0];
    const double l1 = w[1][0] * u + w[1][1] * v + b[1];
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    return std::array<double, 2>{e0 / (e0 + e1), e1 / (e0 + e1)};
  };
  const auto p = probs(x[0], x[1]);
  double best = -1, best_deg = 0;
  for (int deg = 0; deg < 360; ++deg) {
    const double a = deg * std::numbers::pi / 180.0;
    const auto q = probs(x[0] + eps * std::cos(a), x[1] + eps * std::sin(a));
    const double kl = p[0] * std::log(p[0] / q[0]) + p[1] * std::log(p[1] / q[1]);
    if (kl > best) {
      best = kl;
      best_deg = deg;
    }
  }
  return best_deg;
}

/// Angle between two axes (lines through the origin), in degrees within [0, 90].
inline double axis_angle_degrees(double a_deg, double b_deg) {
  double d = std::fmod(std::abs(a_deg - b_deg), 180.0);
  return std::min(d, 180.0 - d);
}

/// Central finite-difference check of `loss` against gradients accumulated
/// by `backward` on `n_checks` randomly chosen scalar parameters. Returns the
/// worst relative error max|a - n| / max(|a|, |n|, floor).
template <typename Model>
double gradient_check(Model& m, const std::function<double()>& loss, const std::function<void()>& backward,
                      int n_checks, Rng& rng, double h = 1e-6, double floor = 1e-6, std::string* worst_name = nullptr) {
  m.zero_grad();
  backward();
  auto params = m.named_parameters();
  double worst = 0;
  for (int c = 0; c < n_checks; ++c) {
    auto& [name, p] = params[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(params.size()) - 1))];
    const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(p->size()) - 1));
    const double analytic = p->grad()[j];
    const double orig = p->value()[j];
    p->value()[j] = orig + h;
    const double up = loss();
    p->value()[j] = orig - h;
    const double down = loss();
    p->value()[j] = orig;
    const double numeric = (up - down) / (2 * h);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    if (rel > worst) {
      worst = rel;
      if (worst_name) *worst_name = name + "[" + std::to_string(j) + "]";
    }
  }
  return worst;
}

/// Parameters of the FCN from layer shapes alone.
inline std::size_t fcn_parameter_count(std::size_t c, std::size_t k, std::array<std::size_t, 3> f = {128, 256, 128},
                                       std::array<std::size_t, 3> kw = {8, 5, 3}) {
  std::size_t n = 0, cin = c;
  for (std::size_t b = 0; b < 3; ++b) {
    n += f[b] * cin * kw[b] + 3 * f[b];
    cin = f[b];
  }
  return n + cin * k + k;
}

}  // namespace ssltsc::oracle
