#pragma once

#include <array>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>

#include "ssltsc/augment.hpp"
#include "ssltsc/errors.hpp"

namespace ssltsc::train {

enum class Method { supervised, mean_teacher, vat, mixmatch, ladder, selfsup };

inline constexpr std::array<Method, 6> kAllMethods{Method::supervised, Method::mean_teacher, Method::vat,
                                                   Method::mixmatch,   Method::ladder,       Method::selfsup};

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::supervised: return "supervised";
    case Method::mean_teacher: return "mean_teacher";
    case Method::vat: return "vat";
    case Method::mixmatch: return "mixmatch";
    case Method::ladder: return "ladder";
    case Method::selfsup: return "selfsup";
  }
  return "unknown";
}

inline Method method_from_name(std::string_view s) {
  for (Method m : kAllMethods) {
    if (method_name(m) == s) return m;
  }
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

struct MeanTeacherParams {
  double alpha_ema = 0.99;
  double w_max = 1.0;
};

struct VatParams {
  double epsilon = 1.0;
  double alpha = 1.0;
  double xi = 10.0;
  int n_power = 1;
};

struct MixMatchParams {
  double alpha_beta = 0.75;
  double lambda_u = 75.0;
  int k_aug = 2;
  double temperature = 0.5;
};

struct LadderParams {
  double noise_std = 0.3;
  double loss_weight = 1.0;
};

struct SelfSupParams {
  double lambda = 1.0;
  double horizon = 0.1;
  double stride = 0.1;
};

struct TrainConfig {
  Method method = Method::supervised;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::int64_t rampup_length = 5000;
  std::int64_t max_steps = 25000;
  std::size_t b_l = 32;
  std::size_t b_u = 96;
  std::int64_t eval_every = 500;
  std::optional<augment::AugmentConfig> augment = augment::AugmentConfig{};
  std::array<std::size_t, 3> filters{128, 256, 128};
  MeanTeacherParams mean_teacher;
  VatParams vat;
  MixMatchParams mixmatch;
  LadderParams ladder;
  SelfSupParams selfsup;
  std::uint64_t seed = 0;

  void validate() const;
};

namespace detail {

inline void check_range(double v, double lo, double hi, const char* field) {
  if (!(v >= lo && v <= hi)) {
    throw ConfigError(std::string(field) + " = " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  }
}

}  // namespace detail

inline void TrainConfig::validate() const {
  using detail::check_range;
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (rampup_length < 1) throw ConfigError("rampup_length must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (b_l < 1) throw ConfigError("b_l must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (augment) augment->validate();
  switch (method) {
    case Method::supervised: break;
    case Method::mean_teacher:
      check_range(mean_teacher.alpha_ema, 0.9, 1.0, "mean_teacher.alpha_ema");
      check_range(mean_teacher.w_max, 0.0, 10.0, "mean_teacher.w_max");
      break;
    case Method::vat:
      check_range(vat.epsilon, 0.1, 10.0, "vat.epsilon");
      check_range(vat.alpha, 0.1, 5.0, "vat.alpha");
      if (vat.n_power < 1) throw ConfigError("vat.n_power must be >= 1");
      if (!(vat.xi > 0)) throw ConfigError("vat.xi must be > 0");
      break;
    case Method::mixmatch:
      check_range(mixmatch.alpha_beta, 0.5, 1.0, "mixmatch.alpha_beta");
      check_range(mixmatch.lambda_u, 0.0, 150.0, "mixmatch.lambda_u");
      if (mixmatch.k_aug < 1) throw ConfigError("mixmatch.k_aug must be >= 1");
      if (!(mixmatch.temperature > 0)) throw ConfigError("mixmatch.temperature must be > 0");
      break;
    case Method::ladder:
      check_range(ladder.noise_std, 0.0, 1.0, "ladder.noise_std");
      check_range(ladder.loss_weight, 0.1, 10.0, "ladder.loss_weight");
      break;
    case Method::selfsup:
      check_range(selfsup.lambda, 0.1, 10.0, "selfsup.lambda");
      check_range(selfsup.horizon, 0.01, 0.5, "selfsup.horizon");
      check_range(selfsup.stride, 0.01, 0.5, "selfsup.stride");
      break;
  }
  if (method != Method::supervised && b_u < 1) throw ConfigError("b_u must be >= 1 for semi-supervised methods");
}

inline nlohmann::json augment_to_json(const std::optional<augment::AugmentConfig>& a) {
  if (!a) return false;
  nlohmann::json policies = nlohmann::json::array();
  for (auto p : a->policies) policies.push_back(std::string(augment::policy_name(p)));
  return {{"n_policies", a->n_policies}, {"magnitude", a->magnitude}, {"policies", policies}};
}

inline std::optional<augment::AugmentConfig> augment_from_json(const nlohmann::json& j) {
  if (j.is_null() || (j.is_boolean() && !j.get<bool>())) return std::nullopt;
  if (j.is_boolean()) return augment::AugmentConfig{};
  augment::AugmentConfig a;
  a.n_policies = j.value("n_policies", a.n_policies);
  a.magnitude = j.value("magnitude", a.magnitude);
  if (j.contains("policies")) {
    a.policies.clear();
    for (const auto& p : j.at("policies")) a.policies.push_back(augment::policy_from_name(p.get<std::string>()));
  }
  return a;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"method", std::string(method_name(c.method))},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"rampup_length", c.rampup_length},
          {"max_steps", c.max_steps},
          {"b_l", c.b_l},
          {"b_u", c.b_u},
          {"eval_every", c.eval_every},
          {"augment", augment_to_json(c.augment)},
          {"filters", c.filters},
          {"seed", c.seed},
          {"mean_teacher", {{"alpha_ema", c.mean_teacher.alpha_ema}, {"w_max", c.mean_teacher.w_max}}},
          {"vat", {{"epsilon", c.vat.epsilon}, {"alpha", c.vat.alpha}, {"xi", c.vat.xi}, {"n_power", c.vat.n_power}}},
          {"mixmatch",
           {{"alpha_beta", c.mixmatch.alpha_beta},
            {"lambda_u", c.mixmatch.lambda_u},
            {"k_aug", c.mixmatch.k_aug},
            {"temperature", c.mixmatch.temperature}}},
          {"ladder", {{"noise_std", c.ladder.noise_std}, {"loss_weight", c.ladder.loss_weight}}},
          {"selfsup", {{"lambda", c.selfsup.lambda}, {"horizon", c.selfsup.horizon}, {"stride", c.selfsup.stride}}}};
}

/// `"augment": false` disables augmentation. Missing keys keep their defaults; unknown keys are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  static const std::array<const char*, 16> known{"method",   "learning_rate", "weight_decay", "rampup_length",
                                                 "max_steps", "b_l",          "b_u",          "eval_every",
                                                 "augment",  "filters",       "seed",         "mean_teacher",
                                                 "vat",      "mixmatch",      "ladder",       "selfsup"};
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
      throw ConfigError("training config: unknown field '" + key + "'");
    }
  }
  TrainConfig c;
  try {
    if (j.contains("method")) c.method = method_from_name(j.at("method").get<std::string>());
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.rampup_length = j.value("rampup_length", c.rampup_length);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.b_l = j.value("b_l", c.b_l);
    c.b_u = j.value("b_u", c.b_u);
    c.eval_every = j.value("eval_every", c.eval_every);
    if (j.contains("augment")) c.augment = augment_from_json(j.at("augment"));
    c.filters = j.value("filters", c.filters);
    c.seed = j.value("seed", c.seed);
    if (j.contains("mean_teacher")) {
      const auto& m = j.at("mean_teacher");
      c.mean_teacher.alpha_ema = m.value("alpha_ema", c.mean_teacher.alpha_ema);
      c.mean_teacher.w_max = m.value("w_max", c.mean_teacher.w_max);
    }
    if (j.contains("vat")) {
      const auto& m = j.at("vat");
      c.vat.epsilon = m.value("epsilon", c.vat.epsilon);
      c.vat.alpha = m.value("alpha", c.vat.alpha);
      c.vat.xi = m.value("xi", c.vat.xi);
      c.vat.n_power = m.value("n_power", c.vat.n_power);
    }
    if (j.contains("mixmatch")) {
      const auto& m = j.at("mixmatch");
      c.mixmatch.alpha_beta = m.value("alpha_beta", c.mixmatch.alpha_beta);
      c.mixmatch.lambda_u = m.value("lambda_u", c.mixmatch.lambda_u);
      c.mixmatch.k_aug = m.value("k_aug", c.mixmatch.k_aug);
      c.mixmatch.temperature = m.value("temperature", c.mixmatch.temperature);
    }
    if (j.contains("ladder")) {
      const auto& m = j.at("ladder");
      c.ladder.noise_std = m.value("noise_std", c.ladder.noise_std);
      c.ladder.loss_weight = m.value("loss_weight", c.ladder.loss_weight);
    }
    if (j.contains("selfsup")) {
      const auto& m = j.at("selfsup");
      c.selfsup.lambda = m.value("lambda", c.selfsup.lambda);
      c.selfsup.horizon = m.value("horizon", c.selfsup.horizon);
      c.selfsup.stride = m.value("stride", c.selfsup.stride);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  return c;
}

/// Merges a (possibly nested) JSON fragment into `base`.
inline TrainConfig apply_overrides(const TrainConfig& base, const nlohmann::json& fragment) {
  auto j = to_json(base);
  j.merge_patch(fragment);
  return train_config_from_json(j);
}

}  // namespace ssltsc::train
