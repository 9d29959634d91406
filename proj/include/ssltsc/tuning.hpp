#pragma once

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "ssltsc/augment.hpp"
#include "ssltsc/core/random.hpp"
#include "ssltsc/errors.hpp"

namespace ssltsc::tuning {

using nlohmann::json;

enum class ParamKind { continuous, integer, discrete };
enum class Scale { linear, log };

/// One tunable parameter. `name` is a dotted path into the training
/// configuration, e.g. "vat.epsilon".
struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::continuous;
  double lo = 0, hi = 1;
  std::vector<json> choices;
  Scale scale = Scale::linear;

  void validate() const {
    if (kind == ParamKind::discrete) {
      if (choices.empty()) throw ConfigError("search space: '" + name + "' has no choices");
      return;
    }
    if (!(lo <= hi)) throw ConfigError("search space: '" + name + "' has lo > hi");
    if (scale == Scale::log && !(lo > 0)) throw ConfigError("search space: log-scaled '" + name + "' needs lo > 0");
  }

  bool contains(const json& v) const {
    if (kind == ParamKind::discrete) return std::find(choices.begin(), choices.end(), v) != choices.end();
    if (!v.is_number()) return false;
    const double x = v.get<double>();
    if (kind == ParamKind::integer && std::abs(x - std::round(x)) > 0) return false;
    return x >= lo && x <= hi;
  }
};

struct SearchSpace {
  std::vector<ParamSpec> params;

  void validate() const {
    for (const auto& p : params) p.validate();
  }
  /// Whether every parameter of the space has an in-range value in `fragment`.
  bool contains(const json& fragment) const {
    for (const auto& p : params) {
      const auto ptr = json::json_pointer("/" + replace_dots(p.name));
      if (!fragment.contains(ptr) || !p.contains(fragment.at(ptr))) return false;
    }
    return true;
  }

  static std::string replace_dots(std::string s) {
    std::replace(s.begin(), s.end(), '.', '/');
    return s;
  }
};

inline ParamSpec continuous(std::string name, double lo, double hi, Scale s = Scale::linear) {
  return {std::move(name), ParamKind::continuous, lo, hi, {}, s};
}
inline ParamSpec integer(std::string name, double lo, double hi) {
  return {std::move(name), ParamKind::integer, lo, hi, {}, Scale::linear};
}
inline ParamSpec discrete(std::string name, std::vector<json> choices) {
  return {std::move(name), ParamKind::discrete, 0, 0, std::move(choices), Scale::linear};
}

/// Shared parameters of the deep methods. The RandAugment N range is capped
/// at the number of available policies.
inline std::vector<ParamSpec> shared_space(bool with_rampup) {
  std::vector<ParamSpec> s{continuous("weight_decay", 1e-6, 1e-2, Scale::log),
                           continuous("learning_rate", 1e-5, 1e-2, Scale::log),
                           integer("augment.magnitude", 1, 10),
                           integer("augment.n_policies", 1, static_cast<double>(augment::kAllPolicies.size()))};
  if (with_rampup) s.insert(s.begin() + 2, integer("rampup_length", 5000, 25000));
  return s;
}

/// Search space of a method by name: the six deep methods, "random_forest"
/// and "logistic_regression".
inline SearchSpace space_for(const std::string& method) {
  SearchSpace s;
  if (method == "random_forest") {
    s.params = {integer("forest.n_trees", 100, 1000), integer("forest.max_depth", 3, 25)};
    return s;
  }
  if (method == "logistic_regression") {
    s.params = {discrete("linear.penalty", {"none", "l1", "l2"})};
    return s;
  }
  s.params = shared_space(method != "supervised");
  auto add = [&](std::initializer_list<ParamSpec> more) { s.params.insert(s.params.end(), more); };
  if (method == "supervised") {
  } else if (method == "mean_teacher") {
    add({continuous("mean_teacher.alpha_ema", 0.9, 1.0, Scale::log), continuous("mean_teacher.w_max", 0.0, 10.0)});
  } else if (method == "vat") {
    add({continuous("vat.epsilon", 0.1, 10.0), continuous("vat.alpha", 0.1, 5.0)});
  } else if (method == "mixmatch") {
    add({continuous("mixmatch.alpha_beta", 0.5, 1.0), continuous("mixmatch.lambda_u", 0.0, 150.0)});
  } else if (method == "ladder") {
    add({discrete("ladder.noise_std", {0.1, 0.3, 0.45, 0.6}), continuous("ladder.loss_weight", 0.1, 10.0, Scale::log)});
  } else if (method == "selfsup") {
    add({continuous("selfsup.lambda", 0.1, 10.0, Scale::log), discrete("selfsup.horizon", {0.1, 0.2, 0.3}),
         discrete("selfsup.stride", {0.05, 0.1, 0.2, 0.3})});
  } else {
    throw ConfigError("no search space for method '" + method + "'");
  }
  return s;
}

inline json sample_value(const ParamSpec& p, Rng& rng) {
  switch (p.kind) {
    case ParamKind::discrete:
      return p.choices[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(p.choices.size()) - 1))];
    case ParamKind::integer: {
      if (p.scale == Scale::log) {
        const double v = std::exp(uniform(rng, std::log(p.lo), std::log(p.hi + 1.0)));
        return std::min(static_cast<std::int64_t>(std::floor(v)), static_cast<std::int64_t>(p.hi));
      }
      return uniform_int(rng, static_cast<std::int64_t>(p.lo), static_cast<std::int64_t>(p.hi));
    }
    case ParamKind::continuous:
      if (p.scale == Scale::log) return std::exp(uniform(rng, std::log(p.lo), std::log(p.hi)));
      return uniform(rng, p.lo, p.hi);
  }
  return nullptr;
}

/// Nested JSON fragment with one sampled value per parameter.
inline json sample_config(const SearchSpace& space, Rng& rng) {
  json out = json::object();
  for (const auto& p : space.params) out[json::json_pointer("/" + SearchSpace::replace_dots(p.name))] = sample_value(p, rng);
  return out;
}

struct TrialRecord {
  std::int64_t trial_id = 0;
  json config;
  std::int64_t resource = 0;
  double val_wauc = 0;
  std::string status = "ok";  // ok | failed

  json to_json() const {
    json j{{"trial_id", trial_id}, {"config", config}, {"resource", resource}, {"status", status}};
    j["val_wauc"] = status == "ok" ? json(val_wauc) : json(nullptr);
    return j;
  }
};

struct TunedConfig {
  std::string method;
  json config = json::object();  // best fragment
  double objective = -std::numeric_limits<double>::infinity();
  std::int64_t resource = 0;
  bool incomplete = false;
  std::vector<TrialRecord> trials;

  json to_json() const {
    // A search with no successful trial has no objective; stored as null.
    const json obj = std::isfinite(objective) ? json(objective) : json(nullptr);
    return {{"method", method},     {"config", config},         {"objective", obj},
            {"resource", resource}, {"incomplete", incomplete}, {"n_trials", trials.size()}};
  }
  static TunedConfig from_json(const json& j) {
    TunedConfig t;
    t.method = j.at("method").get<std::string>();
    t.config = j.at("config");
    if (j.contains("objective") && j.at("objective").is_number()) t.objective = j.at("objective").get<double>();
    t.resource = j.value("resource", std::int64_t{0});
    t.incomplete = j.value("incomplete", false);
    return t;
  }
};

/// Objective of one trial: validation score of `config` after `resource`
/// update steps (or any resource unit). Throwing counts as a failed trial.
using TrainFn = std::function<double(const json& config, std::int64_t resource)>;

struct Rung {
  std::int64_t n_configs = 0;
  std::int64_t resource = 0;
};

struct Bracket {
  int s = 0;
  std::vector<Rung> rungs;
};

/// floor(log_eta(x)) for x >= 1, exact for integer powers.
inline int floor_log(double x, int eta) {
  int s = 0;
  double p = eta;
  while (p <= x * (1.0 + 1e-12)) {
    ++s;
    p *= eta;
  }
  return s;
}

/// Successive-halving brackets s = s_max, ..., 0 with
/// n = ceil((s_max + 1) / (s + 1) * eta^s) configurations at resource
/// r = R eta^-s, each rung keeping floor(n_i / eta) survivors at eta times the resource.
inline std::vector<Bracket> hyperband_schedule(std::int64_t r_max, int eta, std::int64_t min_resource = 1) {
  if (eta < 2) throw ConfigError("hyperband: eta must be >= 2");
  if (r_max < 1 || min_resource < 1 || min_resource > r_max) throw ConfigError("hyperband: need 1 <= min_resource <= R_max");
  const int s_max = floor_log(static_cast<double>(r_max) / static_cast<double>(min_resource), eta);
  std::vector<Bracket> out;
  for (int s = s_max; s >= 0; --s) {
    Bracket b;
    b.s = s;
    const double eta_s = std::pow(eta, s);
    auto n = static_cast<std::int64_t>(std::ceil(static_cast<double>(s_max + 1) / (s + 1) * eta_s - 1e-9));
    for (int i = 0; i <= s; ++i) {
      const double r = static_cast<double>(r_max) * std::pow(eta, i) / eta_s;
      b.rungs.push_back({n, std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(r)))});
      n /= eta;
    }
    out.push_back(std::move(b));
  }
  return out;
}

struct HyperbandOptions {
  std::int64_t r_max = 25000;
  int eta = 3;
  std::int64_t min_resource = 1;
  std::int64_t max_trials = std::numeric_limits<std::int64_t>::max();
  std::int64_t max_total_resource = std::numeric_limits<std::int64_t>::max();
  double max_seconds = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
  std::function<void(const TrialRecord&)> on_trial;
};

namespace detail {

class Budget {
 public:
  explicit Budget(const HyperbandOptions& o) : opts_(o), start_(std::chrono::steady_clock::now()) {}

  bool allows(std::int64_t resource) const {
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return trials_ < opts_.max_trials && spent_ + resource <= opts_.max_total_resource && elapsed < opts_.max_seconds;
  }
  void charge(std::int64_t resource) {
    ++trials_;
    spent_ += resource;
  }
  std::int64_t spent() const { return spent_; }

 private:
  const HyperbandOptions& opts_;
  std::chrono::steady_clock::time_point start_;
  std::int64_t trials_ = 0, spent_ = 0;
};

inline TrialRecord run_trial(const TrainFn& fn, const json& config, std::int64_t resource, std::int64_t id) {
  TrialRecord rec{id, config, resource, 0.0, "ok"};
  try {
    rec.val_wauc = fn(config, resource);
    if (!std::isfinite(rec.val_wauc)) rec.status = "failed";
  } catch (const Error& e) {
    spdlog::warn("tuning trial {} failed: {}", id, e.what());
    rec.status = "failed";
  }
  return rec;
}

inline void consider(TunedConfig& best, const TrialRecord& rec) {
  if (rec.status == "ok" && rec.val_wauc > best.objective) {
    best.objective = rec.val_wauc;
    best.config = rec.config;
    best.resource = rec.resource;
  }
}

}  // namespace detail

/// Hyperband with random sampling. Trials promoted to a larger resource are
/// retrained from scratch. The returned configuration is the best completed
/// trial over all rungs; `incomplete` is set when the budget ran out.
inline TunedConfig hyperband(const SearchSpace& space, const TrainFn& train_fn, const HyperbandOptions& opts) {
  space.validate();
  Rng rng(derive_seed(opts.seed, 0x4B));
  detail::Budget budget(opts);
  TunedConfig best;
  std::int64_t next_id = 0;
  for (const auto& bracket : hyperband_schedule(opts.r_max, opts.eta, opts.min_resource)) {
    std::vector<json> configs;
    for (std::int64_t i = 0; i < bracket.rungs.front().n_configs; ++i) configs.push_back(sample_config(space, rng));
    for (std::size_t r = 0; r < bracket.rungs.size() && !configs.empty(); ++r) {
      const auto resource = bracket.rungs[r].resource;
      std::vector<std::pair<double, std::size_t>> scores;
      for (std::size_t i = 0; i < configs.size(); ++i) {
        if (!budget.allows(resource)) {
          best.incomplete = true;
          spdlog::warn("hyperband: budget exhausted after {} trials; returning best so far", best.trials.size());
          if (!std::isfinite(best.objective)) best.config = best.trials.empty() ? configs[i] : best.trials.front().config;
          return best;
        }
        budget.charge(resource);
        auto rec = detail::run_trial(train_fn, configs[i], resource, next_id++);
        if (opts.on_trial) opts.on_trial(rec);
        detail::consider(best, rec);
        scores.emplace_back(rec.status == "ok" ? rec.val_wauc : -std::numeric_limits<double>::infinity(), i);
        best.trials.push_back(std::move(rec));
      }
      if (r + 1 == bracket.rungs.size()) break;
      const auto keep = static_cast<std::size_t>(bracket.rungs[r + 1].n_configs);
      std::stable_sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      std::vector<json> survivors;
      for (std::size_t i = 0; i < std::min(keep, scores.size()); ++i) survivors.push_back(configs[scores[i].second]);
      configs = std::move(survivors);
    }
  }
  return best;
}

/// Best of `n_trials` independently sampled configurations.
inline TunedConfig random_search(const SearchSpace& space, const std::function<double(const json&)>& objective_fn,
                                 std::int64_t n_trials, std::uint64_t seed,
                                 const std::function<void(const TrialRecord&)>& on_trial = {}) {
  if (n_trials < 1) throw ConfigError("random_search: n_trials must be >= 1");
  space.validate();
  Rng rng(derive_seed(seed, 0x52));
  TunedConfig best;
  for (std::int64_t i = 0; i < n_trials; ++i) {
    const auto cfg = sample_config(space, rng);
    auto rec = detail::run_trial([&](const json& c, std::int64_t) { return objective_fn(c); }, cfg, 1, i);
    if (on_trial) on_trial(rec);
    detail::consider(best, rec);
    best.trials.push_back(std::move(rec));
  }
  if (!std::isfinite(best.objective)) best.config = best.trials.front().config;
  return best;
}

}  // namespace ssltsc::tuning
