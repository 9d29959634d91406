#pragma once

#include <spdlog/spdlog.h>

#include <array>
#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ssltsc/baselines.hpp"
#include "ssltsc/checkpoint.hpp"
#include "ssltsc/metrics.hpp"
#include "ssltsc/training.hpp"
#include "ssltsc/tuning.hpp"

namespace ssltsc::eval {

inline constexpr std::array<std::int64_t, 5> kDefaultGrid{50, 100, 250, 500, 1000};
inline constexpr const char* kFullyLabeled = "supervised_full";

inline bool is_tabular(std::string_view method) {
  return method == "random_forest" || method == "logistic_regression";
}

inline bool is_known_method(std::string_view method) {
  if (is_tabular(method) || method == kFullyLabeled) return true;
  for (auto m : train::kAllMethods) {
    if (train::method_name(m) == method) return true;
  }
  return false;
}

/// Everything needed to train one method: a deep training configuration or
/// tabular hyperparameters, depending on the method.
struct MethodSetup {
  std::string name;
  train::TrainConfig deep;
  baselines::TabularParams tabular;

  /// Applies a tuned fragment (as produced by the search space of `name`).
  void apply(const nlohmann::json& fragment) {
    if (is_tabular(name)) {
      if (fragment.contains("forest")) {
        const auto& f = fragment.at("forest");
        tabular.forest.n_trees = f.value("n_trees", tabular.forest.n_trees);
        tabular.forest.max_depth = f.value("max_depth", tabular.forest.max_depth);
      }
      if (fragment.contains("linear")) {
        const auto& l = fragment.at("linear");
        if (l.contains("penalty")) tabular.linear.penalty = baselines::penalty_from_name(l.at("penalty").get<std::string>());
        tabular.linear.C = l.value("C", tabular.linear.C);
      }
    } else {
      deep = train::apply_overrides(deep, fragment);
    }
  }
};

/// Setup for `name` on top of a base training configuration.
inline MethodSetup make_setup(const std::string& name, const train::TrainConfig& base) {
  if (!is_known_method(name)) throw ConfigError("unknown method '" + name + "'");
  MethodSetup s;
  s.name = name;
  s.deep = base;
  if (!is_tabular(name)) s.deep.method = train::method_from_name(name == kFullyLabeled ? "supervised" : name);
  return s;
}

struct CellOptions {
  std::optional<std::filesystem::path> artifacts;  // checkpoint and history directory
};

namespace detail {

inline std::vector<int> labels_of(const data::TimeSeriesDataset& ds, std::span<const std::size_t> idx) {
  std::vector<int> y;
  y.reserve(idx.size());
  for (std::size_t i : idx) y.push_back(ds.labels[i]);
  return y;
}

inline std::string cell_stem(const std::string& method, std::int64_t n_l, std::int64_t seed) {
  return method + "_nl" + std::to_string(n_l) + "_s" + std::to_string(seed);
}

}  // namespace detail

/// Trains and scores one (method, n_l, seed) cell. `base` supplies the fixed
/// validation and test rows; its training pool is re-unlabeled with `seed`.
/// The fully-labeled baseline uses the whole pool (n_l = pool size).
/// Failures are returned as records with status "failed".
inline metrics::ResultRecord run_cell(const data::TimeSeriesDataset& ds, const data::SemiSupervisedSplit& base,
                                      const MethodSetup& setup, std::int64_t n_labeled, std::uint64_t seed,
                                      const baselines::FeatureTable* features = nullptr, const CellOptions& opts = {}) {
  metrics::ResultRecord rec;
  rec.dataset = ds.name;
  rec.method = setup.name;
  rec.seed = static_cast<std::int64_t>(seed);
  const auto pool = base.train_pool();
  if (setup.name == kFullyLabeled) n_labeled = static_cast<std::int64_t>(pool.size());
  rec.n_labeled = n_labeled;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto split = data::with_labeled(base, ds, static_cast<std::size_t>(n_labeled), seed);
    const auto y_val = detail::labels_of(ds, split.val);
    const auto y_test = detail::labels_of(ds, split.test);
    if (is_tabular(setup.name)) {
      std::optional<baselines::FeatureTable> own;
      if (!features) features = &own.emplace(baselines::extract_features(ds));
      auto params = setup.tabular;
      params.forest.seed = seed;
      const auto kind = setup.name == "random_forest" ? baselines::TabularKind::forest : baselines::TabularKind::linear;
      const auto m = baselines::fit_on_labeled(kind, *features, ds, split, params);
      rec.wauc_val = metrics::weighted_auc(baselines::to_tensor(m->predict_proba(features->select_rows(split.val).values)), y_val);
      rec.wauc_test = metrics::weighted_auc(baselines::to_tensor(m->predict_proba(features->select_rows(split.test).values)), y_test);
      rec.best_step = 0;
    } else {
      auto cfg = setup.deep;
      cfg.seed = seed;
      auto trained = train::run_training<float>(ds, split, cfg);
      rec.best_step = trained.best_step;
      rec.wauc_val = std::isfinite(trained.best_val) ? trained.best_val : train::evaluate_wauc(trained.model, ds, split.val);
      rec.wauc_test = train::evaluate_wauc(trained.model, ds, split.test);
      if (opts.artifacts) {
        const auto stem = detail::cell_stem(setup.name, n_labeled, rec.seed);
        model::save_checkpoint(*opts.artifacts / "checkpoints" / (ds.name + "_" + stem + ".ckpt"), trained.model,
                               trained.best_step, "");
        train::write_history_jsonl(*opts.artifacts / "histories" / (ds.name + "_" + stem + ".jsonl"), trained.history,
                                   50);
      }
    }
  } catch (const Error& e) {
    spdlog::error("cell {}/{}/n_l={}/seed={} failed: {}", ds.name, setup.name, n_labeled, seed, e.what());
    rec.status = "failed";
  }
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

/// Repeated-unlabeling protocol: for every n_l in `grid` and repeat r, a
/// fresh stratified unlabeling with seed base_seed + r, training, and test
/// wAUC of the selected checkpoint.
inline std::vector<metrics::ResultRecord> run_evaluation(const data::TimeSeriesDataset& ds,
                                                         const data::SemiSupervisedSplit& base, const MethodSetup& setup,
                                                         std::span<const std::int64_t> grid, int n_repeats,
                                                         std::uint64_t base_seed, const CellOptions& opts = {}) {
  if (n_repeats < 1) throw ConfigError("n_repeats must be >= 1");
  std::optional<baselines::FeatureTable> features;
  if (is_tabular(setup.name)) features = baselines::extract_features(ds);
  std::vector<metrics::ResultRecord> rows;
  const std::vector<std::int64_t> full{0};
  const auto cells = setup.name == kFullyLabeled ? std::span<const std::int64_t>(full) : grid;
  for (std::int64_t n_l : cells) {
    for (int r = 0; r < n_repeats; ++r) {
      rows.push_back(run_cell(ds, base, setup, n_l, base_seed + static_cast<std::uint64_t>(r),
                              features ? &*features : nullptr, opts));
    }
  }
  return rows;
}

/// Tuning phase for one method on a fixed split (n_l = 500 by default):
/// Hyperband over update steps for deep methods, random search for tabular ones.
struct TuneOptions {
  tuning::HyperbandOptions hyperband;
  std::int64_t tabular_trials = 100;
  std::function<void(const tuning::TrialRecord&)> on_trial;
};

inline tuning::TunedConfig tune_method(const data::TimeSeriesDataset& ds, const data::SemiSupervisedSplit& split,
                                       const MethodSetup& setup, TuneOptions opts) {
  const auto space = tuning::space_for(setup.name == kFullyLabeled ? "supervised" : setup.name);
  const auto y_val = detail::labels_of(ds, split.val);
  tuning::TunedConfig out;
  if (is_tabular(setup.name)) {
    const auto features = baselines::extract_features(ds);
    const auto val_x = features.select_rows(split.val).values;
    out = tuning::random_search(
        space,
        [&](const nlohmann::json& fragment) {
          auto s = setup;
          s.apply(fragment);
          s.tabular.forest.seed = split.seed;
          const auto kind = s.name == "random_forest" ? baselines::TabularKind::forest : baselines::TabularKind::linear;
          const auto m = baselines::fit_on_labeled(kind, features, ds, split, s.tabular);
          return metrics::weighted_auc(baselines::to_tensor(m->predict_proba(val_x)), y_val);
        },
        opts.tabular_trials, opts.hyperband.seed, opts.on_trial);
  } else {
    opts.hyperband.on_trial = opts.on_trial;
    out = tuning::hyperband(
        space,
        [&](const nlohmann::json& fragment, std::int64_t resource) {
          auto s = setup;
          s.apply(fragment);
          s.deep.max_steps = resource;
          s.deep.eval_every = resource;
          s.deep.seed = split.seed;
          auto trained = train::run_training<float>(ds, split, s.deep);
          return trained.val_history.back().second;
        },
        opts.hyperband);
  }
  out.method = setup.name;
  return out;
}

}  // namespace ssltsc::eval
