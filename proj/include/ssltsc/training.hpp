#pragma once

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "ssltsc/metrics.hpp"
#include "ssltsc/optim.hpp"
#include "ssltsc/trainers.hpp"

namespace ssltsc::train {

struct HistoryRecord {
  std::int64_t step = 0;  // number of completed updates
  LossBreakdown loss;
  std::optional<double> val_wauc;
};

template <typename T>
struct TrainCallbacks {
  /// Validation score of the inference model after `step` updates. When
  /// empty, weighted AUC on the split's validation rows is used.
  std::function<double(Model<T>&, std::int64_t step)> evaluate;
  /// Invoked after every update.
  std::function<void(const HistoryRecord&)> on_step;
};

template <typename T>
struct TrainedModel {
  Model<T> model;        // inference model of the selected checkpoint
  Model<T> final_model;  // inference model after the last update
  std::int64_t best_step = 0;
  double best_val = std::numeric_limits<double>::quiet_NaN();
  std::vector<HistoryRecord> history;
  std::vector<std::pair<std::int64_t, double>> val_history;
};

inline nlohmann::json history_to_json(const HistoryRecord& r) {
  nlohmann::json j{{"step", r.step},
                   {"total", r.loss.total},
                   {"supervised", r.loss.supervised},
                   {"unsupervised", r.loss.unsupervised},
                   {"ramp_weight", r.loss.ramp_weight}};
  if (r.val_wauc) j["val_wauc"] = *r.val_wauc;
  return j;
}

inline void write_history_jsonl(const std::filesystem::path& path, const std::vector<HistoryRecord>& history,
                                std::int64_t every = 1) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  for (const auto& r : history) {
    if (r.val_wauc || r.step % every == 0) out << history_to_json(r).dump() << '\n';
  }
}

/// Weighted AUC of `m` on the rows `idx` of `ds`.
template <typename T>
double evaluate_wauc(Model<T>& m, const data::TimeSeriesDataset& ds, std::span<const std::size_t> idx) {
  const auto x = gather_rows(ds.values, idx);
  std::vector<int> y;
  y.reserve(idx.size());
  for (std::size_t i : idx) y.push_back(ds.labels[i]);
  return metrics::weighted_auc(model::predict_proba(m, x), y);
}

/// Runs `cfg.max_steps` updates of `cfg.method` on the labeled and unlabeled
/// pools of `split`, evaluating every `cfg.eval_every` updates and after the
/// last one, and keeps the best-scoring inference model (earliest on ties).
/// Mean Teacher's inference model is the teacher.
template <typename T = float>
TrainedModel<T> run_training(const data::TimeSeriesDataset& ds, const data::SemiSupervisedSplit& split,
                             const TrainConfig& cfg, const TrainCallbacks<T>& callbacks = {}) {
  cfg.validate();
  const auto arch = architecture_for(cfg, ds.c(), ds.t(), static_cast<std::size_t>(ds.n_classes));
  Model<T> student = model::init_model<T>(arch, cfg.seed);
  std::optional<EmaState<T>> ema;
  if (cfg.method == Method::mean_teacher) ema = make_ema(student, cfg.mean_teacher.alpha_ema);
  auto inference = [&]() -> Model<T>& { return ema ? ema->teacher : student; };

  TrainedModel<T> out;
  if (cfg.max_steps == 0) {
    out.model = inference();
    out.final_model = inference();
    return out;
  }

  std::function<double(Model<T>&, std::int64_t)> evaluate = callbacks.evaluate;
  if (!evaluate && !split.val.empty()) {
    evaluate = [&](Model<T>& m, std::int64_t) { return evaluate_wauc(m, ds, split.val); };
  }

  const std::size_t b_u = cfg.method == Method::supervised ? 0 : cfg.b_u;
  data::BatchStream stream(split, ds, cfg.b_l, b_u, derive_seed(cfg.seed, 2));
  Rng rng(derive_seed(cfg.seed, 3));
  optim::AdamW<T> opt(student.parameters(), {cfg.learning_rate, cfg.weight_decay});

  std::int64_t last_finite = 0;
  out.history.reserve(static_cast<std::size_t>(cfg.max_steps));
  for (std::int64_t step = 0; step < cfg.max_steps; ++step) {
    const auto batch = stream.next();
    auto loss = compute_loss(student, ema ? &*ema : nullptr, batch, cfg, step, rng);
    if (!std::isfinite(loss.breakdown.total)) {
      throw DivergedError("training diverged at step " + std::to_string(step + 1) + " (" +
                              std::string(method_name(cfg.method)) + ")",
                          last_finite);
    }
    opt.zero_grad();
    loss.total.backward();
    opt.step();
    if (ema) ema_update(*ema, student, step);
    last_finite = step + 1;

    HistoryRecord rec{step + 1, loss.breakdown, std::nullopt};
    if (evaluate && (rec.step % cfg.eval_every == 0 || rec.step == cfg.max_steps)) {
      const double v = evaluate(inference(), rec.step);
      rec.val_wauc = v;
      out.val_history.emplace_back(rec.step, v);
      if (out.val_history.size() == 1 || v > out.best_val) {
        out.best_val = v;
        out.best_step = rec.step;
        out.model = inference();
      }
    }
    if (callbacks.on_step) callbacks.on_step(rec);
    out.history.push_back(rec);
  }
  out.final_model = inference();
  if (out.val_history.empty()) {
    out.model = out.final_model;
    out.best_step = cfg.max_steps;
  }
  return out;
}

}  // namespace ssltsc::train
