#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "ssltsc/augment.hpp"
#include "ssltsc/data_io.hpp"
#include "ssltsc/model.hpp"
#include "ssltsc/train_config.hpp"

namespace ssltsc::train {

using model::ForwardOptions;
using model::Mode;
using model::Model;
using nn::Var;

/// Sigmoid-shaped warm-up exp(-5 (1 - min(step / length, 1))^2).
inline double ramp_weight(std::int64_t step, std::int64_t length) {
  if (length < 1) throw ConfigError("ramp length must be >= 1");
  const double tau = std::min(static_cast<double>(std::max<std::int64_t>(step, 0)) / static_cast<double>(length), 1.0);
  return std::exp(-5.0 * (1.0 - tau) * (1.0 - tau));
}

struct LossBreakdown {
  double total = 0;
  double supervised = 0;
  double unsupervised = 0;
  double ramp_weight = 0;  // effective multiplier of the unsupervised term
};

template <typename T>
struct LossResult {
  Var<T> total;
  LossBreakdown breakdown;
};

template <typename T>
LossResult<T> combine(const Var<T>& supervised, const std::optional<Var<T>>& unsupervised, double weight) {
  LossResult<T> r;
  r.breakdown.supervised = static_cast<double>(supervised.item());
  r.breakdown.ramp_weight = weight;
  if (unsupervised) {
    r.breakdown.unsupervised = static_cast<double>(unsupervised->item());
    r.total = nn::add(supervised, nn::scale(*unsupervised, static_cast<T>(weight)));
  } else {
    r.total = supervised;
  }
  r.breakdown.total = static_cast<double>(r.total.item());
  return r;
}

/// Exponential moving average of student weights.
template <typename T>
struct EmaState {
  Model<T> teacher;
  double alpha_ema = 0.99;
};

template <typename T>
EmaState<T> make_ema(const Model<T>& student, double alpha_ema) {
  return EmaState<T>{student, alpha_ema};
}

/// teacher <- a * teacher + (1 - a) * student, a = min(alpha_ema, (step + 1) / (step + 2)).
template <typename T>
void ema_update(EmaState<T>& ema, Model<T>& student, std::int64_t step) {
  const double a = std::min(ema.alpha_ema, static_cast<double>(step + 1) / static_cast<double>(step + 2));
  auto t = ema.teacher.named_parameters();
  auto s = student.named_parameters();
  if (t.size() != s.size()) throw InternalError("ema_update: parameter count mismatch");
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto& tv = t[i].second->value();
    const auto& sv = s[i].second->value();
    if (tv.shape() != sv.shape()) throw InternalError("ema_update: shape mismatch for " + t[i].first);
    for (std::size_t j = 0; j < tv.size(); ++j) {
      tv[j] = static_cast<T>(a * static_cast<double>(tv[j]) + (1.0 - a) * static_cast<double>(sv[j]));
    }
  }
}

/// Inputs and constant targets of one training step, fixed before the
/// differentiable objective is evaluated. Everything stochastic or
/// gradient-stopped (augmentations, teacher outputs, adversarial
/// perturbations, guessed labels, mixing partners, window choice) lives here.
template <typename T>
struct PreparedBatch {
  Tensor<double> x_labeled;  // input of the supervised term
  Tensor<T> y_labeled;       // soft targets (one-hot unless mixed)
  Tensor<double> x_unsup;    // input of the unsupervised term, method specific
  Tensor<T> y_unsup;         // its constant targets
  std::vector<Tensor<T>> layer_targets;  // Ladder: clean activations per layer
};

namespace detail {

inline constexpr ForwardOptions kTrain{Mode::train, true, true};
inline constexpr ForwardOptions kProbe{Mode::train, false, false};  // batch statistics, no updates, no gradients
inline constexpr ForwardOptions kAux{Mode::train, false, true};

inline Tensor<double> concat2(const Tensor<double>& a, const Tensor<double>& b) {
  const std::vector<Tensor<double>> parts{a, b};
  return concat_rows<double>(parts);
}

/// Columns [begin, end) of the time axis of a (b, c, t) array.
inline Tensor<double> crop_time(const Tensor<double>& x, std::size_t begin, std::size_t end) {
  const std::size_t b = x.dim(0), c = x.dim(1), t = x.dim(2), w = end - begin;
  Tensor<double> out(Shape{b, c, w});
  for (std::size_t i = 0; i < b * c; ++i) std::copy_n(x.data() + i * t + begin, w, out.data() + i * w);
  return out;
}

template <typename T>
Tensor<T> softmax_of(Model<T>& m, const Tensor<double>& x, const ForwardOptions& o) {
  return nn::softmax_values(model::fcn_forward(m, x, o).value());
}

template <typename T>
Tensor<T> labeled_targets(const data::Batch& b, std::size_t n_classes) {
  return nn::one_hot<T>(b.labeled_y, n_classes);
}

/// Per-sample L2 normalization over all non-leading dimensions. Rows whose
/// norm vanishes are replaced by a random unit direction.
inline Tensor<double> unit_rows(Tensor<double> d, Rng& rng) {
  for (std::size_t i = 0; i < d.dim(0); ++i) {
    auto row = d.row(i);
    double norm = 0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 1e-30) || !std::isfinite(norm)) {
      norm = 0;
      for (auto& v : row) {
        v = normal(rng);
        norm += v * v;
      }
      norm = std::sqrt(norm);
    }
    for (auto& v : row) v /= norm;
  }
  return d;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Supervised

template <typename T>
PreparedBatch<T> prepare_supervised(Model<T>& m, const data::Batch& batch, const TrainConfig& cfg, Rng& rng) {
  if (batch.labeled_x.rank() != 3 || batch.labeled_x.dim(0) == 0) throw EmptyBatchError("labeled batch is empty");
  PreparedBatch<T> p;
  p.x_labeled = augment::augment_batch(batch.labeled_x, cfg.augment, rng);
  p.y_labeled = detail::labeled_targets<T>(batch, m.arch.n_classes);
  return p;
}

template <typename T>
Var<T> supervised_term(Model<T>& m, const PreparedBatch<T>& p) {
  return nn::soft_cross_entropy(model::fcn_forward(m, p.x_labeled, detail::kTrain), p.y_labeled);
}

/// Mean cross-entropy over augmented labeled samples.
template <typename T>
LossResult<T> loss_supervised(Model<T>& m, const data::Batch& batch, const TrainConfig& cfg, Rng& rng) {
  const auto p = prepare_supervised(m, batch, cfg, rng);
  return combine<T>(supervised_term(m, p), std::nullopt, 0.0);
}

// ---------------------------------------------------------------------------
// Mean Teacher

/// Student view 1 of labeled and unlabeled samples, teacher probabilities on
/// view 2 of the same samples (labeled first).
template <typename T>
PreparedBatch<T> prepare_mean_teacher(Model<T>& student, EmaState<T>& ema, const data::Batch& batch,
                                      const TrainConfig& cfg, Rng& rng) {
  auto p = prepare_supervised(student, batch, cfg, rng);
  p.x_unsup = augment::augment_batch(batch.unlabeled_x, cfg.augment, rng);
  // Teacher batches mirror the student's (labeled and unlabeled apart) so batch statistics match.
  const ForwardOptions teacher_mode{Mode::train, true, false};
  const auto view2_l = augment::augment_batch(batch.labeled_x, cfg.augment, rng);
  p.y_unsup = detail::softmax_of(ema.teacher, view2_l, teacher_mode);
  if (batch.unlabeled_x.rank() == 3 && batch.unlabeled_x.dim(0) > 0) {
    const auto view2_u = augment::augment_batch(batch.unlabeled_x, cfg.augment, rng);
    const std::vector<Tensor<T>> parts{p.y_unsup, detail::softmax_of(ema.teacher, view2_u, teacher_mode)};
    p.y_unsup = concat_rows<T>(parts);
  }
  return p;
}

template <typename T>
LossResult<T> objective_mean_teacher(Model<T>& student, const PreparedBatch<T>& p, const TrainConfig& cfg,
                                     std::int64_t step) {
  auto logits_l = model::fcn_forward(student, p.x_labeled, detail::kTrain);
  auto sup = nn::soft_cross_entropy(logits_l, p.y_labeled);
  Var<T> probs = nn::softmax(logits_l);
  if (p.x_unsup.dim(0) > 0) {
    auto logits_u = model::fcn_forward(student, p.x_unsup, detail::kTrain);
    probs = nn::concat_rows<T>({probs, nn::softmax(logits_u)});
  }
  auto consistency = nn::mse(probs, Var<T>::constant(p.y_unsup));
  return combine<T>(sup, consistency, ramp_weight(step, cfg.rampup_length) * cfg.mean_teacher.w_max);
}

template <typename T>
LossResult<T> loss_mean_teacher(Model<T>& student, EmaState<T>& ema, const data::Batch& batch, const TrainConfig& cfg,
                                std::int64_t step, Rng& rng) {
  return objective_mean_teacher(student, prepare_mean_teacher(student, ema, batch, cfg, rng), cfg, step);
}

// ---------------------------------------------------------------------------
// Virtual adversarial training

/// Adversarial direction for a generic differentiable classifier
/// `logits_fn(Var<T>) -> Var<T>` at inputs `x` (any shape with a leading
/// batch axis). Returns r with per-sample L2 norm epsilon.
template <typename T, typename LogitsFn>
Tensor<double> vat_perturbation(LogitsFn&& logits_fn, const Tensor<double>& x, double epsilon, double xi, int n_power,
                                Rng& rng) {
  if (!(epsilon > 0)) throw ConfigError("vat: epsilon must be > 0");
  if (n_power < 1) throw ConfigError("vat: n_power must be >= 1");
  const Tensor<T> p = nn::softmax_values(logits_fn(Var<T>::constant(model::to_tensor<T>(x))).value());
  Tensor<double> d(x.shape());
  for (auto& v : d.values()) v = normal(rng);
  d = detail::unit_rows(std::move(d), rng);
  const auto x_const = Var<T>::constant(model::to_tensor<T>(x));
  for (int it = 0; it < n_power; ++it) {
    Tensor<double> probe = d;
    for (auto& v : probe.values()) v *= xi;
    auto r = Var<T>::leaf(model::to_tensor<T>(probe));
    auto kl = nn::kl_divergence(p, logits_fn(nn::add(x_const, r)));
    kl.backward();
    const auto& g = r.grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<double>(g[i]);
    d = detail::unit_rows(std::move(d), rng);
  }
  for (auto& v : d.values()) v *= epsilon;
  return d;
}

template <typename T>
Tensor<double> vat_perturbation(Model<T>& m, const Tensor<double>& x, double epsilon, double xi, int n_power, Rng& rng) {
  return vat_perturbation<T>([&m](const Var<T>& v) { return model::fcn_forward(m, v, detail::kProbe); }, x, epsilon,
                             xi, n_power, rng);
}

/// Augmented labeled batch for the supervised term; base predictions p(.|x)
/// and perturbed inputs x + r_adv over labeled and unlabeled samples.
template <typename T>
PreparedBatch<T> prepare_vat(Model<T>& m, const data::Batch& batch, const TrainConfig& cfg, Rng& rng) {
  auto p = prepare_supervised(m, batch, cfg, rng);
  const auto x_all = detail::concat2(batch.labeled_x, batch.unlabeled_x);
  p.y_unsup = detail::softmax_of(m, x_all, detail::kProbe);
  const auto r = vat_perturbation(m, x_all, cfg.vat.epsilon, cfg.vat.xi, cfg.vat.n_power, rng);
  p.x_unsup = x_all;
  for (std::size_t i = 0; i < r.size(); ++i) p.x_unsup[i] += r[i];
  return p;
}

template <typename T>
LossResult<T> objective_vat(Model<T>& m, const PreparedBatch<T>& p, const TrainConfig& cfg, std::int64_t step) {
  auto sup = supervised_term(m, p);
  auto kl = nn::kl_divergence(p.y_unsup, model::fcn_forward(m, p.x_unsup, detail::kAux));
  return combine<T>(sup, kl, ramp_weight(step, cfg.rampup_length) * cfg.vat.alpha);
}

template <typename T>
LossResult<T> loss_vat(Model<T>& m, const data::Batch& batch, const TrainConfig& cfg, std::int64_t step, Rng& rng) {
  return objective_vat(m, prepare_vat(m, batch, cfg, rng), cfg, step);
}

// ---------------------------------------------------------------------------
// MixMatch

/// p_i^(1/T) / sum_j p_j^(1/T), computed in the log domain.
inline std::vector<double> sharpen(std::span<const double> p, double temperature) {
  if (!(temperature > 0)) throw ConfigError("sharpen: temperature must be > 0");
  std::vector<double> out(p.size());
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] = p[i] > 0 ? std::log(p[i]) / temperature : -std::numeric_limits<double>::infinity();
    hi = std::max(hi, out[i]);
  }
  double z = 0;
  for (auto& v : out) {
    v = std::exp(v - hi);
    z += v;
  }
  for (auto& v : out) v /= z;
  return out;
}

/// Row-wise sharpen of an (n, k) probability table.
inline Tensor<double> sharpen_rows(const Tensor<double>& p, double temperature) {
  Tensor<double> out(p.shape());
  for (std::size_t i = 0; i < p.dim(0); ++i) {
    const auto s = sharpen(p.row(i), temperature);
    std::copy(s.begin(), s.end(), out.row(i).begin());
  }
  return out;
}

struct Mixed {
  Tensor<double> x;
  Tensor<double> y;
  double lambda = 1.0;  // weight of the first argument, >= 0.5
};

/// Convex combination with weight max(lambda, 1 - lambda) on (x1, y1).
inline Mixed mixup_with(const Tensor<double>& x1, const Tensor<double>& y1, const Tensor<double>& x2,
                        const Tensor<double>& y2, double lambda) {
  if (x1.shape() != x2.shape() || y1.shape() != y2.shape()) throw InternalError("mixup: shape mismatch");
  Mixed m;
  m.lambda = std::max(lambda, 1.0 - lambda);
  m.x = x1;
  m.y = y1;
  for (std::size_t i = 0; i < x1.size(); ++i) m.x[i] = m.lambda * x1[i] + (1.0 - m.lambda) * x2[i];
  for (std::size_t i = 0; i < y1.size(); ++i) m.y[i] = m.lambda * y1[i] + (1.0 - m.lambda) * y2[i];
  return m;
}

/// One Beta(alpha, alpha) draw shared by every row of the arguments.
inline Mixed mixup(const Tensor<double>& x1, const Tensor<double>& y1, const Tensor<double>& x2,
                   const Tensor<double>& y2, double alpha_beta, Rng& rng) {
  if (!(alpha_beta > 0)) throw ConfigError("mixup: alpha must be > 0");
  return mixup_with(x1, y1, x2, y2, beta(rng, alpha_beta, alpha_beta));
}

struct Guess {
  std::vector<Tensor<double>> views;  // K augmented copies of the unlabeled batch
  Tensor<double> probs;               // (b_u, n_classes) sharpened mean prediction
};

template <typename T>
Guess mixmatch_guess(Model<T>& m, const Tensor<double>& unlabeled_x, int k_aug, double temperature,
                     const std::optional<augment::AugmentConfig>& aug, Rng& rng) {
  if (k_aug < 1) throw ConfigError("mixmatch: K must be >= 1");
  Guess g;
  Tensor<double> mean(Shape{unlabeled_x.dim(0), m.arch.n_classes});
  for (int k = 0; k < k_aug; ++k) {
    g.views.push_back(augment::augment_batch(unlabeled_x, aug, rng));
    const auto p = detail::softmax_of(m, g.views.back(), detail::kProbe);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += static_cast<double>(p[i]) / k_aug;
  }
  g.probs = sharpen_rows(mean, temperature);
  return g;
}

/// x_labeled/y_labeled: mixed labeled part X'; x_unsup/y_unsup: mixed
/// unlabeled part U' over all K views.
template <typename T>
PreparedBatch<T> prepare_mixmatch(Model<T>& m, const data::Batch& batch, const TrainConfig& cfg, Rng& rng) {
  if (batch.unlabeled_x.rank() != 3 || batch.unlabeled_x.dim(0) == 0) throw EmptyBatchError("mixmatch: b_u must be >= 1");
  const auto& mc = cfg.mixmatch;
  const auto xl = augment::augment_batch(batch.labeled_x, cfg.augment, rng);
  const auto yl = nn::one_hot<double>(batch.labeled_y, m.arch.n_classes);
  auto g = mixmatch_guess(m, batch.unlabeled_x, mc.k_aug, mc.temperature, cfg.augment, rng);

  const auto xu = concat_rows<double>(g.views);
  const std::vector<Tensor<double>> guesses(static_cast<std::size_t>(mc.k_aug), g.probs);
  const auto yu = concat_rows<double>(guesses);
  const auto wx = detail::concat2(xl, xu);
  const auto wy = detail::concat2(yl, yu);
  const auto perm = permutation(wx.dim(0), rng);
  const std::size_t nl = xl.dim(0);
  const std::vector<std::size_t> perm_l(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(nl));
  const std::vector<std::size_t> perm_u(perm.begin() + static_cast<std::ptrdiff_t>(nl), perm.end());
  const double lambda = beta(rng, mc.alpha_beta, mc.alpha_beta);
  auto ml = mixup_with(xl, yl, gather_rows(wx, perm_l), gather_rows(wy, perm_l), lambda);
  auto mu = mixup_with(xu, yu, gather_rows(wx, perm_u), gather_rows(wy, perm_u), lambda);

  PreparedBatch<T> p;
  p.x_labeled = std::move(ml.x);
  p.y_labeled = model::to_tensor<T>(ml.y);
  p.x_unsup = std::move(mu.x);
  p.y_unsup = model::to_tensor<T>(mu.y);
  return p;
}

/// Soft cross-entropy on X' plus the Brier score (per-row squared distance
/// between softmax and target, in [0, 2]) on U'.
template <typename T>
LossResult<T> objective_mixmatch(Model<T>& m, const PreparedBatch<T>& p, const TrainConfig& cfg, std::int64_t step) {
  auto sup = supervised_term(m, p);
  auto probs_u = nn::softmax(model::fcn_forward(m, p.x_unsup, detail::kTrain));
  auto brier = nn::row_squared_error(probs_u, p.y_unsup);
  return combine<T>(sup, brier, ramp_weight(step, cfg.rampup_length) * cfg.mixmatch.lambda_u);
}

template <typename T>
LossResult<T> loss_mixmatch(Model<T>& m, const data::Batch& batch, const TrainConfig& cfg, std::int64_t step, Rng& rng) {
  return objective_mixmatch(m, prepare_mixmatch(m, batch, cfg, rng), cfg, step);
}

// ---------------------------------------------------------------------------
// Ladder

/// Augmented labeled batch; the raw unlabeled batch joins it in one encoder pass.
template <typename T>
PreparedBatch<T> prepare_ladder(Model<T>& m, const data::Batch& batch, const TrainConfig& cfg, Rng& rng) {
  auto p = prepare_supervised(m, batch, cfg, rng);
  p.x_unsup = batch.unlabeled_x;
  const auto x_all = p.x_unsup.dim(0) > 0 ? detail::concat2(p.x_labeled, p.x_unsup) : p.x_labeled;
  const auto clean = model::ladder_forward(m, Var<T>::constant(model::to_tensor<T>(x_all)), false, rng, detail::kProbe);
  for (const auto& a : clean.clean_activations) p.layer_targets.push_back(a.value());
  return p;
}

/// Cross-entropy on the noisy-path logits of the labeled rows plus the sum
/// over layers of the mean squared error between each reconstruction and
/// the clean normalized activation fixed at preparation, over all rows. Draws the
/// corruption noise from `rng`.
template <typename T>
LossResult<T> objective_ladder(Model<T>& m, const PreparedBatch<T>& p, const TrainConfig& cfg, std::int64_t step,
                               Rng& rng) {
  if (!m.decoder) throw ConfigError("ladder loss requires a model of kind 'ladder'");
  const std::size_t nl = p.x_labeled.dim(0);
  const auto x_all = p.x_unsup.dim(0) > 0 ? detail::concat2(p.x_labeled, p.x_unsup) : p.x_labeled;
  auto pass = model::ladder_forward(m, Var<T>::constant(model::to_tensor<T>(x_all)), true, rng, detail::kTrain);
  auto sup = nn::soft_cross_entropy(nn::slice_rows(pass.logits, 0, nl), p.y_labeled);
  const auto recon = model::ladder_decode(m, pass, detail::kTrain);
  Var<T> total_recon;
  for (std::size_t l = 0; l < recon.size(); ++l) {
    auto term = nn::mse(recon[l], Var<T>::constant(p.layer_targets.at(l)));
    total_recon = l == 0 ? term : nn::add(total_recon, term);
  }
  return combine<T>(sup, total_recon, ramp_weight(step, cfg.rampup_length) * cfg.ladder.loss_weight);
}

template <typename T>
LossResult<T> loss_ladder(Model<T>& m, const data::Batch& batch, const TrainConfig& cfg, std::int64_t step, Rng& rng) {
  auto p = prepare_ladder(m, batch, cfg, rng);
  return objective_ladder(m, p, cfg, step, rng);
}

// ---------------------------------------------------------------------------
// Self-supervised forecasting

/// Window ends e = k * ceil(s t), k = 1, 2, ..., kept while e + ceil(h t) <= t.
inline std::vector<std::size_t> forecast_window_ends(std::size_t t, double h, double s) {
  const auto steps = [t](double frac) {
    return static_cast<std::size_t>(std::ceil(frac * static_cast<double>(t) - 1e-9));
  };
  const std::size_t horizon = steps(h), stride = steps(s);
  if (horizon < 1 || stride < 1) throw ConfigError("forecast windows: h*t and s*t must each cover >= 1 step");
  std::vector<std::size_t> ends;
  for (std::size_t e = stride; e + horizon <= t; e += stride) ends.push_back(e);
  if (ends.empty()) {
    throw ConfigError("forecast windows: series of length " + std::to_string(t) + " is too short for horizon " +
                      std::to_string(horizon) + " and stride " + std::to_string(stride));
  }
  return ends;
}

struct ForecastWindow {
  Tensor<double> input;   // (c, e)
  Tensor<double> target;  // (c, ceil(h t))
};

/// All (input, target) pairs of one (c, t) series.
inline std::vector<ForecastWindow> make_forecast_windows(const Tensor<double>& x, double h, double s) {
  const std::size_t c = x.dim(0), t = x.dim(1);
  const auto horizon = static_cast<std::size_t>(std::ceil(h * static_cast<double>(t) - 1e-9));
  const auto batch = x.reshaped(Shape{1, c, t});
  std::vector<ForecastWindow> out;
  for (std::size_t e : forecast_window_ends(t, h, s)) {
    out.push_back({detail::crop_time(batch, 0, e).reshaped(Shape{c, e}),
                   detail::crop_time(batch, e, e + horizon).reshaped(Shape{c, horizon})});
  }
  return out;
}

/// One window end drawn per batch; x_unsup holds the input windows of all
/// labeled and unlabeled rows and y_unsup their flattened (c * H) targets.
template <typename T>
PreparedBatch<T> prepare_selfsup(Model<T>& m, const data::Batch& batch, const TrainConfig& cfg, Rng& rng) {
  auto p = prepare_supervised(m, batch, cfg, rng);
  const auto all = detail::concat2(batch.labeled_x, batch.unlabeled_x);
  const std::size_t t = all.dim(2);
  const auto ends = forecast_window_ends(t, cfg.selfsup.horizon, cfg.selfsup.stride);
  const std::size_t e = ends[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(ends.size()) - 1))];
  const std::size_t horizon = m.arch.forecast_steps();
  if (e + horizon > t) throw InternalError("selfsup: forecast head horizon does not fit the series");
  p.x_unsup = detail::crop_time(all, 0, e);
  const auto target = detail::crop_time(all, e, e + horizon);
  p.y_unsup = model::to_tensor<T>(target.reshaped(Shape{all.dim(0), all.dim(1) * horizon}));
  return p;
}

template <typename T>
LossResult<T> objective_selfsup(Model<T>& m, const PreparedBatch<T>& p, const TrainConfig& cfg, std::int64_t step) {
  auto sup = supervised_term(m, p);
  auto pred = model::forecast_forward(m, Var<T>::constant(model::to_tensor<T>(p.x_unsup)), detail::kAux);
  auto err = nn::mse(pred, Var<T>::constant(p.y_unsup));
  return combine<T>(sup, err, ramp_weight(step, cfg.rampup_length) * cfg.selfsup.lambda);
}

template <typename T>
LossResult<T> loss_selfsup(Model<T>& m, const data::Batch& batch, const TrainConfig& cfg, std::int64_t step, Rng& rng) {
  return objective_selfsup(m, prepare_selfsup(m, batch, cfg, rng), cfg, step);
}

// ---------------------------------------------------------------------------
// Dispatch

template <typename T>
PreparedBatch<T> prepare(Model<T>& m, EmaState<T>* ema, const data::Batch& batch, const TrainConfig& cfg, Rng& rng) {
  switch (cfg.method) {
    case Method::supervised: return prepare_supervised(m, batch, cfg, rng);
    case Method::mean_teacher:
      if (!ema) throw InternalError("mean teacher step without EMA state");
      return prepare_mean_teacher(m, *ema, batch, cfg, rng);
    case Method::vat: return prepare_vat(m, batch, cfg, rng);
    case Method::mixmatch: return prepare_mixmatch(m, batch, cfg, rng);
    case Method::ladder: return prepare_ladder(m, batch, cfg, rng);
    case Method::selfsup: return prepare_selfsup(m, batch, cfg, rng);
  }
  throw InternalError("prepare: unknown method");
}

template <typename T>
LossResult<T> objective(Model<T>& m, const PreparedBatch<T>& p, const TrainConfig& cfg, std::int64_t step, Rng& rng) {
  switch (cfg.method) {
    case Method::supervised: return combine<T>(supervised_term(m, p), std::nullopt, 0.0);
    case Method::mean_teacher: return objective_mean_teacher(m, p, cfg, step);
    case Method::vat: return objective_vat(m, p, cfg, step);
    case Method::mixmatch: return objective_mixmatch(m, p, cfg, step);
    case Method::ladder: return objective_ladder(m, p, cfg, step, rng);
    case Method::selfsup: return objective_selfsup(m, p, cfg, step);
  }
  throw InternalError("objective: unknown method");
}

/// Loss of one step for `cfg.method`.
template <typename T>
LossResult<T> compute_loss(Model<T>& m, EmaState<T>* ema, const data::Batch& batch, const TrainConfig& cfg,
                           std::int64_t step, Rng& rng) {
  const auto p = prepare(m, ema, batch, cfg, rng);
  return objective(m, p, cfg, step, rng);
}

/// Architecture a method trains, for a dataset of shape (c, t) and k classes.
inline model::Architecture architecture_for(const TrainConfig& cfg, std::size_t c, std::size_t t, std::size_t k) {
  model::Architecture a;
  a.channels = c;
  a.length = t;
  a.n_classes = k;
  a.filters = cfg.filters;
  if (cfg.method == Method::ladder) {
    a.kind = model::ModelKind::ladder;
    a.noise_std = cfg.ladder.noise_std;
  } else if (cfg.method == Method::selfsup) {
    a.kind = model::ModelKind::fcn_forecast;
    a.horizon = cfg.selfsup.horizon;
  }
  return a;
}

}  // namespace ssltsc::train
