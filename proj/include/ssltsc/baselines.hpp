#pragma once

#include <fftw3.h>
#include <spdlog/spdlog.h>

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "ssltsc/core/random.hpp"
#include "ssltsc/core/tensor.hpp"
#include "ssltsc/data_io.hpp"
#include "ssltsc/errors.hpp"

namespace ssltsc::baselines {

inline constexpr std::size_t kFeaturesPerChannel = 25;
inline constexpr std::size_t kAutocorrLags = 5;

inline const std::array<const char*, kFeaturesPerChannel> kFeatureNames{
    "mean",         "std",           "min",           "max",         "median",       "skewness",      "kurtosis",
    "energy",       "abs_sum_changes", "count_above_mean", "count_below_mean", "first", "last",     "trend_slope",
    "zero_crossings", "autocorr_1",  "autocorr_2",    "autocorr_3",  "autocorr_4",   "autocorr_5",    "fft_mag_1",
    "fft_mag_2",    "fft_mag_3",     "fft_freq_1",    "fft_freq_2"};

struct FeatureTable {
  Eigen::MatrixXd values;  // (n, F)
  std::vector<std::string> names;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }

  FeatureTable select_rows(std::span<const std::size_t> idx) const {
    FeatureTable out;
    out.names = names;
    out.values.resize(static_cast<Eigen::Index>(idx.size()), values.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.values.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(idx[i]));
    return out;
  }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
    out << '\n';
    out.precision(10);
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      for (Eigen::Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << values(i, j);
      out << '\n';
    }
  }
};

namespace detail {

/// Magnitude spectrum of a real series, bins 0..t/2.
class Spectrum {
 public:
  explicit Spectrum(std::size_t t) : t_(t), in_(t), out_(t / 2 + 1) {
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(t), in_.data(), reinterpret_cast<fftw_complex*>(out_.data()),
                                 FFTW_ESTIMATE);
  }
  ~Spectrum() { fftw_destroy_plan(plan_); }
  Spectrum(const Spectrum&) = delete;
  Spectrum& operator=(const Spectrum&) = delete;

  std::vector<double> magnitudes(std::span<const double> x) {
    std::copy(x.begin(), x.end(), in_.begin());
    fftw_execute(plan_);
    std::vector<double> mag(out_.size());
    for (std::size_t k = 0; k < out_.size(); ++k) mag[k] = std::abs(out_[k]);
    return mag;
  }

 private:
  std::size_t t_;
  std::vector<double> in_;
  std::vector<std::complex<double>> out_;
  fftw_plan plan_;
};

inline void channel_features(std::span<const double> x, Spectrum& spectrum, double* out) {
  const std::size_t t = x.size();
  const double n = static_cast<double>(t);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double m2 = 0, m3 = 0, m4 = 0, energy = 0, abs_changes = 0;
  std::size_t above = 0, below = 0, crossings = 0;
  for (std::size_t i = 0; i < t; ++i) {
    const double d = x[i] - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    energy += x[i] * x[i];
    if (x[i] > mean) ++above;
    if (x[i] < mean) ++below;
    if (i > 0) {
      abs_changes += std::abs(x[i] - x[i - 1]);
      if (x[i] * x[i - 1] < 0) ++crossings;
    }
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const double sd = std::sqrt(m2);
  const bool flat = sd < 1e-12;

  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double median = t % 2 ? sorted[t / 2] : 0.5 * (sorted[t / 2 - 1] + sorted[t / 2]);

  const double tbar = (n - 1.0) / 2.0;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < t; ++i) {
    sxy += (static_cast<double>(i) - tbar) * (x[i] - mean);
    sxx += (static_cast<double>(i) - tbar) * (static_cast<double>(i) - tbar);
  }

  std::size_t f = 0;
  out[f++] = mean;
  out[f++] = sd;
  out[f++] = sorted.front();
  out[f++] = sorted.back();
  out[f++] = median;
  out[f++] = flat ? 0.0 : m3 / (m2 * sd);
  out[f++] = flat ? 0.0 : m4 / (m2 * m2) - 3.0;
  out[f++] = energy;
  out[f++] = abs_changes;
  out[f++] = static_cast<double>(above);
  out[f++] = static_cast<double>(below);
  out[f++] = x.front();
  out[f++] = x.back();
  out[f++] = sxx > 0 ? sxy / sxx : 0.0;
  out[f++] = static_cast<double>(crossings);
  for (std::size_t lag = 1; lag <= kAutocorrLags; ++lag) {
    double ac = 0;
    if (!flat && lag < t) {
      for (std::size_t i = 0; i + lag < t; ++i) ac += (x[i] - mean) * (x[i + lag] - mean);
      ac /= static_cast<double>(t - lag) * m2;
    }
    out[f++] = ac;
  }
  // Spectrum without the DC bin: three largest magnitudes, bins of the top two.
  const auto mag = spectrum.magnitudes(x);
  std::vector<std::size_t> bins(mag.size() > 1 ? mag.size() - 1 : 0);
  std::iota(bins.begin(), bins.end(), std::size_t{1});
  std::stable_sort(bins.begin(), bins.end(), [&](std::size_t a, std::size_t b) { return mag[a] > mag[b]; });
  for (std::size_t r = 0; r < 3; ++r) out[f++] = r < bins.size() ? mag[bins[r]] : 0.0;
  for (std::size_t r = 0; r < 2; ++r) out[f++] = r < bins.size() ? static_cast<double>(bins[r]) : 0.0;
}

}  // namespace detail

/// 25 summary statistics per channel; columns grouped by channel. FFT
/// frequencies are reported as bin indices (cycles per series).
inline FeatureTable extract_features(const data::TimeSeriesDataset& ds) {
  const std::size_t n = ds.n(), c = ds.c(), t = ds.t();
  if (t < kAutocorrLags + 1) {
    spdlog::warn("extract_features: series length {} < {}; missing autocorrelation lags imputed as 0", t,
                 kAutocorrLags + 1);
  }
  FeatureTable table;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const std::string prefix = ds.channel_names.empty() ? "c" + std::to_string(ch) : ds.channel_names[ch];
    for (const char* name : kFeatureNames) table.names.push_back(prefix + "__" + name);
  }
  table.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c * kFeaturesPerChannel));
  detail::Spectrum spectrum(t);
  std::array<double, kFeaturesPerChannel> buf{};
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = ds.values.row(i);
    for (std::size_t ch = 0; ch < c; ++ch) {
      detail::channel_features(row.subspan(ch * t, t), spectrum, buf.data());
      for (std::size_t f = 0; f < kFeaturesPerChannel; ++f) {
        const double v = buf[f];
        table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(ch * kFeaturesPerChannel + f)) =
            std::isfinite(v) ? v : 0.0;
      }
    }
  }
  return table;
}

class TabularModel {
 public:
  virtual ~TabularModel() = default;
  /// (n, n_classes) class probabilities; rows sum to 1.
  virtual Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& x) const = 0;
  virtual std::size_t n_classes() const = 0;
};

namespace detail {

inline void require_two_classes(std::span<const int> y, int n_classes) {
  if (n_classes < 2) throw DegenerateDatasetError("tabular model: at least two classes are required");
  if (y.empty()) throw DegenerateDatasetError("tabular model: no training samples");
  if (std::all_of(y.begin(), y.end(), [&](int v) { return v == y.front(); })) {
    throw DegenerateDatasetError("tabular model: training labels contain a single class");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Random forest

struct ForestParams {
  int n_trees = 100;
  int max_depth = 10;
  int min_samples_split = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trees < 100 || n_trees > 1000) throw ConfigError("forest: number of trees must lie in [100, 1000]");
    if (max_depth < 3 || max_depth > 25) throw ConfigError("forest: max depth must lie in [3, 25]");
    if (min_samples_split < 2) throw ConfigError("forest: min_samples_split must be >= 2");
  }
};

/// Gini-split trees grown on bootstrap samples with sqrt(F) candidate
/// features per node; probabilities averaged over trees.
class RandomForest : public TabularModel {
 public:
  void fit(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes, const ForestParams& p) {
    detail::require_two_classes(y, n_classes);
    k_ = static_cast<std::size_t>(n_classes);
    params_ = p;
    Rng rng(derive_seed(p.seed, 0xF0));
    const std::size_t n = static_cast<std::size_t>(x.rows());
    trees_.assign(static_cast<std::size_t>(p.n_trees), Tree{});
    for (auto& tree : trees_) {
      std::vector<std::size_t> sample(n);
      for (auto& s : sample) s = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(n) - 1));
      grow(tree, x, y, sample, 0, rng);
    }
  }

  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& x) const override {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), static_cast<Eigen::Index>(k_));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (const auto& tree : trees_) {
        std::size_t node = 0;
        while (tree.nodes[node].feature >= 0) {
          const auto& nd = tree.nodes[node];
          node = x(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
        }
        const double* leaf = tree.leaf_probs.data() + tree.nodes[node].leaf * k_;
        for (std::size_t c = 0; c < k_; ++c) out(i, static_cast<Eigen::Index>(c)) += leaf[c];
      }
    }
    out /= static_cast<double>(trees_.size());
    return out;
  }

  std::size_t n_classes() const override { return k_; }

 private:
  struct Node {
    Eigen::Index feature = -1;  // -1 marks a leaf
    double threshold = 0;
    std::size_t left = 0, right = 0, leaf = 0;
  };
  struct Tree {
    std::vector<Node> nodes;
    std::vector<double> leaf_probs;
  };

  std::size_t make_leaf(Tree& tree, std::span<const int> y, const std::vector<std::size_t>& idx) const {
    Node nd;
    nd.leaf = tree.leaf_probs.size() / k_;
    std::vector<double> counts(k_, 0.0);
    for (std::size_t i : idx) counts[static_cast<std::size_t>(y[i])] += 1.0;
    for (double c : counts) tree.leaf_probs.push_back(c / static_cast<double>(idx.size()));
    tree.nodes.push_back(nd);
    return tree.nodes.size() - 1;
  }

  std::size_t grow(Tree& tree, const Eigen::MatrixXd& x, std::span<const int> y, const std::vector<std::size_t>& idx,
                   int depth, Rng& rng) const {
    const bool pure = std::all_of(idx.begin(), idx.end(), [&](std::size_t i) { return y[i] == y[idx.front()]; });
    if (pure || depth >= params_.max_depth || idx.size() < static_cast<std::size_t>(params_.min_samples_split)) {
      return make_leaf(tree, y, idx);
    }
    const auto n_features = static_cast<std::size_t>(x.cols());
    const auto mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(n_features))));
    auto candidates = permutation(n_features, rng);
    candidates.resize(mtry);

    double best_score = std::numeric_limits<double>::infinity();
    Eigen::Index best_feature = -1;
    double best_threshold = 0;
    std::vector<std::pair<double, int>> column(idx.size());
    std::vector<double> left(k_), right(k_), total(k_, 0.0);
    for (std::size_t i : idx) total[static_cast<std::size_t>(y[i])] += 1.0;
    const double n = static_cast<double>(idx.size());
    for (std::size_t f : candidates) {
      for (std::size_t j = 0; j < idx.size(); ++j) column[j] = {x(static_cast<Eigen::Index>(idx[j]), static_cast<Eigen::Index>(f)), y[idx[j]]};
      std::sort(column.begin(), column.end());
      std::fill(left.begin(), left.end(), 0.0);
      right = total;
      for (std::size_t j = 0; j + 1 < column.size(); ++j) {
        left[static_cast<std::size_t>(column[j].second)] += 1.0;
        right[static_cast<std::size_t>(column[j].second)] -= 1.0;
        if (column[j].first == column[j + 1].first) continue;
        const double nl = static_cast<double>(j + 1), nr = n - nl;
        double gl = 1.0, gr = 1.0;
        for (std::size_t c = 0; c < k_; ++c) {
          gl -= (left[c] / nl) * (left[c] / nl);
          gr -= (right[c] / nr) * (right[c] / nr);
        }
        const double score = nl * gl + nr * gr;
        if (score < best_score) {
          best_score = score;
          best_feature = static_cast<Eigen::Index>(f);
          best_threshold = 0.5 * (column[j].first + column[j + 1].first);
        }
      }
    }
    if (best_feature < 0) return make_leaf(tree, y, idx);

    std::vector<std::size_t> li, ri;
    for (std::size_t i : idx) (x(static_cast<Eigen::Index>(i), best_feature) <= best_threshold ? li : ri).push_back(i);
    const std::size_t self = tree.nodes.size();
    tree.nodes.push_back(Node{best_feature, best_threshold, 0, 0, 0});
    const std::size_t l = grow(tree, x, y, li, depth + 1, rng);
    const std::size_t r = grow(tree, x, y, ri, depth + 1, rng);
    tree.nodes[self].left = l;
    tree.nodes[self].right = r;
    return self;
  }

  std::size_t k_ = 0;
  ForestParams params_;
  std::vector<Tree> trees_;
};

// ---------------------------------------------------------------------------
// Multinomial logistic regression

enum class Penalty { none, l1, l2 };

inline std::string_view penalty_name(Penalty p) {
  switch (p) {
    case Penalty::none: return "none";
    case Penalty::l1: return "l1";
    case Penalty::l2: return "l2";
  }
  return "unknown";
}

inline Penalty penalty_from_name(std::string_view s) {
  if (s == "none") return Penalty::none;
  if (s == "l1") return Penalty::l1;
  if (s == "l2") return Penalty::l2;
  throw ConfigError("unknown penalty '" + std::string(s) + "'");
}

struct LogisticParams {
  Penalty penalty = Penalty::l2;
  double C = 1.0;  // inverse regularization strength
  int max_iter = 2000;
  double tol = 1e-7;
};

/// Softmax regression on standardized features, fitted by accelerated
/// proximal gradient on mean log-loss + penalty / (C n). Intercepts are
/// never penalized.
class LogisticRegression : public TabularModel {
 public:
  void fit(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes, const LogisticParams& p) {
    detail::require_two_classes(y, n_classes);
    if (!(p.C > 0)) throw ConfigError("logistic: C must be > 0");
    k_ = static_cast<std::size_t>(n_classes);
    const Eigen::Index n = x.rows(), f = x.cols(), k = static_cast<Eigen::Index>(k_);
    mean_ = x.colwise().mean();
    scale_ = ((x.rowwise() - mean_).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
    for (Eigen::Index j = 0; j < f; ++j) {
      if (scale_(j) < 1e-12) scale_(j) = 1.0;
    }
    const Eigen::MatrixXd z = standardize(x);
    Eigen::MatrixXd target = Eigen::MatrixXd::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) target(i, y[static_cast<std::size_t>(i)]) = 1.0;
    const double reg = 1.0 / (p.C * static_cast<double>(n));

    // Parameters stacked as (f + 1, k); the last row holds intercepts.
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(f + 1, k), v = w, w_prev = w;
    auto smooth = [&](const Eigen::MatrixXd& theta, Eigen::MatrixXd* grad) {
      Eigen::MatrixXd logits = (z * theta.topRows(f)).rowwise() + theta.row(f);
      const Eigen::VectorXd hi = logits.rowwise().maxCoeff();
      logits.colwise() -= hi;
      Eigen::MatrixXd prob = logits.array().exp();
      const Eigen::VectorXd norm = prob.rowwise().sum();
      double loss = (norm.array().log() - (logits.array() * target.array()).rowwise().sum()).sum() / static_cast<double>(n);
      if (p.penalty == Penalty::l2) loss += 0.5 * reg * theta.topRows(f).squaredNorm();
      if (grad) {
        prob.array().colwise() /= norm.array();
        const Eigen::MatrixXd diff = (prob - target) / static_cast<double>(n);
        grad->resize(f + 1, k);
        grad->topRows(f) = z.transpose() * diff;
        grad->row(f) = diff.colwise().sum();
        if (p.penalty == Penalty::l2) grad->topRows(f) += reg * theta.topRows(f);
      }
      return loss;
    };
    auto prox = [&](Eigen::MatrixXd theta, double step) {
      if (p.penalty == Penalty::l1) {
        const double thr = step * reg;
        theta.topRows(f) = theta.topRows(f).unaryExpr([thr](double a) {
          return a > thr ? a - thr : (a < -thr ? a + thr : 0.0);
        });
      }
      return theta;
    };
    auto objective = [&](const Eigen::MatrixXd& theta) {
      double o = smooth(theta, nullptr);
      if (p.penalty == Penalty::l1) o += reg * theta.topRows(f).cwiseAbs().sum();
      return o;
    };

    double lipschitz = 1.0, t = 1.0, prev_obj = objective(w);
    Eigen::MatrixXd g;
    for (iterations_ = 0; iterations_ < p.max_iter; ++iterations_) {
      const double fv = smooth(v, &g);
      Eigen::MatrixXd candidate;
      for (;;) {
        candidate = prox(v - g / lipschitz, 1.0 / lipschitz);
        const Eigen::MatrixXd d = candidate - v;
        if (smooth(candidate, nullptr) <= fv + (g.array() * d.array()).sum() + 0.5 * lipschitz * d.squaredNorm() + 1e-12) break;
        lipschitz *= 2.0;
      }
      w_prev = w;
      w = candidate;
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      v = w + ((t - 1.0) / t_next) * (w - w_prev);
      t = t_next;
      const double obj = objective(w);
      if (obj > prev_obj) {  // restart momentum on non-monotone steps
        v = w;
        t = 1.0;
      }
      if (std::abs(prev_obj - obj) < p.tol * std::max(1.0, std::abs(obj)) && iterations_ > 10) break;
      prev_obj = obj;
      lipschitz = std::max(lipschitz / 1.5, 1e-8);
    }
    weights_ = w.topRows(f);
    bias_ = w.row(f);
  }

  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& x) const override {
    Eigen::MatrixXd logits = (standardize(x) * weights_).rowwise() + bias_;
    const Eigen::VectorXd hi = logits.rowwise().maxCoeff();
    logits.colwise() -= hi;
    Eigen::MatrixXd prob = logits.array().exp();
    const Eigen::VectorXd norm = prob.rowwise().sum();
    prob.array().colwise() /= norm.array();
    return prob;
  }

  std::size_t n_classes() const override { return k_; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  int iterations() const { return iterations_; }

 private:
  Eigen::MatrixXd standardize(const Eigen::MatrixXd& x) const {
    return (x.rowwise() - mean_).array().rowwise() / scale_.array();
  }

  std::size_t k_ = 0;
  Eigen::RowVectorXd mean_, scale_;
  Eigen::MatrixXd weights_;
  Eigen::RowVectorXd bias_;
  int iterations_ = 0;
};

// ---------------------------------------------------------------------------

enum class TabularKind { forest, linear };

struct TabularParams {
  ForestParams forest;
  LogisticParams linear;
};

inline std::unique_ptr<TabularModel> fit_tabular(TabularKind kind, const Eigen::MatrixXd& x, std::span<const int> y,
                                                 int n_classes, const TabularParams& params) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw InternalError("fit_tabular: row/label count mismatch");
  if (kind == TabularKind::forest) {
    params.forest.validate();
    auto m = std::make_unique<RandomForest>();
    m->fit(x, y, n_classes, params.forest);
    return m;
  }
  auto m = std::make_unique<LogisticRegression>();
  m->fit(x, y, n_classes, params.linear);
  return m;
}

/// Fits on the labeled rows of `split` only. Returns the fitted model.
inline std::unique_ptr<TabularModel> fit_on_labeled(TabularKind kind, const FeatureTable& features,
                                                    const data::TimeSeriesDataset& ds,
                                                    const data::SemiSupervisedSplit& split,
                                                    const TabularParams& params) {
  const auto x = features.select_rows(split.labeled);
  std::vector<int> y;
  y.reserve(split.labeled.size());
  for (std::size_t i : split.labeled) y.push_back(ds.labels[i]);
  return fit_tabular(kind, x.values, y, ds.n_classes, params);
}

inline Tensor<double> to_tensor(const Eigen::MatrixXd& m) {
  Tensor<double> out(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
  }
  return out;
}

}  // namespace ssltsc::baselines
