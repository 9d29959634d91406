#pragma once

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ssltsc/core/random.hpp"
#include "ssltsc/core/tensor.hpp"
#include "ssltsc/errors.hpp"

namespace ssltsc::data {

/// Labeled collection of equal-length series, values shaped (n, c, t).
struct TimeSeriesDataset {
  std::string name;
  Tensor<double> values;
  std::vector<int> labels;
  int n_classes = 0;
  std::vector<std::string> channel_names;

  std::size_t n() const { return values.rank() == 3 ? values.dim(0) : 0; }
  std::size_t c() const { return values.rank() == 3 ? values.dim(1) : 0; }
  std::size_t t() const { return values.rank() == 3 ? values.dim(2) : 0; }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
  }

  /// Throws FormatError or DegenerateDatasetError when an invariant is broken.
  void validate() const {
    if (values.rank() != 3 || n() < 1 || c() < 1 || t() < 1) {
      throw FormatError("dataset '" + name + "': values must have shape (n, c, t) with n, c, t >= 1");
    }
    if (labels.size() != n()) throw FormatError("dataset '" + name + "': label count does not match n");
    if (n_classes < 1) throw FormatError("dataset '" + name + "': n_classes must be >= 1");
    if (!channel_names.empty() && channel_names.size() != c()) {
      throw FormatError("dataset '" + name + "': channel_names length does not match c");
    }
    for (int y : labels) {
      if (y < 0 || y >= n_classes) throw FormatError("dataset '" + name + "': label out of range");
    }
    const auto counts = class_counts();
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (counts[k] == 0) throw FormatError("dataset '" + name + "': class " + std::to_string(k) + " has no samples");
    }
    for (double v : values.values()) {
      if (!std::isfinite(v)) throw FormatError("dataset '" + name + "': non-finite value");
    }
  }

  /// Series `i` as a (c, t) tensor.
  Tensor<double> series(std::size_t i) const {
    return Tensor<double>(Shape{c(), t()}, std::vector<double>(values.row(i).begin(), values.row(i).end()));
  }

  /// Whether every class holds the same number of samples.
  bool balanced() const {
    const auto counts = class_counts();
    return std::adjacent_find(counts.begin(), counts.end(), std::not_equal_to<>()) == counts.end();
  }
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Index partition of one dataset for one unlabeling seed.
struct SemiSupervisedSplit {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;

  /// labeled ∪ unlabeled, sorted.
  std::vector<std::size_t> train_pool() const {
    std::vector<std::size_t> pool = labeled;
    pool.insert(pool.end(), unlabeled.begin(), unlabeled.end());
    std::sort(pool.begin(), pool.end());
    return pool;
  }
};

struct Batch {
  Tensor<double> labeled_x;    // (b_l, c, t)
  std::vector<int> labeled_y;  // (b_l)
  Tensor<double> unlabeled_x;  // (b_u, c, t)
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\n')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_line(std::string_view line, char delim) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline std::optional<double> parse_double(std::string_view cell) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) return std::nullopt;
  return v;
}

/// Maps raw label strings onto 0..K-1 in sorted order of the raw values
/// (numeric order when every label parses as a number).
inline std::vector<int> encode_labels(const std::vector<std::string>& raw, int& n_classes) {
  bool numeric = true;
  for (const auto& r : raw) numeric = numeric && parse_double(r).has_value();
  std::vector<std::string> uniq(raw.begin(), raw.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (numeric) {
    std::sort(uniq.begin(), uniq.end(), [](const std::string& a, const std::string& b) {
      return *parse_double(a) < *parse_double(b);
    });
    // "1" and "1.0" denote the same class.
    uniq.erase(std::unique(uniq.begin(), uniq.end(),
                           [](const std::string& a, const std::string& b) { return *parse_double(a) == *parse_double(b); }),
               uniq.end());
  }
  n_classes = static_cast<int>(uniq.size());
  std::vector<int> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (numeric) {
      const double v = *parse_double(raw[i]);
      const auto it = std::find_if(uniq.begin(), uniq.end(), [v](const std::string& u) { return *parse_double(u) == v; });
      out[i] = static_cast<int>(it - uniq.begin());
    } else {
      out[i] = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), raw[i]) - uniq.begin());
    }
  }
  return out;
}

}  // namespace detail

/// Parses a univariate UCR-style table: each row holds the class label
/// followed by t values; `\t` or `,` delimiters are auto-detected.
inline TimeSeriesDataset parse_ucr(std::istream& in, const std::string& name) {
  std::vector<std::string> raw_labels;
  std::vector<double> values;
  std::size_t length = 0;
  std::size_t row = 0;
  char delim = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++row;
    const auto view = detail::trim(line);
    if (view.empty()) continue;
    if (!delim) delim = view.find('\t') != std::string_view::npos ? '\t' : ',';
    const auto cells = detail::split_line(view, delim);
    if (cells.size() < 2) throw FormatError(name + ": row " + std::to_string(row) + " has no values");
    if (length == 0) length = cells.size() - 1;
    if (cells.size() - 1 != length) {
      throw FormatError(name + ": row " + std::to_string(row) + " has " + std::to_string(cells.size() - 1) +
                        " values, expected " + std::to_string(length));
    }
    raw_labels.emplace_back(cells[0]);
    for (std::size_t j = 1; j < cells.size(); ++j) {
      const auto v = detail::parse_double(cells[j]);
      if (!v || !std::isfinite(*v)) {
        throw FormatError(name + ": row " + std::to_string(row) + ", column " + std::to_string(j + 1) +
                          ": non-numeric or missing value '" + std::string(cells[j]) + "'");
      }
      values.push_back(*v);
    }
  }
  if (raw_labels.empty()) throw FormatError(name + ": no rows");

  TimeSeriesDataset ds;
  ds.name = name;
  ds.labels = detail::encode_labels(raw_labels, ds.n_classes);
  if (ds.n_classes < 2) throw DegenerateDatasetError(name + ": a single class cannot be classified");
  ds.values = Tensor<double>(Shape{raw_labels.size(), 1, length}, std::move(values));
  ds.validate();
  return ds;
}

inline TimeSeriesDataset ingest_ucr_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string name = path.stem().string();
  for (const std::string suffix : {"_TRAIN", "_TEST"}) {
    if (name.size() > suffix.size() && name.ends_with(suffix)) name.resize(name.size() - suffix.size());
  }
  return parse_ucr(in, name);
}

/// Loads a `meta.json` + `data.csv` bundle (channel-major values per row).
inline TimeSeriesDataset ingest_bundle(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw FormatError("cannot open " + (dir / "meta.json").string());
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta.json: " + std::string(e.what()));
  }
  for (const char* key : {"name", "n", "c", "t", "n_classes"}) {
    if (!meta.contains(key)) throw FormatError(std::string("meta.json: missing key '") + key + "'");
  }
  const std::string name = meta["name"].get<std::string>();
  const auto n = meta["n"].get<std::size_t>();
  const auto c = meta["c"].get<std::size_t>();
  const auto t = meta["t"].get<std::size_t>();
  const int n_classes = meta["n_classes"].get<int>();
  if (c < 1 || t < 1) throw FormatError(name + ": c and t must be >= 1");
  if (n < 2) throw DegenerateDatasetError(name + ": a single series cannot be split");

  std::ifstream in(dir / "data.csv");
  if (!in) throw FormatError("cannot open " + (dir / "data.csv").string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(name + ": data.csv is empty");
  const auto header = detail::split_line(detail::trim(line), ',');
  if (header.size() != 2 + c * t || header[0] != "id" || header[1] != "label") {
    throw FormatError(name + ": data.csv header must be id,label followed by c*t = " + std::to_string(c * t) +
                      " value columns");
  }

  std::vector<std::string> raw_labels;
  std::vector<double> values;
  values.reserve(n * c * t);
  std::unordered_set<std::string> ids;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const auto view = detail::trim(line);
    if (view.empty()) continue;
    const auto cells = detail::split_line(view, ',');
    if (cells.size() != 2 + c * t) {
      throw FormatError(name + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                        " columns, expected " + std::to_string(2 + c * t));
    }
    if (!ids.insert(std::string(cells[0])).second) {
      throw FormatError(name + ": duplicate id '" + std::string(cells[0]) + "' at row " + std::to_string(row));
    }
    raw_labels.emplace_back(cells[1]);
    for (std::size_t j = 2; j < cells.size(); ++j) {
      const auto v = detail::parse_double(cells[j]);
      if (!v || !std::isfinite(*v)) {
        throw FormatError(name + ": row " + std::to_string(row) + ": non-numeric value '" + std::string(cells[j]) + "'");
      }
      values.push_back(*v);
    }
  }
  if (raw_labels.size() != n) {
    throw FormatError(name + ": meta.json declares n=" + std::to_string(n) + " but data.csv has " +
                      std::to_string(raw_labels.size()) + " rows");
  }

  TimeSeriesDataset ds;
  ds.name = name;
  int found_classes = 0;
  ds.labels = detail::encode_labels(raw_labels, found_classes);
  if (found_classes != n_classes) {
    throw FormatError(name + ": meta.json declares n_classes=" + std::to_string(n_classes) + " but data has " +
                      std::to_string(found_classes));
  }
  if (n_classes < 2) throw DegenerateDatasetError(name + ": a single class cannot be classified");
  ds.n_classes = n_classes;
  ds.values = Tensor<double>(Shape{n, c, t}, std::move(values));
  if (meta.contains("channel_names")) ds.channel_names = meta["channel_names"].get<std::vector<std::string>>();
  ds.validate();
  return ds;
}

/// Writes a dataset in bundle layout; `ingest_bundle` reads it back.
inline void write_bundle(const TimeSeriesDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta{{"name", ds.name}, {"n", ds.n()}, {"c", ds.c()}, {"t", ds.t()}, {"n_classes", ds.n_classes}};
  if (!ds.channel_names.empty()) meta["channel_names"] = ds.channel_names;
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
  std::ofstream out(dir / "data.csv");
  out << "id,label";
  for (std::size_t ch = 1; ch <= ds.c(); ++ch) {
    for (std::size_t s = 1; s <= ds.t(); ++s) out << ",v_" << ch << '_' << s;
  }
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    out << i << ',' << ds.labels[i];
    for (double v : ds.values.row(i)) out << ',' << v;
    out << '\n';
  }
}

/// Per-channel mean and population std over the series in `indices`
/// (all series when empty). Std is floored at 1e-8.
inline NormStats compute_norm_stats(const TimeSeriesDataset& ds, std::span<const std::size_t> indices = {}) {
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(ds.n());
    std::iota(all.begin(), all.end(), std::size_t{0});
    indices = all;
  }
  const std::size_t c = ds.c(), t = ds.t();
  NormStats stats{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  const double count = static_cast<double>(indices.size() * t);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0;
    for (std::size_t i : indices) {
      for (std::size_t k = 0; k < t; ++k) s += ds.values.at(i, ch, k);
    }
    const double m = s / count;
    double sq = 0;
    for (std::size_t i : indices) {
      for (std::size_t k = 0; k < t; ++k) sq += (ds.values.at(i, ch, k) - m) * (ds.values.at(i, ch, k) - m);
    }
    double sd = std::sqrt(sq / count);
    if (sd < 1e-8) {
      spdlog::warn("{}: channel {} is constant; std floored at 1e-8", ds.name, ch);
      sd = 1e-8;
    }
    stats.mean[ch] = m;
    stats.std[ch] = sd;
  }
  return stats;
}

/// Per-channel z-normalization. Reuses `stats` when given (val/test),
/// otherwise computes them over the whole of `ds`.
inline std::pair<TimeSeriesDataset, NormStats> znormalize(const TimeSeriesDataset& ds,
                                                          const std::optional<NormStats>& stats = std::nullopt) {
  NormStats s = stats ? *stats : compute_norm_stats(ds);
  if (s.mean.size() != ds.c() || s.std.size() != ds.c()) throw ConfigError("znormalize: stats do not match channel count");
  TimeSeriesDataset out = ds;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t ch = 0; ch < ds.c(); ++ch) {
      const double sd = std::max(s.std[ch], 1e-8);
      for (std::size_t k = 0; k < ds.t(); ++k) out.values.at(i, ch, k) = (ds.values.at(i, ch, k) - s.mean[ch]) / sd;
    }
  }
  return {std::move(out), std::move(s)};
}

/// Largest-remainder apportionment of `total` over classes with the given
/// counts. With `at_least_one`, every nonempty class receives >= 1 and the
/// remaining assignment keeps each class as close to its exact quota as
/// possible.
inline std::vector<std::size_t> stratified_counts(std::span<const std::size_t> class_counts, std::size_t total,
                                                  bool at_least_one) {
  const double n = static_cast<double>(std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0}));
  const std::size_t k = class_counts.size();
  std::vector<double> quota(k);
  std::vector<std::size_t> out(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    quota[i] = static_cast<double>(total) * static_cast<double>(class_counts[i]) / n;
    out[i] = static_cast<std::size_t>(std::floor(quota[i] + 1e-12));
    if (at_least_one && class_counts[i] > 0) out[i] = std::max<std::size_t>(out[i], 1);
    assigned += out[i];
  }
  // Add to the classes furthest below quota; ties go to the lower class index.
  while (assigned < total) {
    std::size_t best = k;
    for (std::size_t i = 0; i < k; ++i) {
      if (out[i] >= class_counts[i]) continue;
      if (best == k || quota[i] - static_cast<double>(out[i]) > quota[best] - static_cast<double>(out[best]) + 1e-12) best = i;
    }
    if (best == k) break;
    ++out[best];
    ++assigned;
  }
  // Remove from the classes furthest above quota.
  while (assigned > total) {
    std::size_t best = k;
    for (std::size_t i = 0; i < k; ++i) {
      if (out[i] <= (at_least_one ? 1u : 0u)) continue;
      if (best == k || static_cast<double>(out[i]) - quota[i] > static_cast<double>(out[best]) - quota[best] + 1e-12) best = i;
    }
    if (best == k) break;
    --out[best];
    --assigned;
  }
  return out;
}

namespace detail {

inline std::vector<std::vector<std::size_t>> group_by_class(std::span<const std::size_t> idx, std::span<const int> labels,
                                                            int n_classes) {
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(n_classes));
  for (std::size_t i : idx) groups[static_cast<std::size_t>(labels[i])].push_back(i);
  return groups;
}

}  // namespace detail

/// Draws stratified validation and test sets; the remaining indices form the
/// training pool (returned as `unlabeled` until `stratified_unlabel` runs).
inline SemiSupervisedSplit make_splits(const TimeSeriesDataset& ds, std::size_t val_size = 1000,
                                       std::size_t test_size = 2000, std::uint64_t seed = 0) {
  if (val_size + test_size >= ds.n()) {
    throw StratificationError("val_size + test_size = " + std::to_string(val_size + test_size) +
                              " must be smaller than n = " + std::to_string(ds.n()));
  }
  const auto counts = ds.class_counts();
  const auto val_counts = stratified_counts(counts, val_size, false);
  const auto test_counts = stratified_counts(counts, test_size, false);
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] < val_counts[k] + test_counts[k] + 1) {
      throw StratificationError("class " + std::to_string(k) + " has " + std::to_string(counts[k]) +
                                " samples; val/test need " + std::to_string(val_counts[k] + test_counts[k]) +
                                " plus one for training");
    }
  }
  Rng rng(derive_seed(seed, 0x5eed5));
  std::vector<std::size_t> all(ds.n());
  std::iota(all.begin(), all.end(), std::size_t{0});
  auto groups = detail::group_by_class(all, ds.labels, ds.n_classes);

  SemiSupervisedSplit split;
  split.seed = seed;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    auto& g = groups[k];
    std::shuffle(g.begin(), g.end(), rng);
    split.val.insert(split.val.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(val_counts[k]));
    split.test.insert(split.test.end(), g.begin() + static_cast<std::ptrdiff_t>(val_counts[k]),
                      g.begin() + static_cast<std::ptrdiff_t>(val_counts[k] + test_counts[k]));
    split.unlabeled.insert(split.unlabeled.end(), g.begin() + static_cast<std::ptrdiff_t>(val_counts[k] + test_counts[k]),
                           g.end());
  }
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.unlabeled.begin(), split.unlabeled.end());
  return split;
}

/// Hides the labels of all but `n_labeled` pool samples, keeping class
/// proportions (largest remainder, at least one per class).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_unlabel(
    std::span<const std::size_t> train_idx, std::span<const int> labels, std::size_t n_labeled, std::uint64_t seed) {
  if (n_labeled > train_idx.size()) {
    throw ConfigError("n_labeled = " + std::to_string(n_labeled) + " exceeds the training pool size " +
                      std::to_string(train_idx.size()));
  }
  int n_classes = 0;
  for (std::size_t i : train_idx) n_classes = std::max(n_classes, labels[i] + 1);
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i : train_idx) ++counts[static_cast<std::size_t>(labels[i])];
  const auto present = static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](auto v) { return v > 0; }));
  if (n_labeled < present) {
    throw StratificationError("n_labeled = " + std::to_string(n_labeled) + " is smaller than the number of classes " +
                              std::to_string(present));
  }
  const auto take = stratified_counts(counts, n_labeled, true);

  std::vector<std::size_t> sorted(train_idx.begin(), train_idx.end());
  std::sort(sorted.begin(), sorted.end());
  auto groups = detail::group_by_class(sorted, labels, n_classes);
  Rng rng(derive_seed(seed, 0x1abe1));
  std::vector<std::size_t> labeled, unlabeled;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    auto& g = groups[k];
    std::shuffle(g.begin(), g.end(), rng);
    labeled.insert(labeled.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(take[k]));
    unlabeled.insert(unlabeled.end(), g.begin() + static_cast<std::ptrdiff_t>(take[k]), g.end());
  }
  std::sort(labeled.begin(), labeled.end());
  std::sort(unlabeled.begin(), unlabeled.end());
  return {std::move(labeled), std::move(unlabeled)};
}

/// Applies `stratified_unlabel` to the training pool of `base`.
inline SemiSupervisedSplit with_labeled(const SemiSupervisedSplit& base, const TimeSeriesDataset& ds,
                                        std::size_t n_labeled, std::uint64_t seed) {
  SemiSupervisedSplit out = base;
  const auto pool = base.train_pool();
  auto [l, u] = stratified_unlabel(pool, ds.labels, n_labeled, seed);
  out.labeled = std::move(l);
  out.unlabeled = std::move(u);
  out.seed = seed;
  return out;
}

/// Endless, single-consumer stream of training batches. Labeled and
/// unlabeled pools are cycled independently, each reshuffled on wrap.
class BatchStream {
 public:
  BatchStream(const SemiSupervisedSplit& split, const TimeSeriesDataset& ds, std::size_t b_l, std::size_t b_u,
              std::uint64_t rng_seed)
      : ds_(&ds), labeled_(split.labeled), unlabeled_(split.unlabeled), b_l_(b_l), b_u_(b_u), rng_(rng_seed) {
    if (b_l < 1) throw ConfigError("labeled batch size must be >= 1");
    if (labeled_.empty()) throw ConfigError("labeled pool is empty");
    if (b_u > 0 && unlabeled_.empty()) throw ConfigError("unlabeled batch size > 0 but the unlabeled pool is empty");
    std::shuffle(labeled_.begin(), labeled_.end(), rng_);
    std::shuffle(unlabeled_.begin(), unlabeled_.end(), rng_);
  }

  Batch next() {
    Batch b;
    const auto li = draw(labeled_, pos_l_, b_l_);
    b.labeled_x = gather_rows(ds_->values, li);
    b.labeled_y.reserve(li.size());
    for (std::size_t i : li) b.labeled_y.push_back(ds_->labels[i]);
    if (b_u_ > 0) {
      b.unlabeled_x = gather_rows(ds_->values, draw(unlabeled_, pos_u_, b_u_));
    } else {
      b.unlabeled_x = Tensor<double>(Shape{0, ds_->c(), ds_->t()});
    }
    return b;
  }

  Rng& rng() { return rng_; }

 private:
  std::vector<std::size_t> draw(std::vector<std::size_t>& pool, std::size_t& pos, std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos == pool.size()) {
        std::shuffle(pool.begin(), pool.end(), rng_);
        pos = 0;
      }
      out.push_back(pool[pos++]);
    }
    return out;
  }

  const TimeSeriesDataset* ds_;
  std::vector<std::size_t> labeled_;
  std::vector<std::size_t> unlabeled_;
  std::size_t b_l_, b_u_;
  std::size_t pos_l_ = 0, pos_u_ = 0;
  Rng rng_;
};

inline BatchStream make_batches(const SemiSupervisedSplit& split, const TimeSeriesDataset& ds, std::size_t b_l,
                                std::size_t b_u, std::uint64_t rng_seed) {
  return BatchStream(split, ds, b_l, b_u, rng_seed);
}

inline nlohmann::json split_to_json(const SemiSupervisedSplit& s) {
  return {{"seed", s.seed}, {"labeled", s.labeled}, {"unlabeled", s.unlabeled}, {"val", s.val}, {"test", s.test}};
}

inline SemiSupervisedSplit split_from_json(const nlohmann::json& j) {
  SemiSupervisedSplit s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.labeled = j.at("labeled").get<std::vector<std::size_t>>();
    s.unlabeled = j.at("unlabeled").get<std::vector<std::size_t>>();
    s.val = j.at("val").get<std::vector<std::size_t>>();
    s.test = j.at("test").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("split file: ") + e.what());
  }
  return s;
}

/// Checks that the four index lists are disjoint and cover [0, n).
inline bool is_partition(const SemiSupervisedSplit& s, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto* part : {&s.labeled, &s.unlabeled, &s.val, &s.test}) {
    for (std::size_t i : *part) {
      if (i >= n || seen[i]++) return false;
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; });
}

}  // namespace ssltsc::data
