#pragma once

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "ssltsc/core/tensor.hpp"
#include "ssltsc/errors.hpp"

namespace ssltsc::metrics {

/// Mann-Whitney AUC: probability that a random positive scores above a
/// random negative, ties counting one half. O(n log n) via midranks.
inline double binary_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InternalError("binary_auc: size mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum_pos += midrank;
        ++n_pos;
      }
    }
    i = j + 1;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("binary_auc: both classes must be present");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

/// Prevalence-weighted one-vs-rest AUC over the columns of `probs`
/// (n, n_classes). Classes absent from `labels` are skipped and the weights
/// renormalized.
inline double weighted_auc(const Tensor<double>& probs, std::span<const int> labels) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  if (labels.size() != n) throw InternalError("weighted_auc: size mismatch");
  std::vector<std::size_t> counts(k, 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  const auto present = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; });
  if (present < 2) throw UndefinedMetricError("weighted_auc: at least two classes must be present");
  double total = 0, weight = 0;
  std::vector<double> scores(n);
  std::vector<int> binary(n);
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      spdlog::warn("weighted_auc: class {} absent from evaluation labels; skipped", c);
      continue;
    }
    if (counts[c] == n) continue;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = probs.at(i, c);
      binary[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
    }
    const double w = static_cast<double>(counts[c]) / static_cast<double>(n);
    total += w * binary_auc(scores, binary);
    weight += w;
  }
  return total / weight;
}

/// Step with the highest validation score; earliest step on ties.
inline std::int64_t select_checkpoint(std::span<const std::pair<std::int64_t, double>> history) {
  if (history.empty()) throw ConfigError("select_checkpoint: empty history");
  auto best = history.front();
  for (const auto& h : history) {
    if (h.second > best.second) best = h;
  }
  return best.first;
}

/// One evaluated (dataset, method, n_l, seed) cell.
struct ResultRecord {
  std::string dataset;
  std::string method;
  std::int64_t n_labeled = 0;
  std::int64_t seed = 0;
  double wauc_val = 0;
  double wauc_test = 0;
  std::int64_t best_step = 0;
  double wall_time_s = 0;
  std::string status = "ok";  // "ok" or "failed"

  auto key() const { return std::tie(dataset, method, n_labeled, seed); }
};

inline const char* kResultsHeader = "dataset,method,n_l,seed,wauc_val,wauc_test,best_step,wall_time_s";

/// Appends records in CSV form. Failed cells carry empty metric fields.
inline void write_result_row(std::ostream& out, const ResultRecord& r) {
  out << r.dataset << ',' << r.method << ',' << r.n_labeled << ',' << r.seed << ',';
  if (r.status == "ok") {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%lld,%.3f", r.wauc_val, r.wauc_test, static_cast<long long>(r.best_step),
                  r.wall_time_s);
    out << buf;
  } else {
    out << ",,," << std::fixed;
    out.precision(3);
    out << r.wall_time_s;
    out.unsetf(std::ios::floatfield);
  }
  out << '\n';
}

/// Results store: primary key (dataset, method, n_l, seed) is unique.
class ResultsTable {
 public:
  bool contains(const ResultRecord& r) const { return keys_.count(key_of(r)) > 0; }

  /// Adds the record; returns false when its key already exists.
  bool add(ResultRecord r) {
    if (r.status == "ok" && (r.wauc_test < 0 || r.wauc_test > 1 || r.wauc_val < 0 || r.wauc_val > 1)) {
      throw InternalError("ResultsTable: wAUC outside [0, 1]");
    }
    if (!keys_.insert(key_of(r)).second) return false;
    records_.push_back(std::move(r));
    return true;
  }

  const std::vector<ResultRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    out << kResultsHeader << '\n';
    for (const auto& r : records_) write_result_row(out, r);
  }

  static ResultsTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open results file " + path);
    ResultsTable t;
    std::string line;
    std::getline(in, line);
    if (line.rfind("dataset,method,n_l,seed", 0) != 0) throw FormatError(path + ": unexpected results header");
    std::size_t row = 1;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (!line.empty() && line.back() == ',') cells.emplace_back();
      if (cells.size() != 8) throw FormatError(path + ": row " + std::to_string(row) + " does not have 8 fields");
      ResultRecord r;
      r.dataset = cells[0];
      r.method = cells[1];
      r.n_labeled = std::stoll(cells[2]);
      r.seed = std::stoll(cells[3]);
      if (cells[4].empty()) {
        r.status = "failed";
      } else {
        r.wauc_val = std::stod(cells[4]);
        r.wauc_test = std::stod(cells[5]);
        r.best_step = std::stoll(cells[6]);
      }
      r.wall_time_s = cells[7].empty() ? 0.0 : std::stod(cells[7]);
      t.add(std::move(r));
    }
    return t;
  }

 private:
  using Key = std::tuple<std::string, std::string, std::int64_t, std::int64_t>;
  static Key key_of(const ResultRecord& r) { return {r.dataset, r.method, r.n_labeled, r.seed}; }
  std::set<Key> keys_;
  std::vector<ResultRecord> records_;
};

/// Mean and sample standard deviation (ddof = 1; 0 for a single value).
struct CellSummary {
  double mean = 0;
  double std = 0;
  std::size_t count = 0;
};

inline CellSummary summarize(std::span<const double> values) {
  CellSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

/// (dataset, method, n_l) -> summary of wauc_test over successful seeds.
using SummaryKey = std::tuple<std::string, std::string, std::int64_t>;

inline std::map<SummaryKey, CellSummary> summarize_results(const ResultsTable& table) {
  std::map<SummaryKey, std::vector<double>> groups;
  for (const auto& r : table.records()) {
    if (r.status == "ok") groups[{r.dataset, r.method, r.n_labeled}].push_back(r.wauc_test);
  }
  std::map<SummaryKey, CellSummary> out;
  for (const auto& [k, v] : groups) out[k] = summarize(v);
  return out;
}

/// Average rank per (method, n_l) across datasets.
struct RankEntry {
  std::string method;
  std::int64_t n_labeled = 0;
  double average_rank = 0;
  std::size_t datasets = 0;
};

struct RankTable {
  std::vector<RankEntry> entries;
  /// Per (dataset, n_l, method) rank, for inspection and invariant checks.
  std::map<std::tuple<std::string, std::int64_t, std::string>, double> per_dataset;

  std::optional<double> rank(const std::string& method, std::int64_t n_labeled) const {
    for (const auto& e : entries) {
      if (e.method == method && e.n_labeled == n_labeled) return e.average_rank;
    }
    return std::nullopt;
  }
};

/// Ranks of `values` in descending order (1 = largest), ties sharing the
/// mean of their positions.
inline std::vector<double> descending_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Ranks methods per (dataset, n_l) by mean test wAUC, then averages each
/// method's rank over the datasets in which it appears. Means are compared
/// after rounding to `decimals` places (negative: no rounding).
inline RankTable aggregate_ranks(const ResultsTable& results, int decimals = -1) {
  const auto summary = summarize_results(results);
  std::set<std::string> datasets, methods;
  std::set<std::int64_t> grid;
  for (const auto& [k, s] : summary) {
    datasets.insert(std::get<0>(k));
    methods.insert(std::get<1>(k));
    grid.insert(std::get<2>(k));
  }
  auto round_to = [decimals](double v) {
    if (decimals < 0) return v;
    const double f = std::pow(10.0, decimals);
    return std::round(v * f) / f;
  };
  RankTable table;
  std::map<std::pair<std::string, std::int64_t>, std::vector<double>> collected;
  for (std::int64_t nl : grid) {
    for (const auto& ds : datasets) {
      std::vector<std::string> present;
      std::vector<double> values;
      for (const auto& m : methods) {
        const auto it = summary.find({ds, m, nl});
        if (it == summary.end()) continue;
        present.push_back(m);
        values.push_back(round_to(it->second.mean));
      }
      if (present.empty()) continue;
      if (present.size() < methods.size()) {
        spdlog::warn("aggregate_ranks: dataset {} at n_l={} lacks {} method(s); excluded from their averages", ds, nl,
                     methods.size() - present.size());
      }
      const auto ranks = descending_ranks(values);
      for (std::size_t i = 0; i < present.size(); ++i) {
        table.per_dataset[{ds, nl, present[i]}] = ranks[i];
        collected[{present[i], nl}].push_back(ranks[i]);
      }
    }
  }
  for (const auto& [key, ranks] : collected) {
    table.entries.push_back(RankEntry{key.first, key.second,
                                      std::accumulate(ranks.begin(), ranks.end(), 0.0) / static_cast<double>(ranks.size()),
                                      ranks.size()});
  }
  return table;
}

}  // namespace ssltsc::metrics
