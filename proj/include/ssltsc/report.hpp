#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ssltsc/errors.hpp"
#include "ssltsc/metrics.hpp"

namespace ssltsc::report {

inline constexpr const char* kFullyLabeled = "supervised_full";

/// Human-readable method label used in tables and plots.
inline std::string display_name(const std::string& method) {
  static const std::map<std::string, std::string> names{{"ladder", "Ladder"},
                                                        {"logistic_regression", "Logistic Regression"},
                                                        {"mean_teacher", "Mean Teacher"},
                                                        {"mixmatch", "MixMatch"},
                                                        {"random_forest", "Random Forest"},
                                                        {"selfsup", "Self-Supervised"},
                                                        {"supervised", "Supervised"},
                                                        {"supervised_full", "Supervised (all labels)"},
                                                        {"vat", "VAT"}};
  const auto it = names.find(method);
  return it == names.end() ? method : it->second;
}

inline std::string format_cell(const metrics::CellSummary& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f (%.3f)", s.mean, s.std);
  return buf;
}

/// Performance table: for each n_l, one row per method and
/// one "mean (std)" cell per dataset. The fully-labeled reference is kept
/// separately.
struct PerformanceTable {
  std::vector<std::string> datasets;
  std::vector<std::string> methods;  // ordered by display name
  std::vector<std::int64_t> grid;
  std::map<std::tuple<std::int64_t, std::string, std::string>, metrics::CellSummary> cells;  // (n_l, method, dataset)
  std::map<std::string, metrics::CellSummary> fully_labeled;                                   // per dataset

  std::optional<std::string> cell(std::int64_t n_l, const std::string& method, const std::string& dataset) const {
    const auto it = cells.find({n_l, method, dataset});
    if (it == cells.end()) return std::nullopt;
    return format_cell(it->second);
  }
};

inline PerformanceTable performance_table(const metrics::ResultsTable& results) {
  PerformanceTable t;
  std::set<std::string> datasets, methods;
  std::set<std::int64_t> grid;
  std::map<std::string, std::vector<double>> full;
  for (const auto& [key, s] : metrics::summarize_results(results)) {
    const auto& [ds, method, n_l] = key;
    datasets.insert(ds);
    if (method == kFullyLabeled) continue;
    methods.insert(method);
    grid.insert(n_l);
    t.cells[{n_l, method, ds}] = s;
  }
  for (const auto& r : results.records()) {
    if (r.method == kFullyLabeled && r.status == "ok") full[r.dataset].push_back(r.wauc_test);
  }
  for (const auto& [ds, v] : full) t.fully_labeled[ds] = metrics::summarize(v);
  t.datasets.assign(datasets.begin(), datasets.end());
  t.methods.assign(methods.begin(), methods.end());
  std::sort(t.methods.begin(), t.methods.end(),
            [](const auto& a, const auto& b) { return display_name(a) < display_name(b); });
  t.grid.assign(grid.begin(), grid.end());
  return t;
}

/// Ranks excluding the fully-labeled reference rows.
inline metrics::RankTable rank_table(const metrics::ResultsTable& results, int decimals = -1) {
  metrics::ResultsTable filtered;
  for (const auto& r : results.records()) {
    if (r.method != kFullyLabeled) filtered.add(r);
  }
  return metrics::aggregate_ranks(filtered, decimals);
}

namespace detail {

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors;
}

/// Minimal line chart: categorical x positions, linear y axis.
class SvgChart {
 public:
  SvgChart(std::string title, std::vector<std::string> x_labels, double y_lo, double y_hi, std::string y_label)
      : title_(std::move(title)), x_labels_(std::move(x_labels)), y_lo_(y_lo), y_hi_(y_hi), y_label_(std::move(y_label)) {
    if (y_hi_ <= y_lo_) y_hi_ = y_lo_ + 1e-3;
  }

  void add_series(const std::string& name, const std::vector<std::optional<double>>& y,
                  const std::vector<double>& err = {}) {
    series_.push_back({name, y, err});
  }
  void add_hline(const std::string& name, double y) { hlines_.push_back({name, y}); }

  std::string render() const {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title_ << "</text>\n";
    s << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\"" << kH - kB
      << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
      const double v = y_lo_ + (y_hi_ - y_lo_) * i / 5.0;
      s << "<text x=\"" << kL - 6 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">" << fixed(v, 3) << "</text>\n";
      s << "<line x1=\"" << kL << "\" y1=\"" << y(v) << "\" x2=\"" << kW - kR << "\" y2=\"" << y(v)
        << "\" stroke=\"#eeeeee\"/>\n";
    }
    for (std::size_t i = 0; i < x_labels_.size(); ++i) {
      s << "<text x=\"" << x(i) << "\" y=\"" << kH - kB + 18 << "\" text-anchor=\"middle\">" << x_labels_[i]
        << "</text>\n";
    }
    s << "<text x=\"16\" y=\"" << (kT + kH - kB) / 2 << "\" transform=\"rotate(-90 16 " << (kT + kH - kB) / 2
      << ")\" text-anchor=\"middle\">" << y_label_ << "</text>\n";
    std::size_t legend = 0;
    for (const auto& h : hlines_) {
      s << "<line class=\"reference\" x1=\"" << kL << "\" y1=\"" << y(h.y) << "\" x2=\"" << kW - kR << "\" y2=\""
        << y(h.y) << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
      s << legend_entry(legend++, h.name, "black", true);
    }
    for (std::size_t k = 0; k < series_.size(); ++k) {
      const auto& sr = series_[k];
      const auto& color = palette()[k % palette().size()];
      std::string points;
      for (std::size_t i = 0; i < sr.y.size(); ++i) {
        if (!sr.y[i]) continue;
        points += fixed(x(i), 1) + "," + fixed(y(*sr.y[i]), 1) + " ";
        if (i < sr.err.size() && sr.err[i] > 0) {
          s << "<line x1=\"" << x(i) << "\" y1=\"" << y(*sr.y[i] - sr.err[i]) << "\" x2=\"" << x(i) << "\" y2=\""
            << y(*sr.y[i] + sr.err[i]) << "\" stroke=\"" << color << "\"/>\n";
        }
        s << "<circle cx=\"" << x(i) << "\" cy=\"" << y(*sr.y[i]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      }
      s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << points << "\"/>\n";
      s << legend_entry(legend++, sr.name, color, false);
    }
    s << "</svg>\n";
    return s.str();
  }

 private:
  static constexpr double kW = 760, kH = 440, kL = 70, kR = 200, kT = 40, kB = 50;

  double x(std::size_t i) const {
    const double span = kW - kL - kR;
    return x_labels_.size() < 2 ? kL + span / 2 : kL + 20 + (span - 40) * static_cast<double>(i) / (x_labels_.size() - 1);
  }
  double y(double v) const { return kH - kB - (kH - kB - kT) * (v - y_lo_) / (y_hi_ - y_lo_); }

  std::string legend_entry(std::size_t i, const std::string& name, const std::string& color, bool dashed) const {
    std::ostringstream s;
    const double ly = kT + 18.0 * static_cast<double>(i);
    s << "<line x1=\"" << kW - kR + 15 << "\" y1=\"" << ly << "\" x2=\"" << kW - kR + 40 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"" << (dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n";
    s << "<text x=\"" << kW - kR + 46 << "\" y=\"" << ly + 4 << "\">" << name << "</text>\n";
    return s.str();
  }

  struct Series {
    std::string name;
    std::vector<std::optional<double>> y;
    std::vector<double> err;
  };
  struct HLine {
    std::string name;
    double y;
  };
  std::string title_;
  std::vector<std::string> x_labels_;
  double y_lo_, y_hi_;
  std::string y_label_;
  std::vector<Series> series_;
  std::vector<HLine> hlines_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

}  // namespace detail

/// Files written by `write_report`.
struct ReportFiles {
  std::vector<std::filesystem::path> paths;
};

/// Writes performance tables (CSV and Markdown), one wAUC-vs-n_l plot per
/// dataset (SVG plus its CSV), and the rank table and plot.
inline ReportFiles write_report(const metrics::ResultsTable& results, const std::filesystem::path& out_dir) {
  if (results.empty()) throw ConfigError("report: results table is empty");
  std::filesystem::create_directories(out_dir);
  ReportFiles files;
  const auto perf = performance_table(results);

  {  // performance.csv: long form
    std::ostringstream csv;
    csv << "n_l,method,dataset,mean,std,count,cell\n";
    for (const auto& [key, s] : perf.cells) {
      const auto& [n_l, method, ds] = key;
      csv << n_l << ',' << method << ',' << detail::csv_quote(ds) << ',' << detail::fixed(s.mean, 6) << ','
          << detail::fixed(s.std, 6) << ',' << s.count << ',' << format_cell(s) << '\n';
    }
    for (const auto& [ds, s] : perf.fully_labeled) {
      csv << "all," << kFullyLabeled << ',' << detail::csv_quote(ds) << ',' << detail::fixed(s.mean, 6) << ','
          << detail::fixed(s.std, 6) << ',' << s.count << ',' << format_cell(s) << '\n';
    }
    files.paths.push_back(out_dir / "performance.csv");
    detail::write_text(files.paths.back(), csv.str());
  }
  {  // performance.md: one block per n_l
    std::ostringstream md;
    for (std::int64_t n_l : perf.grid) {
      md << "### Number of labels: " << n_l << "\n\n| Model |";
      for (const auto& ds : perf.datasets) md << ' ' << ds << " |";
      md << "\n|---|";
      for (std::size_t i = 0; i < perf.datasets.size(); ++i) md << "---|";
      md << '\n';
      for (const auto& m : perf.methods) {
        md << "| " << display_name(m) << " |";
        for (const auto& ds : perf.datasets) md << ' ' << perf.cell(n_l, m, ds).value_or("-") << " |";
        md << '\n';
      }
      md << '\n';
    }
    if (!perf.fully_labeled.empty()) {
      md << "### " << display_name(kFullyLabeled) << "\n\n";
      for (const auto& [ds, s] : perf.fully_labeled) md << "- " << ds << ": " << format_cell(s) << '\n';
    }
    files.paths.push_back(out_dir / "performance.md");
    detail::write_text(files.paths.back(), md.str());
  }

  std::vector<std::string> x_labels;
  for (auto n : perf.grid) x_labels.push_back(std::to_string(n));
  for (const auto& ds : perf.datasets) {
    double lo = 1.0, hi = 0.0;
    std::ostringstream csv;
    csv << "method,n_l,mean,std\n";
    for (const auto& [key, s] : perf.cells) {
      if (std::get<2>(key) != ds) continue;
      lo = std::min(lo, s.mean - s.std);
      hi = std::max(hi, s.mean + s.std);
      csv << std::get<1>(key) << ',' << std::get<0>(key) << ',' << detail::fixed(s.mean, 6) << ','
          << detail::fixed(s.std, 6) << '\n';
    }
    const auto full = perf.fully_labeled.find(ds);
    if (full != perf.fully_labeled.end()) {
      lo = std::min(lo, full->second.mean);
      hi = std::max(hi, full->second.mean);
      csv << kFullyLabeled << ",all," << detail::fixed(full->second.mean, 6) << ','
          << detail::fixed(full->second.std, 6) << '\n';
    }
    detail::SvgChart chart(ds, x_labels, std::max(0.0, lo - 0.02), std::min(1.0, hi + 0.02), "wAUC");
    for (const auto& m : perf.methods) {
      std::vector<std::optional<double>> y;
      std::vector<double> err;
      for (auto n : perf.grid) {
        const auto it = perf.cells.find({n, m, ds});
        y.push_back(it == perf.cells.end() ? std::nullopt : std::optional<double>(it->second.mean));
        err.push_back(it == perf.cells.end() ? 0.0 : it->second.std);
      }
      chart.add_series(display_name(m), y, err);
    }
    if (full != perf.fully_labeled.end()) chart.add_hline(display_name(kFullyLabeled), full->second.mean);
    files.paths.push_back(out_dir / ("performance_" + ds + ".svg"));
    detail::write_text(files.paths.back(), chart.render());
    files.paths.push_back(out_dir / ("performance_" + ds + ".csv"));
    detail::write_text(files.paths.back(), csv.str());
  }

  const auto ranks = rank_table(results);
  std::vector<std::string> order;
  for (const auto& e : ranks.entries) {
    if (std::find(order.begin(), order.end(), e.method) == order.end()) order.push_back(e.method);
  }
  const std::int64_t first = perf.grid.empty() ? 0 : perf.grid.front();
  std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    return ranks.rank(a, first).value_or(1e9) < ranks.rank(b, first).value_or(1e9);
  });
  {
    std::ostringstream csv;
    csv << "method";
    for (auto n : perf.grid) csv << ',' << n;
    csv << '\n';
    detail::SvgChart chart("Average rank", x_labels, 1.0, std::max<double>(2.0, static_cast<double>(order.size())),
                           "average rank");
    for (const auto& m : order) {
      csv << detail::csv_quote(display_name(m));
      std::vector<std::optional<double>> y;
      for (auto n : perf.grid) {
        const auto r = ranks.rank(m, n);
        csv << ',' << (r ? detail::fixed(*r, 2) : std::string());
        y.push_back(r);
      }
      csv << '\n';
      chart.add_series(display_name(m), y);
    }
    files.paths.push_back(out_dir / "ranks.csv");
    detail::write_text(files.paths.back(), csv.str());
    files.paths.push_back(out_dir / "ranks.svg");
    detail::write_text(files.paths.back(), chart.render());
  }
  return files;
}

}  // namespace ssltsc::report
