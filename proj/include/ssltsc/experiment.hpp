#pragma once

#include <spdlog/spdlog.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ssltsc/evaluation.hpp"
#include "ssltsc/report.hpp"
#include "ssltsc/synthetic.hpp"

namespace ssltsc::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kConfigVersion = 1;

enum class DatasetFormat { ucr, bundle, synthetic };

struct DatasetSource {
  std::string name;
  DatasetFormat format = DatasetFormat::ucr;
  std::vector<fs::path> paths;  // ucr: files to pool; bundle: one directory
  data::SyntheticSpec synthetic;
};

struct TuningSettings {
  bool enabled = false;
  std::int64_t n_labeled = 500;
  std::int64_t r_max = 25000;
  int eta = 3;
  std::int64_t min_resource = 500;
  std::int64_t max_trials = 1000000;
  double max_seconds = 1e300;
  std::int64_t tabular_trials = 100;
};

struct ExperimentConfig {
  std::vector<DatasetSource> datasets;
  bool normalize = true;
  std::size_t val_size = 1000;
  std::size_t test_size = 2000;
  std::vector<std::string> methods{"supervised", "mean_teacher", "vat", "mixmatch", "ladder", "selfsup",
                                   "random_forest", "logistic_regression"};
  std::vector<std::int64_t> n_labeled{eval::kDefaultGrid.begin(), eval::kDefaultGrid.end()};
  int n_repeats = 5;
  train::TrainConfig training;
  std::map<std::string, json> method_overrides;  // per-method training fragments
  TuningSettings tuning;
  fs::path output_dir;
  std::uint64_t seed = 0;
  int workers = 1;
};

namespace detail {

struct Diagnostics {
  std::vector<std::string> errors;

  void add(const std::string& field, const std::string& msg) { errors.push_back(field + ": " + msg); }
  void raise_if_any() const {
    if (errors.empty()) return;
    std::string all = "invalid configuration";
    for (const auto& e : errors) all += "\n  " + e;
    throw ConfigError(all);
  }
};

template <typename F>
void guarded(Diagnostics& d, const std::string& field, F&& f) {
  try {
    f();
  } catch (const nlohmann::json::exception& e) {
    d.add(field, e.what());
  } catch (const Error& e) {
    d.add(field, e.what());
  }
}

inline data::SyntheticSpec synthetic_from_json(const json& j) {
  data::SyntheticSpec s;
  s.n = j.value("n", s.n);
  s.length = j.value("length", s.length);
  s.frequencies = j.value("frequencies", s.frequencies);
  s.phases = j.value("phases", s.phases);
  s.frequency_jitter = j.value("frequency_jitter", s.frequency_jitter);
  s.phase_jitter = j.value("phase_jitter", s.phase_jitter);
  s.amplitude_jitter = j.value("amplitude_jitter", s.amplitude_jitter);
  s.noise = j.value("noise", s.noise);
  s.trend = j.value("trend", s.trend);
  s.seed = j.value("seed", s.seed);
  return s;
}

}  // namespace detail

/// Parses and validates a configuration document. Relative paths resolve
/// against `base_dir`. All field problems are reported together.
inline ExperimentConfig parse_config(const json& j, const fs::path& base_dir = {}) {
  detail::Diagnostics diag;
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  if (!j.contains("config_version")) {
    diag.add("config_version", "missing");
  } else if (j.at("config_version") != kConfigVersion) {
    diag.add("config_version", "unsupported version " + j.at("config_version").dump());
  }
  static const std::set<std::string> known{"config_version", "datasets", "normalize", "split", "methods", "n_labeled",
                                           "n_repeats", "training", "method_overrides", "tuning", "output_dir", "seed",
                                           "workers"};
  for (const auto& [key, v] : j.items()) {
    if (!known.count(key)) diag.add(key, "unknown field");
  }
  detail::guarded(diag, "datasets", [&] {
    for (const auto& d : j.at("datasets")) {
      DatasetSource src;
      src.name = d.at("name").get<std::string>();
      const auto fmt = d.value("format", std::string("ucr"));
      if (fmt == "ucr") {
        src.format = DatasetFormat::ucr;
        for (const auto& p : d.at("paths")) src.paths.push_back(base_dir / p.get<std::string>());
      } else if (fmt == "bundle") {
        src.format = DatasetFormat::bundle;
        src.paths.push_back(base_dir / d.at("path").get<std::string>());
      } else if (fmt == "synthetic") {
        src.format = DatasetFormat::synthetic;
        src.synthetic = detail::synthetic_from_json(d.value("synthetic", json::object()));
      } else {
        diag.add("datasets[" + src.name + "].format", "must be one of ucr, bundle, synthetic");
        continue;
      }
      for (const auto& p : src.paths) {
        if (!fs::exists(p)) diag.add("datasets[" + src.name + "]", "file not found: " + p.string());
      }
      c.datasets.push_back(std::move(src));
    }
    if (c.datasets.empty()) diag.add("datasets", "at least one dataset is required");
  });
  detail::guarded(diag, "normalize", [&] { c.normalize = j.value("normalize", c.normalize); });
  detail::guarded(diag, "split", [&] {
    if (j.contains("split")) {
      c.val_size = j.at("split").value("val", c.val_size);
      c.test_size = j.at("split").value("test", c.test_size);
    }
  });
  detail::guarded(diag, "methods", [&] {
    c.methods = j.value("methods", c.methods);
    for (const auto& m : c.methods) {
      if (!eval::is_known_method(m)) diag.add("methods", "unknown method '" + m + "'");
    }
  });
  detail::guarded(diag, "n_labeled", [&] {
    c.n_labeled = j.value("n_labeled", c.n_labeled);
    for (auto n : c.n_labeled) {
      if (n < 1) diag.add("n_labeled", "values must be >= 1");
    }
  });
  detail::guarded(diag, "n_repeats", [&] {
    c.n_repeats = j.value("n_repeats", c.n_repeats);
    if (c.n_repeats < 1) diag.add("n_repeats", "must be >= 1");
  });
  detail::guarded(diag, "training", [&] {
    if (j.contains("training")) c.training = train::train_config_from_json(j.at("training"));
  });
  detail::guarded(diag, "method_overrides", [&] {
    if (j.contains("method_overrides")) {
      for (const auto& [m, frag] : j.at("method_overrides").items()) {
        if (!eval::is_known_method(m)) diag.add("method_overrides", "unknown method '" + m + "'");
        c.method_overrides[m] = frag;
      }
    }
  });
  detail::guarded(diag, "tuning", [&] {
    if (!j.contains("tuning")) return;
    const auto& t = j.at("tuning");
    c.tuning.enabled = t.value("enabled", c.tuning.enabled);
    c.tuning.n_labeled = t.value("n_labeled", c.tuning.n_labeled);
    c.tuning.r_max = t.value("r_max", c.tuning.r_max);
    c.tuning.eta = t.value("eta", c.tuning.eta);
    c.tuning.min_resource = t.value("min_resource", c.tuning.min_resource);
    c.tuning.max_trials = t.value("max_trials", c.tuning.max_trials);
    c.tuning.max_seconds = t.value("max_seconds", c.tuning.max_seconds);
    c.tuning.tabular_trials = t.value("tabular_trials", c.tuning.tabular_trials);
    if (c.tuning.eta < 2) diag.add("tuning.eta", "must be >= 2");
    if (c.tuning.min_resource < 1 || c.tuning.min_resource > c.tuning.r_max) {
      diag.add("tuning.min_resource", "must lie in [1, r_max]");
    }
  });
  detail::guarded(diag, "output_dir", [&] {
    if (j.contains("output_dir")) c.output_dir = base_dir / j.at("output_dir").get<std::string>();
  });
  detail::guarded(diag, "seed", [&] { c.seed = j.value("seed", c.seed); });
  detail::guarded(diag, "workers", [&] {
    c.workers = j.value("workers", c.workers);
    if (c.workers < 1) diag.add("workers", "must be >= 1");
  });
  diag.raise_if_any();
  return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

inline json config_to_json(const ExperimentConfig& c) {
  json ds = json::array();
  for (const auto& d : c.datasets) {
    json e{{"name", d.name}};
    switch (d.format) {
      case DatasetFormat::ucr: {
        e["format"] = "ucr";
        json paths = json::array();
        for (const auto& p : d.paths) paths.push_back(p.string());
        e["paths"] = paths;
        break;
      }
      case DatasetFormat::bundle:
        e["format"] = "bundle";
        e["path"] = d.paths.front().string();
        break;
      case DatasetFormat::synthetic:
        e["format"] = "synthetic";
        e["synthetic"] = {{"n", d.synthetic.n},
                          {"length", d.synthetic.length},
                          {"frequencies", d.synthetic.frequencies},
                          {"phases", d.synthetic.phases},
                          {"frequency_jitter", d.synthetic.frequency_jitter},
                          {"phase_jitter", d.synthetic.phase_jitter},
                          {"amplitude_jitter", d.synthetic.amplitude_jitter},
                          {"noise", d.synthetic.noise},
                          {"trend", d.synthetic.trend},
                          {"seed", d.synthetic.seed}};
        break;
    }
    ds.push_back(e);
  }
  json overrides = json::object();
  for (const auto& [m, f] : c.method_overrides) overrides[m] = f;
  return {{"config_version", kConfigVersion},
          {"datasets", ds},
          {"normalize", c.normalize},
          {"split", {{"val", c.val_size}, {"test", c.test_size}}},
          {"methods", c.methods},
          {"n_labeled", c.n_labeled},
          {"n_repeats", c.n_repeats},
          {"training", train::to_json(c.training)},
          {"method_overrides", overrides},
          {"tuning",
           {{"enabled", c.tuning.enabled},
            {"n_labeled", c.tuning.n_labeled},
            {"r_max", c.tuning.r_max},
            {"eta", c.tuning.eta},
            {"min_resource", c.tuning.min_resource},
            {"max_trials", c.tuning.max_trials},
            {"max_seconds", c.tuning.max_seconds},
            {"tabular_trials", c.tuning.tabular_trials}}},
          {"output_dir", c.output_dir.string()},
          {"seed", c.seed},
          {"workers", c.workers}};
}

/// FNV-1a of the canonical configuration, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
  auto j = config_to_json(c);
  j.erase("workers");
  j.erase("output_dir");
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// One (dataset, method, n_l, seed) unit of the evaluation grid.
struct Cell {
  std::string dataset;
  std::string method;
  std::int64_t n_labeled = 0;  // 0 for the fully-labeled baseline (resolved to the pool size)
  std::uint64_t seed = 0;
};

/// Paths of a run's artifacts under its output directory.
struct Layout {
  fs::path root;
  fs::path dataset_dir(const std::string& name) const { return root / "datasets" / name; }
  fs::path split_file(const std::string& name) const { return root / "splits" / (name + ".json"); }
  fs::path tuned_file(const std::string& ds, const std::string& m) const { return root / "tuned" / (ds + "_" + m + ".json"); }
  fs::path tuning_log(const std::string& ds, const std::string& m) const {
    return root / "tuned" / (ds + "_" + m + "_trials.jsonl");
  }
  fs::path results() const { return root / "results.csv"; }
  fs::path cells_dir() const { return root / "cells"; }
  fs::path artifacts() const { return root / "artifacts"; }
  fs::path report_dir() const { return root / "report"; }
};

class Runner {
 public:
  explicit Runner(ExperimentConfig cfg) : cfg_(std::move(cfg)), layout_{cfg_.output_dir} {
    if (cfg_.output_dir.empty()) throw ConfigError("output directory is not set (use --out or SSLTSC_OUT)");
  }

  const ExperimentConfig& config() const { return cfg_; }
  const Layout& layout() const { return layout_; }

  /// Ingests every dataset into the bundle layout (skips existing bundles).
  void prepare() {
    for (const auto& src : cfg_.datasets) {
      const auto dir = layout_.dataset_dir(src.name);
      if (fs::exists(dir / "meta.json")) continue;
      auto ds = ingest(src);
      data::write_bundle(ds, dir);
      spdlog::info("prepared {}: n={} c={} t={} classes={}", ds.name, ds.n(), ds.c(), ds.t(), ds.n_classes);
    }
  }

  /// Stratified val/test rows per dataset; the remaining pool is stored as unlabeled.
  void split() {
    prepare();
    for (const auto& src : cfg_.datasets) {
      const auto path = layout_.split_file(src.name);
      if (fs::exists(path)) continue;
      const auto ds = data::ingest_bundle(layout_.dataset_dir(src.name));
      const auto s = data::make_splits(ds, cfg_.val_size, cfg_.test_size, cfg_.seed);
      fs::create_directories(path.parent_path());
      std::ofstream(path) << data::split_to_json(s).dump() << '\n';
      spdlog::info("split {}: pool={} val={} test={}", src.name, s.unlabeled.size(), s.val.size(), s.test.size());
    }
  }

  /// Dataset ready for training: loaded bundle, normalized with statistics of
  /// its training pool.
  std::pair<data::TimeSeriesDataset, data::SemiSupervisedSplit> load(const std::string& name) {
    auto ds = data::ingest_bundle(layout_.dataset_dir(name));
    std::ifstream in(layout_.split_file(name));
    if (!in) throw ConfigError("no split for dataset " + name + "; run `split` first");
    json j;
    in >> j;
    const auto split = data::split_from_json(j);
    if (!data::is_partition(split, ds.n())) throw FormatError("split file of " + name + " is not a partition");
    if (cfg_.normalize) {
      const auto pool = split.train_pool();
      ds = data::znormalize(ds, data::compute_norm_stats(ds, pool)).first;
    }
    return {std::move(ds), split};
  }

  eval::MethodSetup setup_for(const std::string& dataset, const std::string& method) const {
    auto s = eval::make_setup(method, cfg_.training);
    const auto ov = cfg_.method_overrides.find(method);
    if (ov != cfg_.method_overrides.end()) s.apply(ov->second);
    const auto tuned = layout_.tuned_file(dataset, method == eval::kFullyLabeled ? "supervised" : method);
    if (fs::exists(tuned)) {
      std::ifstream in(tuned);
      json j;
      in >> j;
      s.apply(j.at("config"));
    }
    return s;
  }

  /// Tuning phase on a fixed n_l split; writes tuned configs and trial logs.
  void tune() {
    split();
    for (const auto& src : cfg_.datasets) {
      auto [ds, base] = load(src.name);
      check_grid(ds, base, {cfg_.tuning.n_labeled});
      const auto tune_split = data::with_labeled(base, ds, static_cast<std::size_t>(cfg_.tuning.n_labeled), cfg_.seed);
      for (const auto& m : cfg_.methods) {
        if (m == eval::kFullyLabeled) continue;
        const auto out = layout_.tuned_file(src.name, m);
        if (fs::exists(out)) continue;
        fs::create_directories(out.parent_path());
        std::ofstream log(layout_.tuning_log(src.name, m));
        eval::TuneOptions opts;
        opts.hyperband.r_max = cfg_.tuning.r_max;
        opts.hyperband.eta = cfg_.tuning.eta;
        opts.hyperband.min_resource = cfg_.tuning.min_resource;
        opts.hyperband.max_trials = cfg_.tuning.max_trials;
        opts.hyperband.max_seconds = cfg_.tuning.max_seconds;
        opts.hyperband.seed = cfg_.seed;
        opts.tabular_trials = cfg_.tuning.tabular_trials;
        opts.on_trial = [&](const tuning::TrialRecord& r) { log << r.to_json().dump() << '\n' << std::flush; };
        auto base_setup = eval::make_setup(m, cfg_.training);
        const auto ov = cfg_.method_overrides.find(m);
        if (ov != cfg_.method_overrides.end()) base_setup.apply(ov->second);
        const auto tuned = eval::tune_method(ds, tune_split, base_setup, opts);
        std::ofstream(out) << tuned.to_json().dump(2) << '\n';
        spdlog::info("tuned {}/{}: val wAUC {:.4f} over {} trials{}", src.name, m, tuned.objective,
                     tuned.trials.size(), tuned.incomplete ? " (budget exhausted)" : "");
      }
    }
  }

  /// Every cell of the evaluation grid, in execution order.
  std::vector<Cell> grid(const std::vector<std::string>& methods) const {
    std::vector<Cell> cells;
    for (const auto& src : cfg_.datasets) {
      for (const auto& m : methods) {
        if (m == eval::kFullyLabeled) {
          for (int r = 0; r < cfg_.n_repeats; ++r) cells.push_back({src.name, m, 0, cfg_.seed + static_cast<std::uint64_t>(r)});
          continue;
        }
        for (auto n : cfg_.n_labeled) {
          for (int r = 0; r < cfg_.n_repeats; ++r) cells.push_back({src.name, m, n, cfg_.seed + static_cast<std::uint64_t>(r)});
        }
      }
    }
    return cells;
  }

  /// Runs every missing cell of the grid for `methods`, appending rows to
  /// the results store. Returns 1 when every cell of some method failed.
  int evaluate(const std::vector<std::string>& methods) {
    split();
    if (cfg_.tuning.enabled) tune();
    write_run_info();
    auto table = read_results();
    std::vector<Cell> todo;
    std::map<std::string, std::pair<data::TimeSeriesDataset, data::SemiSupervisedSplit>> loaded;
    for (const auto& cell : grid(methods)) {
      if (!loaded.count(cell.dataset)) {
        loaded.emplace(cell.dataset, load(cell.dataset));
        const auto& [ds, base] = loaded.at(cell.dataset);
        check_grid(ds, base, cfg_.n_labeled);
      }
      metrics::ResultRecord key;
      key.dataset = cell.dataset;
      key.method = cell.method;
      key.seed = static_cast<std::int64_t>(cell.seed);
      key.n_labeled = cell.method == eval::kFullyLabeled
                          ? static_cast<std::int64_t>(loaded.at(cell.dataset).second.train_pool().size())
                          : cell.n_labeled;
      if (!table.contains(key)) todo.push_back(cell);
    }
    spdlog::info("{} of {} cells to run", todo.size(), grid(methods).size());

    auto run_one = [&](const Cell& cell) {
      const auto& [ds, base] = loaded.at(cell.dataset);
      return eval::run_cell(ds, base, setup_for(cell.dataset, cell.method), cell.n_labeled, cell.seed, nullptr,
                            eval::CellOptions{layout_.artifacts()});
    };
    if (cfg_.workers <= 1) {
      for (const auto& cell : todo) append(table, run_one(cell));
    } else {
      run_pool(todo, run_one, table);
    }

    std::map<std::string, std::pair<int, int>> per_method;  // ok, total
    for (const auto& r : table.records()) {
      if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) continue;
      auto& [ok, total] = per_method[r.method];
      ++total;
      if (r.status == "ok") ++ok;
    }
    for (const auto& [m, counts] : per_method) {
      if (counts.second > 0 && counts.first == 0) {
        spdlog::error("every cell of method {} failed", m);
        return 1;
      }
    }
    return 0;
  }

  int run() {
    const int status = evaluate(cfg_.methods);
    report(layout_.results(), layout_.report_dir());
    return status;
  }

  static report::ReportFiles report(const fs::path& results, const fs::path& out_dir) {
    if (!fs::exists(results)) throw ConfigError("results file not found: " + results.string());
    const auto table = metrics::ResultsTable::read_csv(results.string());
    return report::write_report(table, out_dir);
  }

  metrics::ResultsTable read_results() const {
    if (!fs::exists(layout_.results())) return {};
    return metrics::ResultsTable::read_csv(layout_.results().string());
  }

 private:
  static data::TimeSeriesDataset ingest(const DatasetSource& src) {
    switch (src.format) {
      case DatasetFormat::synthetic: return data::make_synthetic(src.synthetic, src.name);
      case DatasetFormat::bundle: {
        auto ds = data::ingest_bundle(src.paths.front());
        ds.name = src.name;
        return ds;
      }
      case DatasetFormat::ucr: {
        std::stringstream pooled;
        for (const auto& p : src.paths) {
          std::ifstream in(p);
          if (!in) throw FormatError("cannot open " + p.string());
          pooled << in.rdbuf() << '\n';
        }
        return data::parse_ucr(pooled, src.name);
      }
    }
    throw InternalError("unknown dataset format");
  }

  static void check_grid(const data::TimeSeriesDataset& ds, const data::SemiSupervisedSplit& base,
                         const std::vector<std::int64_t>& grid) {
    const auto pool = base.train_pool().size();
    for (auto n : grid) {
      if (static_cast<std::size_t>(n) > pool) {
        throw ConfigError("n_labeled: " + std::to_string(n) + " exceeds the training pool of " + ds.name + " (" +
                          std::to_string(pool) + ")");
      }
    }
  }

  void write_run_info() const {
    fs::create_directories(layout_.root);
    json info{{"config_hash", config_hash(cfg_)}, {"seed", cfg_.seed}, {"config", config_to_json(cfg_)}};
    std::ofstream(layout_.root / "run_info.json") << info.dump(2) << '\n';
  }

  void append(metrics::ResultsTable& table, const metrics::ResultRecord& r) const {
    if (!table.add(r)) return;
    const bool fresh = !fs::exists(layout_.results());
    std::ofstream out(layout_.results(), std::ios::app);
    if (fresh) out << metrics::kResultsHeader << '\n';
    metrics::write_result_row(out, r);
  }

  /// Forked worker processes; each writes its row to a file that the parent
  /// (sole writer of the results store) appends in grid order.
  template <typename F>
  void run_pool(const std::vector<Cell>& todo, F&& run_one, metrics::ResultsTable& table) {
    fs::create_directories(layout_.cells_dir());
    std::map<pid_t, std::size_t> running;
    std::vector<std::optional<metrics::ResultRecord>> done(todo.size());
    std::size_t next = 0, flushed = 0;
    auto cell_file = [&](std::size_t i) { return layout_.cells_dir() / ("cell_" + std::to_string(i) + ".csv"); };
    auto flush = [&] {
      while (flushed < todo.size() && done[flushed]) append(table, *done[flushed++]);
    };
    while (next < todo.size() || !running.empty()) {
      while (next < todo.size() && static_cast<int>(running.size()) < cfg_.workers) {
        std::fflush(nullptr);
        const pid_t pid = fork();
        if (pid < 0) throw InternalError("fork failed");
        if (pid == 0) {
          int code = 0;
          try {
            const auto r = run_one(todo[next]);
            std::ofstream out(cell_file(next));
            out << metrics::kResultsHeader << '\n';
            metrics::write_result_row(out, r);
          } catch (...) {
            code = 3;
          }
          _exit(code);
        }
        running[pid] = next++;
      }
      int status = 0;
      const pid_t pid = wait(&status);
      if (pid < 0) break;
      const auto it = running.find(pid);
      if (it == running.end()) continue;
      const std::size_t i = it->second;
      running.erase(it);
      const auto file = cell_file(i);
      if (WIFEXITED(status) && WEXITSTATUS(status) == 0 && fs::exists(file)) {
        done[i] = metrics::ResultsTable::read_csv(file.string()).records().front();
        fs::remove(file);
      } else {
        metrics::ResultRecord failed;
        failed.dataset = todo[i].dataset;
        failed.method = todo[i].method;
        failed.n_labeled = todo[i].n_labeled;
        failed.seed = static_cast<std::int64_t>(todo[i].seed);
        failed.status = "failed";
        done[i] = failed;
      }
      flush();
    }
    flush();
  }

  ExperimentConfig cfg_;
  Layout layout_;
};

}  // namespace ssltsc::experiment
