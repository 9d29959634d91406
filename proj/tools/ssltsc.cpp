// Command-line front end: prepare, split, tune, run, report, baseline-full.

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ssltsc/experiment.hpp"

namespace {

namespace ex = ssltsc::experiment;
namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kUsage = 2;

struct Flags {
  std::string config;
  std::vector<std::string> datasets;
  std::vector<std::string> methods;
  std::vector<std::int64_t> n_labeled;
  std::optional<int> repeats;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool dry_run = false;
  std::string out;
  std::string results;
  std::string log_level = "info";
};

fs::path resolve_out(const Flags& f, const fs::path& from_config) {
  if (!f.out.empty()) return f.out;
  if (!from_config.empty()) return from_config;
  if (const char* env = std::getenv("SSLTSC_OUT"); env && *env) return env;
  return {};
}

ex::ExperimentConfig load_with_overrides(const Flags& f) {
  if (f.config.empty()) throw ssltsc::ConfigError("--config is required for this command");
  auto cfg = ex::load_config(f.config);
  if (!f.datasets.empty()) {
    std::vector<ex::DatasetSource> keep;
    for (const auto& name : f.datasets) {
      auto it = std::find_if(cfg.datasets.begin(), cfg.datasets.end(), [&](const auto& d) { return d.name == name; });
      if (it == cfg.datasets.end()) throw ssltsc::ConfigError("--dataset: '" + name + "' is not in the configuration");
      keep.push_back(*it);
    }
    cfg.datasets = std::move(keep);
  }
  if (!f.methods.empty()) {
    for (const auto& m : f.methods) {
      if (!ssltsc::eval::is_known_method(m)) throw ssltsc::ConfigError("--methods: unknown method '" + m + "'");
    }
    cfg.methods = f.methods;
  }
  if (!f.n_labeled.empty()) {
    for (auto n : f.n_labeled) {
      if (n < 1) throw ssltsc::ConfigError("--n-labeled: values must be >= 1");
    }
    cfg.n_labeled = f.n_labeled;
  }
  if (f.repeats) {
    if (*f.repeats < 1) throw ssltsc::ConfigError("--repeats: must be >= 1");
    cfg.n_repeats = *f.repeats;
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.workers) {
    if (*f.workers < 1) throw ssltsc::ConfigError("--workers: must be >= 1");
    cfg.workers = *f.workers;
  }
  cfg.output_dir = resolve_out(f, cfg.output_dir);
  return cfg;
}

void print_grid(const ex::Runner& runner, const std::vector<std::string>& methods) {
  const auto cells = runner.grid(methods);
  std::cout << "dataset,method,n_l,seed\n";
  for (const auto& c : cells) {
    std::cout << c.dataset << ',' << c.method << ',' << (c.n_labeled == 0 ? std::string("all") : std::to_string(c.n_labeled))
              << ',' << c.seed << '\n';
  }
  std::cout << cells.size() << " cells\n";
}

int dispatch(const std::string& cmd, const Flags& f) {
  if (cmd == "report") {
    std::optional<ex::ExperimentConfig> cfg;
    if (!f.config.empty()) cfg = load_with_overrides(f);
    const fs::path out = cfg ? cfg->output_dir : resolve_out(f, {});
    const fs::path results = !f.results.empty() ? fs::path(f.results) : out / "results.csv";
    if (out.empty() && f.results.empty()) throw ssltsc::ConfigError("report: give --results or --out");
    const fs::path report_dir = out.empty() ? results.parent_path() / "report" : out / "report";
    if (f.dry_run) {
      std::cout << "would read " << results << " and write " << report_dir << '\n';
      return kOk;
    }
    const auto files = ex::Runner::report(results, report_dir);
    for (const auto& p : files.paths) std::cout << p.string() << '\n';
    return kOk;
  }

  ex::Runner runner(load_with_overrides(f));
  if (cmd == "prepare") {
    if (!f.dry_run) runner.prepare();
    return kOk;
  }
  if (cmd == "split") {
    if (!f.dry_run) runner.split();
    return kOk;
  }
  if (cmd == "tune") {
    if (f.dry_run) {
      for (const auto& d : runner.config().datasets) {
        for (const auto& m : runner.config().methods) std::cout << d.name << ',' << m << '\n';
      }
      return kOk;
    }
    runner.tune();
    return kOk;
  }
  if (cmd == "baseline-full") {
    const std::vector<std::string> methods{ssltsc::eval::kFullyLabeled};
    if (f.dry_run) {
      print_grid(runner, methods);
      return kOk;
    }
    return runner.evaluate(methods) == 0 ? kOk : kPartial;
  }
  if (cmd == "run") {
    if (f.dry_run) {
      print_grid(runner, runner.config().methods);
      return kOk;
    }
    return runner.run() == 0 ? kOk : kPartial;
  }
  throw ssltsc::ConfigError("unknown command " + cmd);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised time series classification experiments"};
  app.require_subcommand(1, 1);
  Flags f;
  app.add_option("--config", f.config, "Experiment configuration (JSON)");
  app.add_option("--dataset", f.datasets, "Restrict to these datasets")->delimiter(',');
  app.add_option("--methods", f.methods, "Methods to run (comma separated)")->delimiter(',');
  app.add_option("--n-labeled", f.n_labeled, "Labeled-set sizes (comma separated)")->delimiter(',');
  app.add_option("--repeats", f.repeats, "Unlabeling repeats per cell");
  app.add_option("--seed", f.seed, "Global seed");
  app.add_option("--workers", f.workers, "Worker processes");
  app.add_flag("--dry-run", f.dry_run, "Print the work without executing it");
  app.add_option("--out", f.out, "Output directory (default: $SSLTSC_OUT)");
  app.add_option("--results", f.results, "Results CSV for `report`");
  app.add_option("--log-level", f.log_level, "trace, debug, info, warn, error");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"prepare", "Ingest datasets into the bundle layout"},
      {"split", "Draw validation and test rows"},
      {"tune", "Hyperparameter search at the tuning n_l"},
      {"run", "Full pipeline: prepare, split, tune (optional), evaluate, report"},
      {"report", "Tables and plots from a results file"},
      {"baseline-full", "Supervised model trained on every training-pool label"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  spdlog::set_level(spdlog::level::from_str(f.log_level));

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    return dispatch(cmd, f);
  } catch (const ssltsc::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kPartial;
  }
}
