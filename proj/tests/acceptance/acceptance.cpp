// Acceptance runner: one PASS/FAIL line per criterion. Exit status 0 only
// when every selected criterion passes.

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "../method_checks.hpp"

using namespace ssltsc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

// 1 ------------------------------------------------------------------------
Outcome metric_oracle() {
  Rng rng(2024);
  double worst = 0;
  for (int i = 0; i < 200; ++i) {
    const auto inst = oracle::random_auc_instance(rng);
    worst = std::max(worst, std::abs(metrics::weighted_auc(inst.probs, inst.labels) -
                                     oracle::pairwise_weighted_auc(inst.probs, inst.labels)));
  }
  return {worst <= 1e-9, "200 instances, max |wAUC - pairwise oracle| = " + fmt(worst, 3)};
}

// 2 ------------------------------------------------------------------------
Outcome split_correctness() {
  Rng rng(7);
  double worst = 0;
  int partition_failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto k = static_cast<std::size_t>(uniform_int(rng, 2, 6));
    std::vector<int> labels;
    for (std::size_t c = 0; c < k; ++c) labels.insert(labels.end(), static_cast<std::size_t>(uniform_int(rng, 5, 400)), static_cast<int>(c));
    std::shuffle(labels.begin(), labels.end(), rng);
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (uniform(rng) < 0.8) pool.push_back(i);
    }
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i : pool) ++counts[static_cast<std::size_t>(labels[i])];
    const auto present = static_cast<std::int64_t>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
    const auto n_l = static_cast<std::size_t>(uniform_int(rng, present, static_cast<std::int64_t>(pool.size())));
    const auto seed = static_cast<std::uint64_t>(uniform_int(rng, 0, 1'000'000));
    const auto [l, u] = data::stratified_unlabel(pool, labels, n_l, seed);
    std::vector<std::size_t> got(k, 0);
    for (std::size_t i : l) ++got[static_cast<std::size_t>(labels[i])];
    for (std::size_t c = 0; c < k; ++c) {
      const double exact = static_cast<double>(n_l) * static_cast<double>(counts[c]) / static_cast<double>(pool.size());
      worst = std::max(worst, std::abs(static_cast<double>(got[c]) - exact));
    }
    std::vector<std::size_t> joined = l;
    joined.insert(joined.end(), u.begin(), u.end());
    std::sort(joined.begin(), joined.end());
    if (l.size() != n_l || joined != pool) ++partition_failures;
  }
  return {worst <= 1.0 && partition_failures == 0,
          "100 triples, max per-class deviation " + fmt(worst) + ", partition failures " + std::to_string(partition_failures)};
}

// 3 ------------------------------------------------------------------------
Outcome augmentation_suite() {
  using namespace augment;
  Tensor<double> x(Shape{2, 64});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.3 * static_cast<double>(i)) + 0.01 * static_cast<double>(i);
  std::vector<std::string> failed;
  Rng rng(1);
  if (jitter(x, 0.0, rng) != x || rescale(x, 0.0, rng) != x ||
      magnitude_warp(x, 0.0, rng) != x || time_warp(x, 0.0, rng) != x) {
    failed.push_back("identity");
  }
  for (Policy p : kAllPolicies) {
    for (int m = 1; m <= 10; ++m) {
      Rng a(static_cast<std::uint64_t>(m)), b(static_cast<std::uint64_t>(m));
      const auto ya = apply_policy(x, p, m, a);
      if (ya.shape() != x.shape()) failed.push_back("shape " + std::string(policy_name(p)));
      if (ya != apply_policy(x, p, m, b)) failed.push_back("determinism " + std::string(policy_name(p)));
    }
  }
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng r(seed);
    const auto tau = time_warp_map(64, intensity(Policy::time_warp, 10), r);
    for (std::size_t s = 1; s < tau.size(); ++s) {
      if (!(tau[s] > tau[s - 1])) {
        failed.push_back("monotonicity seed " + std::to_string(seed));
        break;
      }
    }
  }
  AugmentConfig cfg;
  std::map<Policy, int> counts;
  const int n = 20000;
  Rng r(3);
  for (int i = 0; i < n; ++i) ++counts[sample_policies(cfg, r).front()];
  double chi2 = 0;
  for (Policy p : kAllPolicies) chi2 += std::pow(counts[p] - n / 4.0, 2) / (n / 4.0);
  const double bound = 3.0 + 3.0 * std::sqrt(6.0);  // chi^2_3 mean + 3 sd
  if (chi2 > bound) failed.push_back("policy frequency");
  std::string detail = "chi2 = " + fmt(chi2) + " (bound " + fmt(bound) + ")";
  for (const auto& f : failed) detail += "; failed: " + f;
  return {failed.empty(), detail};
}

// 4 ------------------------------------------------------------------------
Outcome method_identities() {
  double worst = 0;
  std::string detail;
  for (auto m : {train::Method::mean_teacher, train::Method::vat, train::Method::mixmatch, train::Method::ladder,
                 train::Method::selfsup}) {
    const double gap = checks::ablation_gap(m);
    worst = std::max(worst, gap);
    detail += std::string(train::method_name(m)) + " " + fmt(gap, 2) + ", ";
  }
  return {worst <= 1e-6, detail + "max " + fmt(worst, 2)};
}

// 5 ------------------------------------------------------------------------
Outcome gradient_checks() {
  double worst = 0;
  std::string detail;
  for (auto m : train::kAllMethods) {
    std::string where;
    const double err = checks::method_gradient_error(m, 10, &where);
    worst = std::max(worst, err);
    detail += std::string(train::method_name(m)) + " " + fmt(err, 2) + ", ";
  }
  return {worst <= 1e-3, detail + "max relative error " + fmt(worst, 2)};
}

// 6 ------------------------------------------------------------------------
Outcome vat_geometry() {
  auto cfg = checks::tiny_config(train::Method::vat);
  auto m = checks::tiny_model(cfg, 3);
  double norm_err = 0;
  for (double eps : {0.1, 1.0, 5.0}) {
    Rng rng(2);
    const auto r = train::vat_perturbation(m, checks::tiny_batch(1).unlabeled_x, eps, 10.0, 1, rng);
    for (std::size_t i = 0; i < r.dim(0); ++i) {
      double ss = 0;
      for (double v : r.row(i)) ss += v * v;
      norm_err = std::max(norm_err, std::abs(std::sqrt(ss) - eps) / eps);
    }
  }
  Rng rng(5);
  double worst_angle = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::array<std::array<double, 2>, 2> w;
    std::array<double, 2> b, x0;
    for (auto& row : w) {
      for (auto& v : row) v = normal(rng);
    }
    for (auto& v : b) v = normal(rng);
    for (auto& v : x0) v = normal(rng);
    Tensor<double> wt(Shape{2, 2}), bt(Shape{2});
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t k = 0; k < 2; ++k) wt.at(i, k) = w[k][i];
      bt[i] = b[i];
    }
    auto logits = [&](const nn::Var<double>& v) {
      return nn::linear(v, nn::Var<double>::constant(wt), nn::Var<double>::constant(bt));
    };
    const Tensor<double> x(Shape{1, 2}, std::vector<double>{x0[0], x0[1]});
    const auto r = train::vat_perturbation<double>(logits, x, 0.5, 1e-6, 1, rng);
    const double got = std::atan2(r[1], r[0]) * 180.0 / std::numbers::pi;
    worst_angle = std::max(worst_angle, oracle::axis_angle_degrees(got, oracle::worst_direction_degrees(w, b, x0, 0.5)));
  }
  return {norm_err <= 1e-5 && worst_angle <= 5.0,
          "norm relative error " + fmt(norm_err, 2) + ", worst angle vs sweep " + fmt(worst_angle, 3) + " deg (50 models)"};
}

// 7, 8 ---------------------------------------------------------------------
struct SslRun {
  std::map<std::pair<std::string, std::int64_t>, std::vector<double>> wauc;  // (method, n_l) -> per seed
  std::vector<double> full;
};

constexpr std::size_t kWidth[3] = {16, 32, 16};

SslRun run_ssl_experiment(const std::filesystem::path& out_dir) {
  data::SyntheticSpec spec;
  spec.n = 4000;
  spec.length = 64;
  spec.seed = 11;
  auto ds = data::make_synthetic(spec, "synthetic");
  const auto base = data::make_splits(ds, 500, 1000, 0);
  ds = data::znormalize(ds, data::compute_norm_stats(ds, base.train_pool())).first;

  train::TrainConfig cfg;
  cfg.max_steps = 5000;
  cfg.eval_every = 250;
  cfg.rampup_length = 1000;
  cfg.filters = {kWidth[0], kWidth[1], kWidth[2]};

  SslRun run;
  metrics::ResultsTable table;
  const std::vector<std::string> methods{"supervised", "vat", "mixmatch"};
  auto record = [&](const metrics::ResultRecord& r) {
    spdlog::info("{} n_l={} seed={}: test wAUC {:.4f} (best step {}, {:.0f} s)", r.method, r.n_labeled, r.seed,
                 r.wauc_test, r.best_step, r.wall_time_s);
    table.add(r);
  };
  // Chosen on validation wAUC of a separate synthetic draw (seed 12, n_l=50).
  // The fully-labeled run reuses the supervised choice.
  const nlohmann::json strong_augment{{"n_policies", 4}, {"magnitude", 10}};
  const std::map<std::string, nlohmann::json> tuned{
      {"supervised", {{"augment", strong_augment}}},
      {eval::kFullyLabeled, {{"augment", strong_augment}}},
      {"vat", {{"vat", {{"epsilon", 3.0}}}, {"augment", strong_augment}}},
      {"mixmatch", {{"mixmatch", {{"lambda_u", 5.0}}}, {"augment", strong_augment}}}};
  for (std::int64_t n_l : {50, 1000}) {
    for (const auto& m : methods) {
      auto setup = eval::make_setup(m, cfg);
      if (auto it = tuned.find(m); it != tuned.end()) setup.apply(it->second);
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto r = eval::run_cell(ds, base, setup, n_l, seed);
        record(r);
        if (r.status == "ok") run.wauc[{m, n_l}].push_back(r.wauc_test);
      }
    }
  }
  auto full = eval::make_setup(eval::kFullyLabeled, cfg);
  full.apply(tuned.at(eval::kFullyLabeled));
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto r = eval::run_cell(ds, base, full, 0, seed);
    record(r);
    if (r.status == "ok") run.full.push_back(r.wauc_test);
  }
  std::filesystem::create_directories(out_dir);
  table.write_csv((out_dir / "results.csv").string());
  report::write_report(table, out_dir / "report");
  return run;
}

double mean_of(const std::vector<double>& v) { return metrics::summarize(v).mean; }

Outcome ssl_gain(const SslRun& run) {
  auto gap = [&](const std::string& m, std::int64_t n) {
    const auto& a = run.wauc.at({m, n});
    const auto& s = run.wauc.at({"supervised", n});
    if (a.size() != 3 || s.size() != 3) return std::numeric_limits<double>::quiet_NaN();
    return mean_of(a) - mean_of(s);
  };
  const double mm50 = gap("mixmatch", 50), vat50 = gap("vat", 50), mm1k = gap("mixmatch", 1000), vat1k = gap("vat", 1000);
  const bool pass = mm50 >= 0.03 && vat50 >= 0.03 && mm1k < 0.03 && vat1k < 0.03;
  std::string d = "supervised n_l=50 " + fmt(mean_of(run.wauc.at({"supervised", 50}))) + ", gain mixmatch " + fmt(mm50, 3) +
                  " vat " + fmt(vat50, 3) + "; n_l=1000 supervised " + fmt(mean_of(run.wauc.at({"supervised", 1000}))) +
                  ", gain mixmatch " + fmt(mm1k, 3) + " vat " + fmt(vat1k, 3);
  return {pass, d};
}

Outcome full_label_bound(const SslRun& run) {
  if (run.full.size() != 3) return {false, "fully-labeled runs failed"};
  const double full = mean_of(run.full);
  double best = 0;
  std::string best_name;
  for (const auto& [key, v] : run.wauc) {
    if (key.first == "supervised") continue;
    if (mean_of(v) > best) {
      best = mean_of(v);
      best_name = key.first + " n_l=" + std::to_string(key.second);
    }
  }
  return {full >= best - 0.01, "fully-labeled " + fmt(full) + " vs best semi-supervised " + fmt(best) + " (" + best_name + ")"};
}

// 9 ------------------------------------------------------------------------
Outcome report_fidelity(const std::string& data_dir) {
  struct Cell {
    std::int64_t n_l;
    std::string method, dataset;
    double mean, std;
  };
  std::vector<Cell> cells;
  {
    std::ifstream in(data_dir + "/reference_performance.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string f[5];
      for (auto& s : f) std::getline(ss, s, ',');
      cells.push_back({std::stoll(f[0]), f[1], f[2], std::stod(f[3]), std::stod(f[4])});
    }
  }
  metrics::ResultsTable table;
  for (const auto& c : cells) {
    for (int r = 0; r < 5; ++r) {
      table.add({c.dataset, c.method, c.n_l, r, 0.5, c.mean + c.std * (r - 2) / std::sqrt(2.5), 1, 1, "ok"});
    }
  }
  const auto dir = std::filesystem::temp_directory_path() / "ssltsc_acceptance_report";
  std::filesystem::remove_all(dir);
  const auto results = dir / "results.csv";
  std::filesystem::create_directories(dir);
  table.write_csv(results.string());
  experiment::Runner::report(results, dir / "report");
  const auto perf = report::performance_table(metrics::ResultsTable::read_csv(results.string()));
  int mismatched = 0;
  for (const auto& c : cells) {
    char want[64];
    std::snprintf(want, sizeof want, "%.3f (%.3f)", c.mean, c.std);
    if (perf.cell(c.n_l, c.method, c.dataset).value_or("") != want) ++mismatched;
  }

  const auto ranks = report::rank_table(table, 3);
  std::ifstream in(data_dir + "/reference_ranks.csv");
  std::string line;
  std::getline(in, line);
  const std::vector<std::int64_t> grid{50, 100, 250, 500, 1000};
  double worst = 0;
  int outside = 0, total = 0;
  std::string worst_cell;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string method, v;
    std::getline(ss, method, ',');
    for (auto n : grid) {
      std::getline(ss, v, ',');
      const double d = std::abs(ranks.rank(method, n).value_or(99) - std::stod(v));
      ++total;
      if (d > 0.4 + 1e-9) ++outside;
      if (d > worst) {
        worst = d;
        worst_cell = method + " n_l=" + std::to_string(n);
      }
    }
  }
  return {mismatched == 0 && outside == 0,
          "performance cells mismatched " + std::to_string(mismatched) + "/" + std::to_string(cells.size()) +
              "; rank cells beyond 0.4: " + std::to_string(outside) + "/" + std::to_string(total) + ", worst " +
              fmt(worst, 3) + " (" + worst_cell + ")"};
}

// 10 -----------------------------------------------------------------------
Outcome tuning_machinery() {
  const auto schedule = tuning::hyperband_schedule(27, 3);
  const auto want = oracle::hyperband_ladder_27_3();
  bool ladder_ok = schedule.size() == want.size();
  for (std::size_t b = 0; ladder_ok && b < want.size(); ++b) {
    ladder_ok = schedule[b].rungs.size() == want[b].size();
    for (std::size_t r = 0; ladder_ok && r < want[b].size(); ++r) {
      ladder_ok = schedule[b].rungs[r].n_configs == want[b][r].first && schedule[b].rungs[r].resource == want[b][r].second;
    }
  }
  const tuning::SearchSpace space{{tuning::continuous("x", 0.0, 1.0)}};
  const double optimum = 0.37;
  int hits = 0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    const auto best = tuning::random_search(
        space, [&](const nlohmann::json& c) { return -std::abs(c["x"].get<double>() - optimum); }, 100, 1000 + rep);
    if (std::abs(best.config["x"].get<double>() - optimum) <= 0.01) ++hits;
  }
  return {ladder_ok && hits >= 80, std::string("ladder ") + (ladder_ok ? "matches" : "differs") +
                                       "; random search in top 2% in " + std::to_string(hits) + "/100 repetitions"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::string data_dir = SSLTSC_TEST_DATA;
  std::string out_dir = "acceptance_ssl";
  app.add_option("--criteria", selected, "Criteria to run")->delimiter(',');
  app.add_option("--data", data_dir, "Directory of reference tables");
  app.add_option("--out", out_dir, "Where the SSL experiment writes results and report");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  const std::map<int, std::pair<std::string, double>> meta{
      {1, {"metric oracle", 10}},       {2, {"split correctness", 5}},    {3, {"augmentation suite", 30}},
      {4, {"method identities", 60}},   {5, {"gradient checks", 120}},    {6, {"VAT geometry", 60}},
      {7, {"directional SSL gain", 7200}}, {8, {"fully-labeled upper bound", 7200}}, {9, {"report fidelity", 10}},
      {10, {"tuning machinery", 60}}};
  const std::set<int> want(selected.begin(), selected.end());
  std::optional<SslRun> ssl;
  double ssl_seconds = 0;
  int failures = 0;
  for (const auto& [id, info] : meta) {
    if (!want.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      switch (id) {
        case 1: o = metric_oracle(); break;
        case 2: o = split_correctness(); break;
        case 3: o = augmentation_suite(); break;
        case 4: o = method_identities(); break;
        case 5: o = gradient_checks(); break;
        case 6: o = vat_geometry(); break;
        case 7:
        case 8:
          if (!ssl) {
            spdlog::set_level(spdlog::level::info);
            ssl = run_ssl_experiment(out_dir);
            spdlog::set_level(spdlog::level::warn);
            ssl_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          }
          o = id == 7 ? ssl_gain(*ssl) : full_label_bound(*ssl);
          break;
        case 9: o = report_fidelity(data_dir); break;
        case 10: o = tuning_machinery(); break;
      }
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (id == 7 || id == 8) seconds = ssl_seconds;
    const bool in_time = seconds <= info.second;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("[%s] %2d %s: %s (%.1f s of %.0f s)\n", pass ? "PASS" : "FAIL", id, info.first.c_str(), o.detail.c_str(),
                seconds, info.second);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
