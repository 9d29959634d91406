#include <gtest/gtest.h>
#include <sys/wait.h>

#include <fstream>

#include "test_util.hpp"

using namespace ssltsc;
using namespace ssltsc::experiment;
using nlohmann::json;

namespace {

json tiny_config_json() {
  return json::parse(R"({
    "config_version": 1,
    "datasets": [{"name": "waves", "format": "synthetic", "synthetic": {"n": 300, "length": 16, "seed": 1}}],
    "split": {"val": 40, "test": 60},
    "methods": ["supervised", "logistic_regression"],
    "n_labeled": [20],
    "n_repeats": 2,
    "training": {"max_steps": 10, "eval_every": 5, "rampup_length": 5, "filters": [4, 4, 4], "b_l": 8, "b_u": 8}
  })");
}

std::filesystem::path write_config(const std::filesystem::path& dir, const json& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

struct CliResult {
  int code;
  std::string out;
};

CliResult cli(const std::string& args, const std::string& env = "") {
  const auto log = std::filesystem::temp_directory_path() / ("ssltsc_cli_" + std::to_string(::getpid()) + ".txt");
  const std::string cmd = env + " " + SSLTSC_CLI + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text};
}

std::size_t lines_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string s; std::getline(in, s);) n += !s.empty();
  return n;
}

}  // namespace

TEST(Config, ParsesTinyConfig) {
  const auto c = parse_config(tiny_config_json());
  ASSERT_EQ(c.datasets.size(), 1u);
  EXPECT_EQ(c.datasets[0].format, DatasetFormat::synthetic);
  EXPECT_EQ(c.datasets[0].synthetic.n, 300u);
  EXPECT_EQ(c.val_size, 40u);
  EXPECT_EQ(c.training.max_steps, 10);
  EXPECT_EQ(c.training.filters, (std::array<std::size_t, 3>{4, 4, 4}));
}

TEST(Config, ReportsEveryProblemAtOnce) {
  auto j = tiny_config_json();
  j["config_version"] = 2;
  j["methods"] = {"supervised", "fixmatch"};
  j["n_repeats"] = 0;
  j["bogus"] = true;
  try {
    parse_config(j);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* f : {"config_version", "fixmatch", "n_repeats", "bogus"}) EXPECT_NE(msg.find(f), std::string::npos) << f;
  }
}

TEST(Config, MissingUcrFileReported) {
  auto j = tiny_config_json();
  j["datasets"] = json::parse(R"([{"name": "x", "format": "ucr", "paths": ["nope_TRAIN.tsv"]}])");
  EXPECT_THROW(parse_config(j, "/nonexistent"), ConfigError);
}

TEST(Config, HashIgnoresWorkersAndOutput) {
  auto a = parse_config(tiny_config_json());
  auto b = a;
  b.workers = 4;
  b.output_dir = "/elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 9;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, JsonRoundTrip) {
  const auto a = parse_config(tiny_config_json());
  EXPECT_EQ(config_hash(parse_config(config_to_json(a))), config_hash(a));
}

TEST(Runner, GridOrderAndFullBaselineCells) {
  auto c = parse_config(tiny_config_json());
  c.output_dir = ssltsc::testing::temp_dir("grid");
  c.methods.push_back("supervised_full");
  const Runner r(c);
  const auto cells = r.grid(c.methods);
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_EQ(cells[0].method, "supervised");
  EXPECT_EQ(cells[1].seed, 1u);
  EXPECT_EQ(cells[5].n_labeled, 0);
}

TEST(Runner, EvaluatesResumesAndReports) {
  auto c = parse_config(tiny_config_json());
  c.output_dir = ssltsc::testing::temp_dir("runner");
  Runner r(c);
  EXPECT_EQ(r.run(), 0);
  const auto table = r.read_results();
  ASSERT_EQ(table.size(), 4u);
  for (const auto& rec : table.records()) {
    EXPECT_EQ(rec.status, "ok");
    EXPECT_EQ(rec.n_labeled, 20);
  }
  EXPECT_TRUE(std::filesystem::exists(c.output_dir / "report" / "performance.md"));
  EXPECT_TRUE(std::filesystem::exists(c.output_dir / "run_info.json"));
  // Second run finds every cell and appends nothing.
  EXPECT_EQ(Runner(c).run(), 0);
  EXPECT_EQ(lines_of(c.output_dir / "results.csv"), 5u);
}

TEST(Runner, PoolMatchesSerialRows) {
  auto c = parse_config(tiny_config_json());
  c.methods = {"supervised"};
  c.output_dir = ssltsc::testing::temp_dir("serial");
  Runner(c).evaluate(c.methods);
  auto p = c;
  p.workers = 2;
  p.output_dir = ssltsc::testing::temp_dir("pool");
  Runner(p).evaluate(p.methods);
  const auto a = Runner(c).read_results().records();
  const auto b = Runner(p).read_results().records();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].key(), b[i].key());
    EXPECT_DOUBLE_EQ(a[i].wauc_test, b[i].wauc_test);
  }
}

TEST(Runner, LabeledSizeAbovePoolRejected) {
  auto c = parse_config(tiny_config_json());
  c.n_labeled = {250};
  c.output_dir = ssltsc::testing::temp_dir("toolarge");
  EXPECT_THROW(Runner(c).evaluate(c.methods), ConfigError);
}

TEST(Cli, DryRunPrintsGrid) {
  const auto dir = ssltsc::testing::temp_dir("cli_dry");
  const auto cfg = write_config(dir, tiny_config_json());
  const auto r = cli("run --config " + cfg.string() + " --out " + (dir / "out").string() + " --dry-run");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("waves,supervised,20,0"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("4 cells"), std::string::npos) << r.out;
  EXPECT_FALSE(std::filesystem::exists(dir / "out" / "results.csv"));
}

TEST(Cli, FlagsOverrideConfig) {
  const auto dir = ssltsc::testing::temp_dir("cli_flags");
  const auto cfg = write_config(dir, tiny_config_json());
  const auto r = cli("run --config " + cfg.string() + " --methods vat --n-labeled 10,30 --repeats 3 --seed 7 --dry-run",
                     "SSLTSC_OUT=" + (dir / "env").string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("waves,vat,30,9"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("6 cells"), std::string::npos) << r.out;
}

TEST(Cli, UsageErrorsExitTwo) {
  const auto dir = ssltsc::testing::temp_dir("cli_usage");
  const auto cfg = write_config(dir, tiny_config_json());
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("run --config " + cfg.string() + " --methods fixmatch --out " + dir.string()).code, 2);
  EXPECT_EQ(cli("run --config " + cfg.string() + " --repeats 0 --out " + dir.string()).code, 2);
  EXPECT_EQ(cli("run --config " + (dir / "missing.json").string() + " --out " + dir.string()).code, 2);
  EXPECT_EQ(cli("run --config " + cfg.string(), "env -u SSLTSC_OUT").code, 2);
  EXPECT_EQ(cli("run --config " + cfg.string() + " --dataset other --out " + dir.string()).code, 2);
}

TEST(Cli, RunThenReportFromResults) {
  const auto dir = ssltsc::testing::temp_dir("cli_run");
  const auto cfg = write_config(dir, tiny_config_json());
  const auto out = dir / "out";
  const auto r = cli("run --config " + cfg.string(), "SSLTSC_OUT=" + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(lines_of(out / "results.csv"), 5u);  // header + 2 methods x 2 repeats
  const auto rep = cli("report --results " + (out / "results.csv").string());
  EXPECT_EQ(rep.code, 0) << rep.out;
  EXPECT_TRUE(std::filesystem::exists(out / "report" / "ranks.csv"));
  const auto full = cli("baseline-full --config " + cfg.string() + " --out " + out.string());
  EXPECT_EQ(full.code, 0) << full.out;
  EXPECT_EQ(lines_of(out / "results.csv"), 7u);
}

TEST(Cli, AllCellsOfAMethodFailingExitsOne) {
  const auto dir = ssltsc::testing::temp_dir("cli_fail");
  auto j = tiny_config_json();
  j["methods"] = {"supervised"};
  j["n_labeled"] = {2};  // fewer labels than classes: every cell fails to stratify
  const auto cfg = write_config(dir, j);
  const auto r = cli("run --config " + cfg.string() + " --out " + (dir / "out").string());
  EXPECT_EQ(r.code, 1) << r.out;
}

TEST(Cli, PrepareAndSplitWriteArtifacts) {
  const auto dir = ssltsc::testing::temp_dir("cli_prep");
  const auto cfg = write_config(dir, tiny_config_json());
  EXPECT_EQ(cli("split --config " + cfg.string() + " --out " + dir.string()).code, 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "datasets" / "waves" / "meta.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "splits" / "waves.json"));
}
