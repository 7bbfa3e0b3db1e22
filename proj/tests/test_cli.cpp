#include "tgail/demos.hpp"
#include "tgail/runner.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace tgail;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run_cli(const std::string& args) {
  const std::string cmd = std::string(TGAIL_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  Result r;
  if (!p) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("tgail_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

// Small GridModes training settings shared by the end-to-end runs.
const char* kQuick = "--env gridmodes --episodes 6 --workers 1";

}  // namespace

TEST_F(Cli, ConfigPrecedenceDefaultsFileFlags) {
  std::ofstream(path("c.json")) << R"({"triple": {"iterations": 7, "omega": 0.3}, "eval_episodes": 11})";
  const auto defaults = nlohmann::json::parse(run_cli("train --print-config").out);
  EXPECT_EQ(defaults["triple"]["iterations"], 150);
  const auto file = nlohmann::json::parse(run_cli("train --print-config --config " + path("c.json")).out);
  EXPECT_EQ(file["triple"]["iterations"], 7);
  EXPECT_EQ(file["triple"]["omega"], 0.3);
  const auto flags = run_cli("train --print-config --config " + path("c.json") + " --iterations 9 --seeds 3");
  ASSERT_EQ(flags.code, 0) << flags.out;
  const auto j = nlohmann::json::parse(flags.out);
  EXPECT_EQ(j["triple"]["iterations"], 9);
  EXPECT_EQ(j["triple"]["omega"], 0.3);
  EXPECT_EQ(j["eval_episodes"], 11);
  EXPECT_EQ(j["seeds"], nlohmann::json::parse("[0, 1, 2]"));
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli("eval --checkpoint " + path("missing.skg")).code, 2);
  std::ofstream(path("bad.json")) << R"({"no_such_key": 1})";
  EXPECT_EQ(run_cli("train --print-config --config " + path("bad.json")).code, 2);
  EXPECT_EQ(run_cli("train --print-config --omega 2").code, 2);
  EXPECT_EQ(run_cli("train --bogus-flag").code, 2);
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("train --print-config --demos " + path("nope.txt")).code, 2);
}

TEST_F(Cli, VerifyTheoryExitCodes) {
  const auto ok = run_cli("verify-theory");
  EXPECT_EQ(ok.code, 0) << ok.out;
  const auto bad = run_cli("verify-theory --corrupt --json");
  EXPECT_EQ(bad.code, 1);
  const auto j = nlohmann::json::parse(bad.out);
  EXPECT_FALSE(j["pass"].get<bool>());
}

TEST_F(Cli, GenDemosCountsAndDeterminism) {
  const auto a = run_cli("gen-demos --seed 3 --out " + path("a"));
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(env::load_demos(path("a/demos.txt")).size(), 150u);
  const auto m = nlohmann::json::parse(slurp(path("a/manifest.json")));
  EXPECT_EQ(m["episodes"], 150);
  EXPECT_EQ(m["per_skill_counts"], nlohmann::json::parse("[50, 50, 50]"));
  EXPECT_GE(m["expert_success_rate"].get<double>(), 0.95);

  ASSERT_EQ(run_cli("gen-demos --seed 3 --out " + path("b")).code, 0);
  EXPECT_EQ(slurp(path("a/manifest.json")), slurp(path("b/manifest.json")));

  ASSERT_EQ(run_cli("gen-demos --per-skill 10 --heldout-per-skill 0 --out " + path("c")).code, 0);
  EXPECT_EQ(env::load_demos(path("c/demos.txt")).size(), 30u);
  EXPECT_FALSE(fs::exists(path("c/heldout.txt")));
}

TEST_F(Cli, ZeroIterationsWritesInitialCheckpoint) {
  const auto r = run_cli(std::string("train ") + kQuick + " --iterations 0 --out " + path("run"));
  ASSERT_EQ(r.code, 0) << r.out;
  ASSERT_TRUE(fs::exists(path("run/seed-0/final.skg")));
  const auto m = run::from_checkpoint(load_checkpoint(path("run/seed-0/final.skg")));
  EXPECT_EQ(m.iteration, 0);
  EXPECT_EQ(m.algorithm, algo::Algorithm::triple_gail);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(path("run/seed-0"))) files += e.path().extension() == ".skg";
  EXPECT_EQ(files, 1u);
}

TEST_F(Cli, SameConfigAndSeedGiveSameHash) {
  for (const char* algo : {"triple-gail", "gail", "cgail", "bc"}) {
    const std::string flags = std::string("train ") + kQuick + " --iterations 3 --bc-epochs 3 --classifier-epochs 2 --algo " + algo;
    ASSERT_EQ(run_cli(flags + " --out " + path("a")).code, 0) << algo;
    ASSERT_EQ(run_cli(flags + " --out " + path("b")).code, 0) << algo;
    const auto a = nlohmann::json::parse(slurp(path("a/manifest.json")));
    const auto b = nlohmann::json::parse(slurp(path("b/manifest.json")));
    EXPECT_EQ(a["runs"][0]["hash"], b["runs"][0]["hash"]) << algo;
    EXPECT_EQ(slurp(path("a/seed-0/final.skg")), slurp(path("b/seed-0/final.skg"))) << algo;
  }
}

TEST_F(Cli, EvalAggregatesEpisodesOverSeeds) {
  ASSERT_EQ(run_cli(std::string("train ") + kQuick + " --iterations 3 --out " + path("run")).code, 0);
  const auto r = run_cli(std::string("eval --env gridmodes --episodes 100 --seeds 3 --checkpoint ") +
                         path("run/seed-0/final.skg") + " --out " + path("ev"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(slurp(path("ev/eval.jsonl")));
  EXPECT_EQ(j["episodes"], 300);
  EXPECT_EQ(j["seeds"], 3);
  const auto both = run_cli(std::string("eval --env gridmodes --episodes 6 --both --checkpoint ") +
                            path("run/seed-0/final.skg") + " --out " + path("ev2"));
  ASSERT_EQ(both.code, 0);
  std::istringstream lines(slurp(path("ev2/eval.jsonl")));
  std::string first, second;
  std::getline(lines, first);
  std::getline(lines, second);
  EXPECT_EQ(nlohmann::json::parse(first)["label_mode"], "selector");
  EXPECT_EQ(nlohmann::json::parse(second)["label_mode"], "true-labels");
}

TEST_F(Cli, EvalOfSavedCheckpointMatchesInMemoryModel) {
  ASSERT_EQ(run_cli("gen-demos --env gridmodes --per-skill 10 --out " + path("d")).code, 0);
  cfg::ExperimentConfig c;
  c.environment = "gridmodes";
  c.demos = path("d/demos.txt");
  c.heldout = path("d/heldout.txt");
  c.triple.iterations = 3;
  c.eval_episodes = 9;
  c.seeds = {4, 5};
  c.workers = 1;
  const auto task = cfg::make_task(c);
  const auto demos = env::load_demos(c.demos);
  const auto m = run::train(c, task, demos, env::load_demos(c.heldout), 0);
  save_checkpoint(run::make_checkpoint(m, 3, 0, c), path("m.skg"));

  eval::EvalOptions o;
  o.episodes = c.eval_episodes;
  o.labels = eval::LabelMode::selector;
  const auto mem = eval::evaluate("triple-gail", task, m.gen, &*m.sel, eval::records_from(demos), c.seeds, o);

  const auto r = run_cli("eval --env gridmodes --demos " + c.demos + " --episodes 9 --seed-list 4,5 --checkpoint " +
                         path("m.skg") + " --out " + path("ev"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::string line = slurp(path("ev/eval.jsonl"));
  line.pop_back();
  EXPECT_EQ(line, mem.to_json());
}

TEST_F(Cli, PlotWritesSvg) {
  const auto r = run_cli("plot --demos-only --svg " + path("demos.svg"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(path("demos.svg")).rfind("<svg", 0), 0u);
  EXPECT_EQ(run_cli("plot --checkpoint " + path("none.skg")).code, 2);
}

TEST_F(Cli, ShippedConfigsResolve) {
  const fs::path root(TGAIL_SOURCE_DIR);
  for (const char* name : {"laneworld-triple-gail.json", "laneworld-ablation.json", "gridmodes-smoke.json"}) {
    const auto r = run_cli("train --print-config --config " + (root / "configs" / name).string() + " --scenarios " +
                           (root / "configs/scenarios.json").string());
    ASSERT_EQ(r.code, 0) << name << "\n" << r.out;
    EXPECT_TRUE(nlohmann::json::accept(r.out)) << name;
  }
  const auto catalog = env::ScenarioCatalog::load(root / "configs/scenarios.json");
  EXPECT_EQ(catalog.dump(), env::ScenarioCatalog::defaults().dump());
}
