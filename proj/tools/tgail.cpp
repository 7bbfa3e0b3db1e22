// tgail: demos, training, evaluation, ablations, plots and the tabular
// theory suite. Exit codes: 0 success, 1 runtime failure, 2 usage or
// configuration error.

#include "tgail/demos.hpp"
#include "tgail/gridmodes.hpp"
#include "tgail/runner.hpp"
#include "tgail/tabular.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

namespace fs = std::filesystem;
using namespace tgail;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags that override config fields; applied after the config file.
class Overrides {
 public:
  template <typename T>
  void add(CLI::App* app, const std::string& name, const std::string& help,
           std::function<T&(cfg::ExperimentConfig&)> field) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, help);
    items_.push_back({opt, [value, field](cfg::ExperimentConfig& c) { field(c) = *value; }});
  }
  void add_flag(CLI::App* app, const std::string& name, const std::string& help,
                std::function<bool&(cfg::ExperimentConfig&)> field) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app->add_flag(name, *value, help);
    items_.push_back({opt, [value, field](cfg::ExperimentConfig& c) { field(c) = *value; }});
  }
  void custom(CLI::Option* opt, std::function<void(cfg::ExperimentConfig&)> fn) { items_.push_back({opt, std::move(fn)}); }
  void apply(cfg::ExperimentConfig& c) const {
    for (const auto& [opt, fn] : items_)
      if (opt->count() > 0) fn(c);
  }

 private:
  std::vector<std::pair<CLI::Option*, std::function<void(cfg::ExperimentConfig&)>>> items_;
};

struct Common {
  std::string config_path;
  std::string algo;
  bool print_config = false;
  std::shared_ptr<Overrides> overrides = std::make_shared<Overrides>();
};

std::vector<std::uint64_t> seeds_from_count(int n) {
  if (n < 1) throw UsageError("--seeds must be >= 1");
  std::vector<std::uint64_t> s;
  for (int i = 0; i < n; ++i) s.push_back(static_cast<std::uint64_t>(i));
  return s;
}

// Options shared by every experiment subcommand.
void add_common(CLI::App* app, Common& common) {
  auto& o = *common.overrides;
  app->add_option("--config", common.config_path, "JSON config file (defaults < file < flags)");
  app->add_flag("--print-config", common.print_config, "print the resolved config and exit");
  o.add<std::string>(app, "--env", "laneworld | gridmodes", [](auto& c) -> auto& { return c.environment; });
  o.add<std::string>(app, "--demos", "demonstration file", [](auto& c) -> auto& { return c.demos; });
  o.add<std::string>(app, "--heldout", "held-out demonstration file", [](auto& c) -> auto& { return c.heldout; });
  o.add<std::string>(app, "--scenarios", "scenario catalog (JSON)", [](auto& c) -> auto& { return c.scenarios; });
  o.add<std::string>(app, "--out", "output directory", [](auto& c) -> auto& { return c.out_dir; });
  o.add<int>(app, "--workers", "rollout worker threads", [](auto& c) -> auto& { return c.workers; });
  auto seed = std::make_shared<std::uint64_t>();
  o.custom(app->add_option("--seed", *seed, "single seed"), [seed](auto& c) { c.seeds = {*seed}; });
  auto count = std::make_shared<int>();
  o.custom(app->add_option("--seeds", *count, "number of seeds (0..n-1)"),
           [count](auto& c) { c.seeds = seeds_from_count(*count); });
  auto list = std::make_shared<std::string>();
  o.custom(app->add_option("--seed-list", *list, "comma-separated seeds"),
           [list](auto& c) { c.seeds = cfg::parse_seed_list(*list); });
  o.add<int>(app, "--episodes", "evaluation episodes per seed", [](auto& c) -> auto& { return c.eval_episodes; });
  o.add_flag(app, "--stochastic", "evaluate with sampled actions", [](auto& c) -> auto& { return c.eval_stochastic; });
}

void add_training(CLI::App* app, Common& common) {
  auto& o = *common.overrides;
  app->add_option("--algo", common.algo, "bc | gail | cgail | triple-gail");
  o.add<int>(app, "--iterations", "training iterations", [](auto& c) -> auto& { return c.triple.iterations; });
  o.add<double>(app, "--omega", "generator/selector mixing weight", [](auto& c) -> auto& { return c.triple.omega; });
  o.add<double>(app, "--lambda-e", "weight of R_E", [](auto& c) -> auto& { return c.triple.lambda_e; });
  o.add<double>(app, "--lambda-g", "final weight of R_G", [](auto& c) -> auto& { return c.triple.lambda_g_max; });
  o.add<double>(app, "--lambda-g-warmup", "fraction of training spent ramping R_G",
                [](auto& c) -> auto& { return c.triple.lambda_g_warmup; });
  o.add<double>(app, "--lambda-h", "entropy bonus", [](auto& c) -> auto& { return c.triple.lambda_h; });
  o.add<int>(app, "--episodes-per-skill", "rollouts per skill per iteration",
             [](auto& c) -> auto& { return c.triple.episodes_per_skill; });
  o.add<int>(app, "--window", "selector window k", [](auto& c) -> auto& { return c.triple.window; });
  o.add<int>(app, "--bc-warmstart", "supervised warm-start epochs", [](auto& c) -> auto& { return c.triple.bc_warmstart_epochs; });
  o.add<int>(app, "--classifier-epochs", "CGAIL classifier epochs", [](auto& c) -> auto& { return c.triple.classifier_epochs; });
  o.add<int>(app, "--bc-epochs", "behavior cloning epochs", [](auto& c) -> auto& { return c.bc.epochs; });
  o.add<double>(app, "--max-kl", "trust region size", [](auto& c) -> auto& { return c.trpo.max_kl; });
  o.add<int>(app, "--checkpoint-every", "checkpoint cadence in iterations", [](auto& c) -> auto& { return c.checkpoint_every; });
  o.add<int>(app, "--eval-every", "in-training evaluation cadence", [](auto& c) -> auto& { return c.eval_every; });
}

cfg::ExperimentConfig resolve(const Common& common) {
  cfg::ExperimentConfig c = common.config_path.empty() ? cfg::ExperimentConfig{} : cfg::load_config(common.config_path);
  common.overrides->apply(c);
  if (!common.algo.empty()) c.algorithm = algo::parse_algorithm(common.algo);
  c.validate(true);
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out << text;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a(bytes.data(), bytes.size()));
}

constexpr std::uint64_t kDefaultDemoSeed = 1000;

std::vector<env::LabeledTrajectory> demos_of(const cfg::ExperimentConfig& c) {
  return run::demos_for(c, c.demos, 50, kDefaultDemoSeed);
}

std::vector<env::LabeledTrajectory> heldout_of(const cfg::ExperimentConfig& c) {
  return run::demos_for(c, c.heldout, 10, derive_seed(kDefaultDemoSeed, 0x4e1d));
}

// ---------------------------------------------------------------- gen-demos

int cmd_gen_demos(const std::string& environment, int per_skill, int heldout_per_skill, std::uint64_t seed,
                  const std::string& out_dir, const std::string& scenarios) {
  if (per_skill < 1 || heldout_per_skill < 0) throw UsageError("--per-skill must be >= 1");
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const std::uint64_t heldout_seed = derive_seed(seed, 0x4e1d);
  nlohmann::json manifest = {{"environment", environment}, {"seed", seed}, {"heldout_seed", heldout_seed},
                             {"per_skill", per_skill}, {"heldout_per_skill", heldout_per_skill}};
  if (environment == "laneworld") {
    const auto catalog = scenarios.empty() ? env::ScenarioCatalog::defaults() : env::ScenarioCatalog::load(scenarios);
    const env::DemoSet d = env::generate_demos(per_skill, seed, {}, catalog);
    env::save_demos(dir / "demos.txt", d.trajectories, env::lane_feature_names());
    manifest["episodes"] = d.trajectories.size();
    manifest["per_skill_counts"] = d.per_skill;
    manifest["regenerated"] = d.regenerated;
    manifest["expert_success_rate"] = d.expert_success_rate;
    if (heldout_per_skill > 0) {
      const env::DemoSet h = env::generate_demos(heldout_per_skill, heldout_seed, {}, catalog);
      env::save_demos(dir / "heldout.txt", h.trajectories, env::lane_feature_names());
      manifest["heldout_hash"] = file_hash(dir / "heldout.txt");
    }
  } else if (environment == "gridmodes") {
    const env::GridModesConfig g;
    const auto d = env::gridmodes_demos(g, per_skill, seed, env::GridStarts::skill_rows);
    env::save_demos(dir / "demos.txt", d);
    manifest["episodes"] = d.size();
    manifest["per_skill_counts"] = std::vector<int>(static_cast<std::size_t>(g.skills), per_skill);
    if (heldout_per_skill > 0) {
      env::save_demos(dir / "heldout.txt",
                      env::gridmodes_demos(g, heldout_per_skill, heldout_seed, env::GridStarts::skill_rows));
      manifest["heldout_hash"] = file_hash(dir / "heldout.txt");
    }
  } else {
    throw UsageError(fmt::format("unknown environment '{}'", environment));
  }
  manifest["demos_hash"] = file_hash(dir / "demos.txt");
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  fmt::print("wrote {} episodes to {} (demos hash {})\n", manifest["episodes"].get<std::size_t>(),
             (dir / "demos.txt").string(), manifest["demos_hash"].get<std::string>());
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainOutcome {
  std::string final_hash;
  bool aborted = false;
};

TrainOutcome train_one(const cfg::ExperimentConfig& c, const algo::TaskSpec& task,
                       const std::vector<env::LabeledTrajectory>& demos,
                       const std::vector<env::LabeledTrajectory>& heldout, std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream log(dir / "train_log.jsonl");
  std::ofstream eval_log;
  if (c.eval_every > 0) eval_log.open(dir / "eval_log.jsonl");
  algo::TrainHooks hooks;
  hooks.on_iteration = [&](const algo::LossReport& r) {
    log << r.to_json() << "\n";
    log.flush();
    if (r.iteration % 10 == 0)
      fmt::print("  seed {} iter {:4d}  success {:.2f}  reward {:.3f}  R_E {:.3f}  acc {:.3f}\n", seed, r.iteration,
                 r.rollout_success, r.mean_reward, r.r_e, r.selector_accuracy);
  };
  hooks.on_checkpoint = [&](int it, const algo::TrainedModels& m) {
    if (c.checkpoint_every > 0 && it % c.checkpoint_every == 0)
      save_checkpoint(run::make_checkpoint(m, it, seed, c), dir / fmt::format("checkpoint-{:04d}.skg", it));
    if (c.eval_every > 0 && it % c.eval_every == 0) {
      eval::EvalOptions o;
      o.episodes = c.eval_episodes;
      o.seed = derive_seed(seed, 0xe7a1);
      o.stochastic = c.eval_stochastic;
      o.window = c.triple.window;
      o.workers = c.workers;
      o.labels = run::label_mode_for(m.gen, m.sel.has_value(), false);
      const auto recs = eval::rollout_eval(task, m.gen, m.sel ? &*m.sel : nullptr, o);
      eval_log << nlohmann::json{{"iteration", it}, {"success", eval::success_rate(recs)},
                                 {"distance", eval::mean_distance(recs)}}.dump()
               << "\n";
    }
  };
  const algo::TrainedModels m = run::train(c, task, demos, heldout, seed, hooks);
  if (c.algorithm == algo::Algorithm::bc) {
    for (std::size_t e = 0; e < m.bc_train_nll.size(); ++e) {
      nlohmann::json j = {{"epoch", e}, {"train_nll", m.bc_train_nll[e]}};
      if (e < m.bc_heldout_nll.size()) j["heldout_nll"] = m.bc_heldout_nll[e];
      log << j.dump() << "\n";
    }
  }
  const int iterations = static_cast<int>(m.log.size());
  const Checkpoint ck = run::make_checkpoint(m, iterations, seed, c);
  save_checkpoint(ck, dir / "final.skg");
  TrainOutcome out{run::checkpoint_hash(ck), m.aborted};
  if (m.aborted) fmt::print(stderr, "seed {}: training aborted ({}); last good checkpoint kept\n", seed, m.abort_reason);
  return out;
}

int cmd_train(const cfg::ExperimentConfig& c) {
  const auto task = cfg::make_task(c);
  const auto demos = demos_of(c);
  const auto heldout = heldout_of(c);
  const fs::path root(c.out_dir);
  fs::create_directories(root);
  nlohmann::json manifest = {{"config", cfg::to_json(c)}, {"runs", nlohmann::json::array()}};
  bool aborted = false;
  for (auto seed : c.seeds) {
    const fs::path dir = root / fmt::format("seed-{}", seed);
    fmt::print("training {} seed {} -> {}\n", algo::algorithm_name(c.algorithm), seed, dir.string());
    const TrainOutcome r = train_one(c, task, demos, heldout, seed, dir);
    manifest["runs"].push_back({{"seed", seed}, {"checkpoint", (dir / "final.skg").string()},
                                {"hash", r.final_hash}, {"aborted", r.aborted}});
    fmt::print("seed {} final checkpoint hash {}\n", seed, r.final_hash);
    aborted = aborted || r.aborted;
  }
  write_text(root / "manifest.json", manifest.dump(2) + "\n");
  return aborted ? 1 : 0;
}

// ---------------------------------------------------------------- eval

eval::EvalReport evaluate_loaded(const run::LoadedModels& m, const cfg::ExperimentConfig& c,
                                 const algo::TaskSpec& task, const std::vector<eval::EpisodeRecord>& demo_records,
                                 bool true_labels, std::vector<eval::EpisodeRecord>* records = nullptr) {
  eval::EvalOptions o;
  o.episodes = c.eval_episodes;
  o.stochastic = c.eval_stochastic;
  o.window = m.sel ? m.sel->config().window : m.window;
  o.workers = c.workers;
  o.labels = run::label_mode_for(m.gen, m.sel.has_value(), true_labels);
  return eval::evaluate(std::string(algo::algorithm_name(m.algorithm)), task, m.gen, m.sel ? &*m.sel : nullptr,
                        demo_records, c.seeds, o, records);
}

void print_report(const eval::EvalReport& r) {
  auto opt = [](const std::optional<Scalar>& v) { return v ? fmt::format("{:.3f}", *v) : std::string("missing"); };
  std::vector<std::string> kl;
  for (const auto& k : r.position_kl) kl.push_back(opt(k));
  fmt::print("{:<12} labels={:<11} success {:.3f} ± {:.3f}  distance {:.1f} ± {:.1f}  KL [{}]  selector acc {}  ({} episodes)\n",
             r.algorithm, r.label_mode, r.success_mean, r.success_std, r.distance_mean, r.distance_std,
             fmt::join(kl, ", "), opt(r.selector_accuracy), r.episodes);
}

void append_reports(const fs::path& dir, const std::vector<eval::EvalReport>& reps) {
  fs::create_directories(dir);
  std::ofstream jl(dir / "eval.jsonl", std::ios::app);
  const bool fresh = !fs::exists(dir / "eval.csv");
  std::ofstream csv(dir / "eval.csv", std::ios::app);
  if (fresh) csv << eval::EvalReport::csv_header() << "\n";
  for (const auto& r : reps) {
    jl << r.to_json() << "\n";
    csv << r.to_csv() << "\n";
  }
}

int cmd_eval(const cfg::ExperimentConfig& c, const std::string& checkpoint, bool true_labels, bool both) {
  if (checkpoint.empty() || !fs::exists(checkpoint)) throw UsageError(fmt::format("checkpoint not found: '{}'", checkpoint));
  const run::LoadedModels m = run::from_checkpoint(load_checkpoint(checkpoint));
  const auto task = cfg::make_task(c);
  const auto demo_records = eval::records_from(demos_of(c));
  std::vector<eval::EvalReport> reps;
  if (both) {
    reps.push_back(evaluate_loaded(m, c, task, demo_records, false));
    if (m.gen.config().skills > 0) reps.push_back(evaluate_loaded(m, c, task, demo_records, true));
  } else {
    reps.push_back(evaluate_loaded(m, c, task, demo_records, true_labels));
  }
  for (const auto& r : reps) print_report(r);
  append_reports(c.out_dir, reps);
  return 0;
}

// ---------------------------------------------------------------- ablate

int cmd_ablate(cfg::ExperimentConfig c, bool baselines) {
  const auto task = cfg::make_task(c);
  const auto demos = demos_of(c);
  const auto heldout = heldout_of(c);
  const auto demo_records = eval::records_from(demos);
  struct Variant {
    std::string name;
    cfg::ExperimentConfig cfg;
  };
  std::vector<Variant> variants;
  auto with = [&](std::string name, algo::Algorithm a, Scalar le, Scalar lg) {
    cfg::ExperimentConfig v = c;
    v.algorithm = a;
    v.triple.lambda_e = le;
    v.triple.lambda_g_max = lg;
    variants.push_back({std::move(name), v});
  };
  with("triple-gail", algo::Algorithm::triple_gail, c.triple.lambda_e, c.triple.lambda_g_max);
  with("triple-gail-no-rg", algo::Algorithm::triple_gail, c.triple.lambda_e, 0.0);
  with("triple-gail-no-re", algo::Algorithm::triple_gail, 0.0, c.triple.lambda_g_max);
  with("cgail", algo::Algorithm::cgail, c.triple.lambda_e, c.triple.lambda_g_max);
  if (baselines) {
    with("gail", algo::Algorithm::gail, c.triple.lambda_e, c.triple.lambda_g_max);
    with("bc", algo::Algorithm::bc, c.triple.lambda_e, c.triple.lambda_g_max);
  }
  const fs::path root(c.out_dir);
  fs::create_directories(root);
  std::ofstream summary(root / "ablation.csv");
  summary << "variant,label_mode,seed,success,distance,selector_accuracy\n";
  for (const auto& v : variants) {
    for (auto seed : c.seeds) {
      fmt::print("ablation {} seed {}\n", v.name, seed);
      const algo::TrainedModels m = run::train(v.cfg, task, demos, heldout, seed);
      save_checkpoint(run::make_checkpoint(m, static_cast<int>(m.log.size()), seed, v.cfg),
                      root / v.name / fmt::format("seed-{}.skg", seed));
      for (bool truth : {false, true}) {
        if (truth && m.gen.config().skills == 0) continue;
        eval::EvalOptions o;
        o.episodes = c.eval_episodes;
        o.seed = derive_seed(seed, 0xe7a1);
        o.stochastic = c.eval_stochastic;
        o.window = v.cfg.triple.window;
        o.workers = c.workers;
        o.labels = run::label_mode_for(m.gen, m.sel.has_value(), truth);
        const auto recs = eval::rollout_eval(task, m.gen, m.sel ? &*m.sel : nullptr, o);
        const std::string acc =
            o.labels == eval::LabelMode::selector ? fmt::format("{}", eval::selector_accuracy(recs)) : "";
        summary << fmt::format("{},{},{},{},{},{}\n", v.name, eval::label_mode_name(o.labels), seed,
                               eval::success_rate(recs), eval::mean_distance(recs), acc);
        summary.flush();
        fmt::print("  {:<12} success {:.3f}  selector acc {}\n", eval::label_mode_name(o.labels),
                   eval::success_rate(recs), acc.empty() ? "-" : acc);
      }
    }
  }
  fmt::print("summary written to {}\n", (root / "ablation.csv").string());
  return 0;
}

// ---------------------------------------------------------------- plot

int cmd_plot(const cfg::ExperimentConfig& c, const std::string& checkpoint, const std::string& out_file,
             bool demos_only) {
  std::vector<eval::EpisodeRecord> records;
  std::string title;
  const auto task = cfg::make_task(c);
  if (demos_only) {
    records = eval::records_from(demos_of(c));
    title = "demonstrations";
  } else {
    if (checkpoint.empty() || !fs::exists(checkpoint)) throw UsageError(fmt::format("checkpoint not found: '{}'", checkpoint));
    const run::LoadedModels m = run::from_checkpoint(load_checkpoint(checkpoint));
    evaluate_loaded(m, c, task, {}, false, &records);
    title = fmt::format("{} rollouts", algo::algorithm_name(m.algorithm));
  }
  write_text(out_file, eval::trajectory_svg(records, task.skills, {}, title));
  fmt::print("wrote {}\n", out_file);
  return 0;
}

// ---------------------------------------------------------------- verify-theory

int cmd_verify_theory(std::uint64_t seed, double omega, bool corrupt, bool json) {
  theory::TheoryConfig t;
  t.seed = seed;
  t.omega = omega;
  t.corrupt_discriminator = corrupt;
  const theory::TheoryReport rep = theory::verify_theory(t);
  if (json)
    fmt::print("{}\n", rep.to_json());
  else
    fmt::print("{}", rep.to_text());
  return rep.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Triple-GAIL desk-scale toolkit"};
  app.require_subcommand(1);

  // gen-demos
  auto* gen = app.add_subcommand("gen-demos", "generate expert demonstrations and a manifest");
  std::string gd_env = "laneworld", gd_out = "data", gd_scen;
  int gd_per_skill = 50, gd_heldout = 10;
  std::uint64_t gd_seed = 0;
  gen->add_option("--env", gd_env, "laneworld | gridmodes");
  gen->add_option("--per-skill", gd_per_skill, "episodes per skill");
  gen->add_option("--heldout-per-skill", gd_heldout, "held-out episodes per skill (0 = none)");
  gen->add_option("--seed", gd_seed, "demo seed");
  gen->add_option("--out", gd_out, "output directory");
  gen->add_option("--scenarios", gd_scen, "scenario catalog (JSON)");

  // train
  Common train_common;
  auto* train = app.add_subcommand("train", "train one algorithm over a list of seeds");
  add_common(train, train_common);
  add_training(train, train_common);

  // eval
  Common eval_common;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev, eval_common);
  std::string ev_ckpt;
  bool ev_true = false, ev_both = false;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file");
  ev->add_flag("--true-labels", ev_true, "feed the true scenario labels instead of the selector's");
  ev->add_flag("--both", ev_both, "report inferred and true labels");

  // ablate
  Common abl_common;
  auto* abl = app.add_subcommand("ablate", "train and evaluate the R_E / R_G ablations and CGAIL");
  add_common(abl, abl_common);
  add_training(abl, abl_common);
  bool abl_baselines = false;
  abl->add_flag("--baselines", abl_baselines, "also run GAIL and BC");

  // plot
  Common plot_common;
  auto* plot = app.add_subcommand("plot", "trajectory overlay per skill as SVG");
  add_common(plot, plot_common);
  std::string plot_ckpt, plot_out = "trajectories.svg";
  bool plot_demos = false;
  plot->add_option("--checkpoint", plot_ckpt, "checkpoint file");
  plot->add_option("--svg", plot_out, "output SVG file");
  plot->add_flag("--demos-only", plot_demos, "plot the demonstrations instead");

  // verify-theory
  auto* vt = app.add_subcommand("verify-theory", "tabular oracle checks on GridModes");
  std::uint64_t vt_seed = 0;
  double vt_omega = 0.5;
  bool vt_corrupt = false, vt_json = false;
  vt->add_option("--seed", vt_seed, "seed");
  vt->add_option("--omega", vt_omega, "mixing weight");
  vt->add_flag("--corrupt", vt_corrupt, "negative control: corrupt the trained discriminator");
  vt->add_flag("--json", vt_json, "print JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto resolved = [](const Common& common, bool& printed) {
    cfg::ExperimentConfig c = resolve(common);
    if (common.print_config) {
      fmt::print("{}\n", cfg::to_json(c).dump(2));
      printed = true;
    }
    return c;
  };

  try {
    bool printed = false;
    if (*gen) return cmd_gen_demos(gd_env, gd_per_skill, gd_heldout, gd_seed, gd_out, gd_scen);
    if (*train) {
      const auto c = resolved(train_common, printed);
      return printed ? 0 : cmd_train(c);
    }
    if (*ev) {
      const auto c = resolved(eval_common, printed);
      return printed ? 0 : cmd_eval(c, ev_ckpt, ev_true, ev_both);
    }
    if (*abl) {
      const auto c = resolved(abl_common, printed);
      return printed ? 0 : cmd_ablate(c, abl_baselines);
    }
    if (*plot) {
      const auto c = resolved(plot_common, printed);
      return printed ? 0 : cmd_plot(c, plot_ckpt, plot_out, plot_demos);
    }
    if (*vt) return cmd_verify_theory(vt_seed, vt_omega, vt_corrupt, vt_json);
  } catch (const UsageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 2;
}
