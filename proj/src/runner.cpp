#include "tgail/runner.hpp"

#include "tgail/demos.hpp"
#include "tgail/gridmodes.hpp"

#include <fmt/format.h>

namespace tgail::run {

algo::TrainedModels train(const cfg::ExperimentConfig& c, const algo::TaskSpec& task,
                          const std::vector<env::LabeledTrajectory>& demos,
                          const std::vector<env::LabeledTrajectory>& heldout, std::uint64_t seed,
                          const algo::TrainHooks& hooks) {
  if (c.algorithm == algo::Algorithm::bc) {
    algo::BcConfig b = c.bc;
    b.seed = seed;
    return algo::bc_train(task, demos, heldout, b);
  }
  algo::TripleGailConfig t = c.triple;
  t.seed = seed;
  t.workers = c.workers;
  switch (c.algorithm) {
    case algo::Algorithm::gail: return algo::gail_train(task, demos, t, c.trpo, hooks);
    case algo::Algorithm::cgail: return algo::cgail_train(task, demos, heldout, t, c.trpo, hooks);
    default: return algo::triple_gail_train(task, demos, heldout, t, c.trpo, hooks);
  }
}

Checkpoint make_checkpoint(const algo::TrainedModels& m, int iteration, std::uint64_t seed,
                           const cfg::ExperimentConfig& c) {
  Checkpoint ck;
  ck.meta["algorithm"] = std::string(algo::algorithm_name(m.algorithm));
  ck.meta["iteration"] = std::to_string(iteration);
  ck.meta["seed"] = std::to_string(seed);
  ck.meta["window"] = std::to_string(c.triple.window);
  ck.meta["aborted"] = m.aborted ? "1" : "0";
  // Where the run was written and how many threads it used do not change
  // the models, so they stay out of the hashed bytes.
  nlohmann::json j = cfg::to_json(c);
  j.erase("out_dir");
  j.erase("workers");
  ck.meta["config"] = j.dump();
  model::store(ck, m.gen);
  if (m.sel) model::store(ck, *m.sel);
  if (m.disc) model::store(ck, *m.disc);
  return ck;
}

LoadedModels from_checkpoint(const Checkpoint& ck) {
  LoadedModels out;
  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = ck.meta.find(k);
    if (it == ck.meta.end()) throw std::runtime_error(fmt::format("checkpoint: missing '{}'", k));
    return it->second;
  };
  out.algorithm = algo::parse_algorithm(get("algorithm"));
  out.iteration = std::stoi(get("iteration"));
  out.seed = std::stoull(get("seed"));
  out.window = std::stoi(get("window"));
  out.gen = model::load_generator(ck);
  if (model::has_model(ck, "sel.")) out.sel = model::load_selector(ck);
  if (model::has_model(ck, "disc.")) out.disc = model::load_discriminator(ck);
  return out;
}

std::string checkpoint_hash(const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  return hex64(fnv1a(bytes.data(), bytes.size()));
}

eval::LabelMode label_mode_for(const model::GeneratorModel& gen, bool has_selector, bool true_labels) {
  if (gen.config().skills == 0) return eval::LabelMode::none;
  if (true_labels || !has_selector) return eval::LabelMode::true_labels;
  return eval::LabelMode::selector;
}

std::vector<env::LabeledTrajectory> demos_for(const cfg::ExperimentConfig& c, const std::string& path,
                                              int per_skill, std::uint64_t seed) {
  if (!path.empty()) return env::load_demos(path);
  if (c.environment == "gridmodes")
    return env::gridmodes_demos(env::GridModesConfig{}, per_skill, seed, env::GridStarts::skill_rows);
  const auto catalog = c.scenarios.empty() ? env::ScenarioCatalog::defaults() : env::ScenarioCatalog::load(c.scenarios);
  return env::generate_demos(per_skill, seed, {}, catalog).trajectories;
}

}  // namespace tgail::run
