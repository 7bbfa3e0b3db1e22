#include "tgail/rollout.hpp"

#include <exception>
#include <thread>

namespace tgail::algo {

TaskSpec laneworld_task(const env::LaneWorldConfig& cfg, const env::ScenarioCatalog& catalog) {
  TaskSpec t;
  t.name = "laneworld";
  t.make_env = [cfg, catalog] { return std::make_unique<env::LaneWorld>(cfg, catalog); };
  t.obs_dim = env::kLaneFeatureDim;
  t.act_dim = 2;
  t.skills = env::kDrivingSkills;
  t.head = model::PolicyHead::gaussian;
  t.action_low = Vec2(cfg.accel_min, -cfg.lateral_max);
  t.action_high = Vec2(cfg.accel_max, cfg.lateral_max);
  t.zero_action = Vec::Zero(2);
  t.scenario_skill = [catalog](int s) { return catalog.at(s).skill; };
  t.scenarios = static_cast<int>(catalog.scenarios().size());
  t.eval_key = [](int s, std::uint64_t seed) { return env::EpisodeKey{s, seed}; };
  return t;
}

TaskSpec gridmodes_task(const env::GridModesConfig& cfg) {
  TaskSpec t;
  t.name = "gridmodes";
  t.make_env = [cfg] { return std::make_unique<env::GridModes>(cfg); };
  t.obs_dim = cfg.states();
  t.act_dim = env::GridModesConfig::actions();
  t.skills = cfg.skills;
  t.head = model::PolicyHead::categorical;
  t.zero_action = Vec::Zero(t.act_dim);
  // GridModes keys carry the skill in the scenario slot.
  t.scenario_skill = [](int s) { return s; };
  t.scenarios = cfg.skills;
  // Start somewhere in the skill's own row.
  t.eval_key = [side = cfg.side](int s, std::uint64_t seed) {
    return env::EpisodeKey{s, static_cast<std::uint64_t>(s * side) + seed % static_cast<std::uint64_t>(side)};
  };
  return t;
}

env::LabeledTrajectory rollout_episode(env::Environment& env, const GeneratorModel& gen,
                                       const SelectorModel* sel, const RolloutJob& job,
                                       const RolloutOptions& opts) {
  if (opts.source == LabelSource::selector && sel == nullptr)
    throw std::invalid_argument("rollout_episode: selector labels need a selector");
  Rng rng(job.seed);
  env::LabeledTrajectory traj;
  traj.label = job.label;
  traj.key = job.key;
  Vec obs = env.reset(job.key);
  Vec prev = env.zero_action();
  model::SelectorWindow window(opts.window, env.observation_dim(), env.action_dim());
  const Vec no_label(0);
  bool done = false;
  while (!done) {
    int label = job.label;
    if (opts.source == LabelSource::selector) {
      window.push(obs, prev);
      label = model::selector_choose(*sel, window.features());
    }
    const Vec c = opts.source == LabelSource::none || opts.skills == 0 ? no_label
                                                                        : env::skill_label(label, opts.skills);
    env::Transition tr;
    tr.t = env.timestep();
    tr.position = env.position();
    tr.state = obs;
    Vec raw;
    Scalar lp = 0.0;
    if (opts.stochastic) {
      model::PolicySample s = model::policy_sample(gen, obs, c, rng);
      tr.action = std::move(s.action);
      raw = std::move(s.raw);
      lp = s.log_prob;
    } else {
      tr.action = model::policy_mode(gen, obs, c);
      raw = tr.action;
    }
    const env::StepResult r = env.step(tr.action);
    tr.next_state = r.observation;
    tr.done = r.done;
    prev = tr.action;
    obs = r.observation;
    done = r.done;
    traj.steps.push_back(std::move(tr));
    traj.raw_actions.push_back(std::move(raw));
    traj.log_probs.push_back(lp);
    traj.used_labels.push_back(label);
    if (done) traj.end = r.cause;
  }
  traj.final_position = env.position();
  return traj;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<env::LabeledTrajectory> rollout_many(const env::EnvFactory& make_env,
                                                 const GeneratorModel& gen, const SelectorModel* sel,
                                                 const std::vector<RolloutJob>& jobs,
                                                 const RolloutOptions& opts, int workers) {
  std::vector<env::LabeledTrajectory> out(jobs.size());
  const int n = static_cast<int>(jobs.size());
  workers = std::max(1, std::min(workers, n));
  std::vector<std::unique_ptr<env::Environment>> envs;
  for (int w = 0; w < workers; ++w) envs.push_back(make_env());
  parallel_for(n, workers, [&](int i) {
    auto& e = *envs[static_cast<std::size_t>(i % workers)];
    out[static_cast<std::size_t>(i)] = rollout_episode(e, gen, sel, jobs[static_cast<std::size_t>(i)], opts);
  });
  return out;
}

}  // namespace tgail::algo
