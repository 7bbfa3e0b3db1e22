#pragma once

#include "tgail/gridmodes.hpp"
#include "tgail/laneworld.hpp"
#include "tgail/models.hpp"

#include <functional>
#include <vector>

namespace tgail::algo {

using model::DiscriminatorModel;
using model::GeneratorModel;
using model::SelectorModel;

/// What an algorithm needs to know about an environment family.
struct TaskSpec {
  std::string name;
  env::EnvFactory make_env;
  int obs_dim = 0;
  int act_dim = 0;
  int skills = 0;
  model::PolicyHead head = model::PolicyHead::gaussian;
  Vec action_low;
  Vec action_high;
  Vec zero_action;
  /// Skill that succeeds on an evaluation scenario.
  std::function<int(int scenario)> scenario_skill;
  int scenarios = 0;
  /// Episode key for an evaluation episode of `scenario` drawn from `seed`.
  std::function<env::EpisodeKey(int scenario, std::uint64_t seed)> eval_key;
};

TaskSpec laneworld_task(const env::LaneWorldConfig& cfg = {},
                        const env::ScenarioCatalog& catalog = env::ScenarioCatalog::defaults());
TaskSpec gridmodes_task(const env::GridModesConfig& cfg = {});

enum class LabelSource {
  /// The episode's true label at every step.
  fixed,
  /// argmax of the selector on (s_t, a_{t-1}) at every step.
  selector,
  /// Label-blind policy.
  none,
};

struct RolloutOptions {
  LabelSource source = LabelSource::fixed;
  /// Sample actions (training) or act on the mean / argmax (evaluation).
  bool stochastic = true;
  int window = 1;
  /// Label width fed to the generator; 0 for label-blind policies.
  int skills = 0;
};

struct RolloutJob {
  env::EpisodeKey key;
  int label = 0;
  std::uint64_t seed = 0;
};

/// Runs one episode. `sel` is required for LabelSource::selector.
env::LabeledTrajectory rollout_episode(env::Environment& env, const GeneratorModel& gen,
                                       const SelectorModel* sel, const RolloutJob& job,
                                       const RolloutOptions& opts);

/// Runs every job, fanning out over `workers` threads. Job i always lands
/// in slot i and uses only its own seed, so results do not depend on the
/// worker count.
std::vector<env::LabeledTrajectory> rollout_many(const env::EnvFactory& make_env,
                                                 const GeneratorModel& gen, const SelectorModel* sel,
                                                 const std::vector<RolloutJob>& jobs,
                                                 const RolloutOptions& opts, int workers = 1);

/// Runs fn(i) for i in [0, n) over `workers` threads, with static striping.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace tgail::algo
