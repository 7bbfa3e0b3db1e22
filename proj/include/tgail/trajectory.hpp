#pragma once

#include "tgail/core.hpp"

#include <functional>
#include <memory>
#include <string_view>
#include <vector>

namespace tgail::env {

/// Skill indices for the driving task; the one-hot label puts 1 at this index.
enum class Skill : int { left = 0, keep = 1, right = 2 };

constexpr int kDrivingSkills = 3;

std::string_view skill_name(int skill);

/// One-hot label of length `k` with the hot entry at `skill`.
Vec skill_label(int skill, int k);

/// Index of the hot entry; throws std::invalid_argument unless `label` is a
/// valid one-hot vector.
int label_index(const Eigen::Ref<const Vec>& label);

/// Identifies a reproducible episode start: scenario (or label) and seed.
struct EpisodeKey {
  int scenario = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const EpisodeKey&, const EpisodeKey&) = default;
};

enum class Termination { running, collision, offroad, road_end, horizon };

std::string_view termination_name(Termination t);

struct Transition {
  Vec state;
  Vec action;
  Vec next_state;
  bool done = false;
  int t = 0;
  /// World position at `state` (x, y for driving; row, col for grids).
  Vec2 position = Vec2::Zero();
};

/// An episode with one skill label shared by every transition.
struct LabeledTrajectory {
  int label = 0;
  EpisodeKey key;
  std::vector<Transition> steps;
  Termination end = Termination::running;
  Vec2 final_position = Vec2::Zero();

  // Filled by policy rollouts only.
  std::vector<Vec> raw_actions;
  std::vector<Scalar> log_probs;
  /// Label fed to the policy at each step (equals `label` unless a selector drove it).
  std::vector<int> used_labels;

  int length() const { return static_cast<int>(steps.size()); }
  /// Timesteps strictly increasing, length within `horizon`.
  bool well_formed(int horizon) const;
};

struct StepResult {
  Vec observation;
  bool done = false;
  bool collision = false;
  Termination cause = Termination::running;
};

/// Episodic environment with vector observations and actions.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual int observation_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int horizon() const = 0;
  virtual Vec reset(const EpisodeKey& key) = 0;
  virtual StepResult step(const Vec& action) = 0;
  virtual Vec observation() const = 0;
  virtual Vec2 position() const = 0;
  virtual int timestep() const = 0;
  /// a_{-1}: the action assumed before the first step.
  virtual Vec zero_action() const { return Vec::Zero(action_dim()); }
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

}  // namespace tgail::env
