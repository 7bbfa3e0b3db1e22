#pragma once

// Three-lane highway segment with constant-velocity traffic. The ego starts
// in the middle lane; each scenario is laid out so exactly one skill
// (change left, keep, change right) gets through the segment.

#include "tgail/trajectory.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace tgail::env {

struct LaneWorldConfig {
  Scalar dt = 0.1;
  Scalar road_length = 200.0;
  int horizon = 130;
  Scalar lane_width = 4.0;
  int lanes = 3;
  Scalar vehicle_length = 4.5;
  Scalar vehicle_width = 1.8;
  Scalar accel_min = -4.0;
  Scalar accel_max = 3.0;
  Scalar lateral_max = 1.5;
  Scalar sensor_range = 60.0;

  Scalar lane_center(int lane) const {
    return (static_cast<Scalar>(lanes - 1) / 2.0 - lane) * lane_width;
  }
  Scalar road_half_width() const { return lanes * lane_width / 2.0; }
  /// Lane whose center is nearest to y.
  int lane_of(Scalar y) const;
};

struct Vehicle {
  Scalar x = 0.0;
  Scalar y = 0.0;
  Scalar v = 0.0;
};

struct LaneWorldState {
  Scalar x = 0.0;
  Scalar y = 0.0;
  Scalar v = 0.0;
  int lane = 1;
  int t = 0;
  std::vector<Vehicle> others;
};

struct LaneWorldAction {
  Scalar accel = 0.0;
  Scalar lateral = 0.0;

  Vec to_vec() const { return Vec2(accel, lateral); }
  static LaneWorldAction from_vec(const Eigen::Ref<const Vec>& a) { return {a(0), a(1)}; }
};

inline constexpr int kNeighborSlots = 6;
inline constexpr int kLaneFeatureDim = 3 + 3 * kNeighborSlots;

/// Ego (x, y, v) plus (dx, dy, dv) of the nearest vehicle ahead and behind
/// in each lane, scaled to O(1); empty slots are zero.
Vec lane_features(const LaneWorldState& s, const LaneWorldConfig& cfg);
std::vector<std::string> lane_feature_names();

struct LaneStep {
  LaneWorldState next;
  bool done = false;
  bool collision = false;
  Termination cause = Termination::running;
};

/// Kinematic update with constant-velocity traffic. Throws NumericalError
/// on a non-finite action; out-of-range components are clamped.
LaneStep laneworld_step(const LaneWorldState& s, const LaneWorldAction& a,
                        const LaneWorldConfig& cfg);

bool in_collision(const LaneWorldState& s, const LaneWorldConfig& cfg);

struct Range {
  Scalar lo = 0.0;
  Scalar hi = 0.0;
  Scalar draw(Rng& rng) const { return rng.uniform(lo, hi); }
};

/// How a side lane is populated: a platoon riding alongside the ego, or a
/// single vehicle far away.
struct SideLane {
  bool blocked = false;
  int platoon_size = 3;
  Scalar platoon_spacing = 11.0;
  Range platoon_offset{-3.0, 3.0};
  Range platoon_speed_delta{-0.5, 0.5};
  Range far_gap{45.0, 60.0};
  Range far_speed_delta{2.0, 4.0};
};

struct ScenarioSpec {
  std::string name;
  int skill = 1;
  Range ego_speed{18.0, 22.0};
  Range leader_gap{22.0, 32.0};
  Range leader_speed{8.0, 11.0};
  /// When set, leader_speed is added to the ego speed.
  bool leader_speed_relative = false;
  SideLane left;
  SideLane right;
};

class ScenarioCatalog {
 public:
  static ScenarioCatalog defaults();
  /// JSON document {"scenarios": [...]}; missing fields take defaults.
  static ScenarioCatalog load(const std::filesystem::path& path);
  static ScenarioCatalog parse(const std::string& text);
  std::string dump() const;

  const std::vector<ScenarioSpec>& scenarios() const { return scenarios_; }
  const ScenarioSpec& at(int index) const;
  /// Index of a named scenario; throws std::invalid_argument when unknown.
  int index_of(const std::string& name) const;
  /// First scenario whose unique correct skill is `skill`.
  int scenario_for_skill(int skill) const;

 private:
  std::vector<ScenarioSpec> scenarios_;
};

/// Deterministic initial state for (scenario, seed).
LaneWorldState make_scenario(const ScenarioSpec& spec, std::uint64_t seed,
                             const LaneWorldConfig& cfg);

/// Rule-based driver for one skill: lateral motion toward the skill's target
/// lane, longitudinal gap keeping (intelligent-driver model) behind the
/// nearest laterally overlapping vehicle ahead.
LaneWorldAction scripted_expert(const LaneWorldState& s, int skill, const LaneWorldConfig& cfg);

class LaneWorld final : public Environment {
 public:
  explicit LaneWorld(LaneWorldConfig cfg = {}, ScenarioCatalog catalog = ScenarioCatalog::defaults());

  int observation_dim() const override { return kLaneFeatureDim; }
  int action_dim() const override { return 2; }
  int horizon() const override { return cfg_.horizon; }
  Vec reset(const EpisodeKey& key) override;
  StepResult step(const Vec& action) override;
  Vec observation() const override { return lane_features(state_, cfg_); }
  Vec2 position() const override { return Vec2(state_.x, state_.y); }
  int timestep() const override { return state_.t; }

  void set_state(LaneWorldState s) { state_ = std::move(s); }
  const LaneWorldState& state() const { return state_; }
  const LaneWorldConfig& config() const { return cfg_; }
  const ScenarioCatalog& catalog() const { return catalog_; }

  Vec action_low() const { return Vec2(cfg_.accel_min, -cfg_.lateral_max); }
  Vec action_high() const { return Vec2(cfg_.accel_max, cfg_.lateral_max); }

 private:
  LaneWorldConfig cfg_;
  ScenarioCatalog catalog_;
  LaneWorldState state_;
  bool done_ = false;
};

}  // namespace tgail::env
