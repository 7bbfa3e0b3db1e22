#include "tgail/laneworld.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

namespace tgail::env {

std::string_view skill_name(int skill) {
  switch (skill) {
    case 0: return "left";
    case 1: return "keep";
    case 2: return "right";
    default: return "skill";
  }
}

Vec skill_label(int skill, int k) {
  if (skill < 0 || skill >= k)
    throw std::invalid_argument(fmt::format("skill {} outside [0, {})", skill, k));
  return one_hot(skill, k);
}

int label_index(const Eigen::Ref<const Vec>& label) {
  int hot = -1;
  for (Index i = 0; i < label.size(); ++i) {
    if (label(i) == 1.0) {
      if (hot >= 0) throw std::invalid_argument("label has more than one hot entry");
      hot = static_cast<int>(i);
    } else if (label(i) != 0.0) {
      throw std::invalid_argument("label entries must be 0 or 1");
    }
  }
  if (hot < 0) throw std::invalid_argument("label has no hot entry");
  return hot;
}

std::string_view termination_name(Termination t) {
  switch (t) {
    case Termination::running: return "running";
    case Termination::collision: return "collision";
    case Termination::offroad: return "offroad";
    case Termination::road_end: return "road_end";
    case Termination::horizon: return "horizon";
  }
  return "?";
}

bool LabeledTrajectory::well_formed(int horizon) const {
  if (length() > horizon) return false;
  for (std::size_t i = 1; i < steps.size(); ++i)
    if (steps[i].t <= steps[i - 1].t) return false;
  return true;
}

int LaneWorldConfig::lane_of(Scalar y) const {
  int best = 0;
  for (int l = 1; l < lanes; ++l)
    if (std::abs(lane_center(l) - y) < std::abs(lane_center(best) - y)) best = l;
  return best;
}

// ---------------------------------------------------------------- features

Vec lane_features(const LaneWorldState& s, const LaneWorldConfig& cfg) {
  Vec f = Vec::Zero(kLaneFeatureDim);
  f(0) = s.x / 100.0 - 1.0;
  f(1) = s.y / cfg.lane_width;
  f(2) = (s.v - 20.0) / 5.0;
  for (int lane = 0; lane < std::min(cfg.lanes, 3); ++lane) {
    for (int side = 0; side < 2; ++side) {
      const Vehicle* best = nullptr;
      Scalar best_dx = 0.0;
      for (const auto& o : s.others) {
        if (cfg.lane_of(o.y) != lane) continue;
        const Scalar dx = o.x - s.x;
        const bool ahead = dx > 0.0;
        if ((side == 0) != ahead || std::abs(dx) > cfg.sensor_range) continue;
        if (best == nullptr || std::abs(dx) < std::abs(best_dx)) {
          best = &o;
          best_dx = dx;
        }
      }
      if (best == nullptr) continue;
      const Index k = 3 + 3 * (2 * lane + side);
      f(k) = best_dx / 30.0;
      f(k + 1) = (best->y - s.y) / cfg.lane_width;
      f(k + 2) = (best->v - s.v) / 10.0;
    }
  }
  return f;
}

std::vector<std::string> lane_feature_names() {
  std::vector<std::string> names = {"ego_x", "ego_y", "ego_v"};
  for (int lane = 0; lane < 3; ++lane)
    for (const char* side : {"ahead", "behind"})
      for (const char* q : {"dx", "dy", "dv"})
        names.push_back(fmt::format("lane{}_{}_{}", lane, side, q));
  return names;
}

// ---------------------------------------------------------------- dynamics

bool in_collision(const LaneWorldState& s, const LaneWorldConfig& cfg) {
  for (const auto& o : s.others)
    if (std::abs(o.x - s.x) < cfg.vehicle_length && std::abs(o.y - s.y) < cfg.vehicle_width)
      return true;
  return false;
}

LaneStep laneworld_step(const LaneWorldState& s, const LaneWorldAction& a,
                        const LaneWorldConfig& cfg) {
  if (!std::isfinite(a.accel) || !std::isfinite(a.lateral))
    throw NumericalError("laneworld_step: non-finite action");
  const Scalar acc = std::clamp(a.accel, cfg.accel_min, cfg.accel_max);
  const Scalar lat = std::clamp(a.lateral, -cfg.lateral_max, cfg.lateral_max);
  const Scalar dt = cfg.dt;

  LaneStep out;
  LaneWorldState& n = out.next;
  n = s;
  if (s.v + acc * dt >= 0.0) {
    n.x = s.x + s.v * dt + 0.5 * acc * dt * dt;
    n.v = s.v + acc * dt;
  } else {
    // Stops within the step; no reversing.
    n.x = s.x + s.v * s.v / (-2.0 * acc);
    n.v = 0.0;
  }
  n.y = s.y + lat * dt;
  n.lane = cfg.lane_of(n.y);
  n.t = s.t + 1;
  for (auto& o : n.others) o.x += o.v * dt;

  if (in_collision(n, cfg)) {
    out.collision = true;
    out.cause = Termination::collision;
  } else if (std::abs(n.y) > cfg.road_half_width() - cfg.vehicle_width / 2.0) {
    out.collision = true;
    out.cause = Termination::offroad;
  } else if (n.x >= cfg.road_length) {
    // The ego leaves the segment at its end.
    n.x = cfg.road_length;
    out.cause = Termination::road_end;
  } else if (n.t >= cfg.horizon) {
    out.cause = Termination::horizon;
  }
  out.done = out.cause != Termination::running;
  return out;
}

// ---------------------------------------------------------------- scenarios

namespace {

using nlohmann::json;

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from(const json& j, const char* key, Range fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2)
    throw std::invalid_argument(fmt::format("scenario field {} must be [lo, hi]", key));
  Range r{v[0].get<Scalar>(), v[1].get<Scalar>()};
  if (r.lo > r.hi) throw std::invalid_argument(fmt::format("scenario field {}: lo > hi", key));
  return r;
}

json side_json(const SideLane& s) {
  return {{"blocked", s.blocked},
          {"platoon_size", s.platoon_size},
          {"platoon_spacing", s.platoon_spacing},
          {"platoon_offset", range_json(s.platoon_offset)},
          {"platoon_speed_delta", range_json(s.platoon_speed_delta)},
          {"far_gap", range_json(s.far_gap)},
          {"far_speed_delta", range_json(s.far_speed_delta)}};
}

SideLane side_from(const json& j) {
  SideLane s;
  s.blocked = j.value("blocked", s.blocked);
  s.platoon_size = j.value("platoon_size", s.platoon_size);
  s.platoon_spacing = j.value("platoon_spacing", s.platoon_spacing);
  s.platoon_offset = range_from(j, "platoon_offset", s.platoon_offset);
  s.platoon_speed_delta = range_from(j, "platoon_speed_delta", s.platoon_speed_delta);
  s.far_gap = range_from(j, "far_gap", s.far_gap);
  s.far_speed_delta = range_from(j, "far_speed_delta", s.far_speed_delta);
  return s;
}

}  // namespace

ScenarioCatalog ScenarioCatalog::defaults() {
  ScenarioCatalog c;
  SideLane blocked;
  blocked.blocked = true;
  SideLane free;

  ScenarioSpec left;
  left.name = "blocked-ahead-left-free";
  left.skill = static_cast<int>(Skill::left);
  left.left = free;
  left.right = blocked;

  ScenarioSpec keep;
  keep.name = "free-ahead-sides-blocked";
  keep.skill = static_cast<int>(Skill::keep);
  keep.leader_gap = {30.0, 50.0};
  keep.leader_speed = {1.0, 3.0};
  keep.leader_speed_relative = true;
  keep.left = blocked;
  keep.right = blocked;

  ScenarioSpec right = left;
  right.name = "blocked-ahead-right-free";
  right.skill = static_cast<int>(Skill::right);
  right.left = blocked;
  right.right = free;

  c.scenarios_ = {left, keep, right};
  return c;
}

ScenarioCatalog ScenarioCatalog::parse(const std::string& text) {
  const json doc = json::parse(text);
  ScenarioCatalog c;
  for (const auto& j : doc.at("scenarios")) {
    ScenarioSpec s;
    s.name = j.at("name").get<std::string>();
    s.skill = j.at("skill").get<int>();
    s.ego_speed = range_from(j, "ego_speed", s.ego_speed);
    s.leader_gap = range_from(j, "leader_gap", s.leader_gap);
    s.leader_speed = range_from(j, "leader_speed", s.leader_speed);
    s.leader_speed_relative = j.value("leader_speed_relative", s.leader_speed_relative);
    if (j.contains("left")) s.left = side_from(j.at("left"));
    if (j.contains("right")) s.right = side_from(j.at("right"));
    c.scenarios_.push_back(std::move(s));
  }
  if (c.scenarios_.empty()) throw std::invalid_argument("scenario catalog is empty");
  return c;
}

ScenarioCatalog ScenarioCatalog::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open scenario catalog " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string ScenarioCatalog::dump() const {
  json arr = json::array();
  for (const auto& s : scenarios_) {
    arr.push_back({{"name", s.name},
                   {"skill", s.skill},
                   {"ego_speed", range_json(s.ego_speed)},
                   {"leader_gap", range_json(s.leader_gap)},
                   {"leader_speed", range_json(s.leader_speed)},
                   {"leader_speed_relative", s.leader_speed_relative},
                   {"left", side_json(s.left)},
                   {"right", side_json(s.right)}});
  }
  return json{{"scenarios", arr}}.dump(2);
}

const ScenarioSpec& ScenarioCatalog::at(int index) const {
  if (index < 0 || index >= static_cast<int>(scenarios_.size()))
    throw std::invalid_argument(fmt::format("unknown scenario index {}", index));
  return scenarios_[static_cast<std::size_t>(index)];
}

int ScenarioCatalog::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < scenarios_.size(); ++i)
    if (scenarios_[i].name == name) return static_cast<int>(i);
  throw std::invalid_argument("unknown scenario: " + name);
}

int ScenarioCatalog::scenario_for_skill(int skill) const {
  for (std::size_t i = 0; i < scenarios_.size(); ++i)
    if (scenarios_[i].skill == skill) return static_cast<int>(i);
  throw std::invalid_argument(fmt::format("no scenario for skill {}", skill));
}

LaneWorldState make_scenario(const ScenarioSpec& spec, std::uint64_t seed,
                             const LaneWorldConfig& cfg) {
  Rng rng(derive_seed(seed, 0x5ce7a10ULL));
  LaneWorldState s;
  s.x = 0.0;
  s.lane = cfg.lanes / 2;
  s.y = cfg.lane_center(s.lane);
  s.v = spec.ego_speed.draw(rng);

  const Scalar gap = spec.leader_gap.draw(rng);
  const Scalar lead_v = spec.leader_speed.draw(rng) + (spec.leader_speed_relative ? s.v : 0.0);
  s.others.push_back({s.x + gap, s.y, std::max(lead_v, 0.0)});

  auto fill = [&](const SideLane& side, int lane) {
    if (lane < 0 || lane >= cfg.lanes) return;
    const Scalar y = cfg.lane_center(lane);
    if (side.blocked) {
      const Scalar offset = side.platoon_offset.draw(rng);
      const Scalar v = s.v + side.platoon_speed_delta.draw(rng);
      for (int k = 0; k < side.platoon_size; ++k) {
        const Scalar dx = offset + (k - (side.platoon_size - 1) / 2.0) * side.platoon_spacing;
        s.others.push_back({s.x + dx, y, v});
      }
    } else {
      const Scalar dx = side.far_gap.draw(rng);
      const Scalar v = s.v + side.far_speed_delta.draw(rng);
      s.others.push_back({s.x + dx, y, v});
    }
  };
  fill(spec.left, s.lane - 1);
  fill(spec.right, s.lane + 1);
  return s;
}

// ---------------------------------------------------------------- expert

namespace {

constexpr Scalar kCruiseSpeed = 22.0;
constexpr Scalar kIdmAccel = 2.0;
constexpr Scalar kIdmBrake = 3.0;
constexpr Scalar kIdmMinGap = 2.0;
constexpr Scalar kIdmHeadway = 1.0;
constexpr Scalar kLateralGain = 1.2;
constexpr Scalar kOverlapMargin = 0.4;

}  // namespace

LaneWorldAction scripted_expert(const LaneWorldState& s, int skill, const LaneWorldConfig& cfg) {
  // Scenarios start the ego in the middle lane, so the change targets are
  // the lanes on either side of it.
  const int middle = cfg.lanes / 2;
  Scalar target_y;
  switch (skill) {
    case static_cast<int>(Skill::left): target_y = cfg.lane_center(middle - 1); break;
    case static_cast<int>(Skill::right): target_y = cfg.lane_center(middle + 1); break;
    default: target_y = cfg.lane_center(cfg.lane_of(s.y)); break;
  }
  LaneWorldAction a;
  a.lateral = std::clamp(kLateralGain * (target_y - s.y), -cfg.lateral_max, cfg.lateral_max);

  const Vehicle* leader = nullptr;
  for (const auto& o : s.others) {
    const Scalar dx = o.x - s.x;
    if (dx <= 0.0 || std::abs(o.y - s.y) >= cfg.vehicle_width + kOverlapMargin) continue;
    if (leader == nullptr || dx < leader->x - s.x) leader = &o;
  }
  Scalar acc = kIdmAccel * (1.0 - std::pow(s.v / kCruiseSpeed, 4));
  if (leader != nullptr) {
    const Scalar gap = std::max(leader->x - s.x - cfg.vehicle_length, 0.1);
    const Scalar desired = kIdmMinGap + s.v * kIdmHeadway +
                           s.v * (s.v - leader->v) / (2.0 * std::sqrt(kIdmAccel * kIdmBrake));
    acc -= kIdmAccel * std::pow(std::max(desired, 0.0) / gap, 2);
  }
  a.accel = std::clamp(acc, cfg.accel_min, cfg.accel_max);
  return a;
}

// ---------------------------------------------------------------- env

LaneWorld::LaneWorld(LaneWorldConfig cfg, ScenarioCatalog catalog)
    : cfg_(cfg), catalog_(std::move(catalog)) {
  state_ = make_scenario(catalog_.at(0), 0, cfg_);
}

Vec LaneWorld::reset(const EpisodeKey& key) {
  state_ = make_scenario(catalog_.at(key.scenario), key.seed, cfg_);
  done_ = false;
  return observation();
}

StepResult LaneWorld::step(const Vec& action) {
  if (done_) throw std::logic_error("LaneWorld::step after episode end");
  if (action.size() != 2) throw DimensionError("LaneWorld::step: action must have 2 entries");
  const LaneStep r = laneworld_step(state_, LaneWorldAction::from_vec(action), cfg_);
  state_ = r.next;
  done_ = r.done;
  return {observation(), r.done, r.collision, r.cause};
}

}  // namespace tgail::env
