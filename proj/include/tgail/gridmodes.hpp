#pragma once

// Enumerable multi-skill world: a side x side torus with four moves. Every
// cell carries a heading h(s) = (row + col) mod 4 and skill c prefers the
// move (h(s) + c) mod 4, so each skill sweeps the torus along its own
// rotated heading field. Small enough that all joints over (s, a, c) are
// exact tables.

#include "tgail/trajectory.hpp"

#include <vector>

namespace tgail::env {

struct GridModesConfig {
  int side = 4;
  int skills = 3;
  int horizon = 8;
  /// Probability mass the expert spreads over non-preferred moves.
  Scalar epsilon = 0.2;

  int states() const { return side * side; }
  static constexpr int actions() { return 4; }
};

enum class GridMove : int { north = 0, east = 1, south = 2, west = 3 };

int grid_next(const GridModesConfig& cfg, int s, int a);
int grid_heading(const GridModesConfig& cfg, int s);
int grid_expert_action(const GridModesConfig& cfg, int s, int skill);

/// p(s, a, c) over an enumerable space, stored flat at (s * A + a) * K + c.
class TabularJoint {
 public:
  TabularJoint() = default;
  TabularJoint(int states, int actions, int skills);

  int states() const { return s_; }
  int actions() const { return a_; }
  int skills() const { return k_; }
  Index cells() const { return p_.size(); }
  Index cell(int s, int a, int c) const { return (static_cast<Index>(s) * a_ + a) * k_ + c; }

  Scalar& operator()(int s, int a, int c) { return p_(cell(s, a, c)); }
  Scalar operator()(int s, int a, int c) const { return p_(cell(s, a, c)); }
  Vec& data() { return p_; }
  const Vec& data() const { return p_; }

  /// S x K table of p(s, c).
  Mat sc_marginal() const;
  /// S x A table of p(s, a).
  Mat sa_marginal() const;
  bool same_shape(const TabularJoint& o) const {
    return s_ == o.s_ && a_ == o.a_ && k_ == o.k_;
  }
  /// Entries non-negative and summing to 1 within tol.
  bool normalized(Scalar tol = 1e-12) const;

 private:
  int s_ = 0, a_ = 0, k_ = 0;
  Vec p_;
};

/// Row s * K + c holds pi_E(. | s, c).
Mat grid_expert_policy(const GridModesConfig& cfg);

/// Expert joint with p(c) = 1/K and p(s | c) the average state distribution
/// over the horizon from `start` (length S).
TabularJoint grid_expert_joint(const GridModesConfig& cfg, const Vec& start);

/// Row s * A + a holds p(c | s, a) under `joint` (uniform where p(s, a) = 0).
Mat posterior_over_skills(const TabularJoint& joint);

struct JointTables {
  TabularJoint generator;
  TabularJoint selector;
  TabularJoint expert;
};

/// Joint tables induced by a generator conditional (rows s * K + c over a)
/// and a selector conditional (rows s * A + a over c):
///   p_gen(s, a, c) = p_E(s, c) pi(a | s, c)
///   p_sel(s, a, c) = p_gen(s, a) C(c | s, a)
/// Throws std::invalid_argument if any input is not normalized.
JointTables gridmodes_enumerate(const Mat& generator, const Mat& selector,
                                const TabularJoint& expert);

class GridModes final : public Environment {
 public:
  explicit GridModes(GridModesConfig cfg = {}) : cfg_(cfg) {}

  int observation_dim() const override { return cfg_.states(); }
  int action_dim() const override { return GridModesConfig::actions(); }
  int horizon() const override { return cfg_.horizon; }
  /// key.seed is the start cell; key.scenario the skill label.
  Vec reset(const EpisodeKey& key) override;
  /// Moves along the argmax entry of `action`.
  StepResult step(const Vec& action) override;
  Vec observation() const override { return one_hot(cell_, cfg_.states()); }
  Vec2 position() const override {
    return Vec2(static_cast<Scalar>(cell_ / cfg_.side), static_cast<Scalar>(cell_ % cfg_.side));
  }
  int timestep() const override { return t_; }
  int cell() const { return cell_; }
  const GridModesConfig& config() const { return cfg_; }

 private:
  GridModesConfig cfg_;
  int cell_ = 0;
  int t_ = 0;
};

enum class GridStarts {
  uniform,
  /// Skill c starts in row c, so the first state alone identifies the skill.
  skill_rows,
};

/// Expert demonstrations; moves are sampled with cfg.epsilon noise.
std::vector<LabeledTrajectory> gridmodes_demos(const GridModesConfig& cfg, int per_skill,
                                               std::uint64_t seed, GridStarts starts,
                                               const std::vector<int>& skills = {});

}  // namespace tgail::env
