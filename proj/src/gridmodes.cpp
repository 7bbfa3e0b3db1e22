#include "tgail/gridmodes.hpp"

#include <fmt/format.h>

namespace tgail::env {

int grid_next(const GridModesConfig& cfg, int s, int a) {
  const int n = cfg.side;
  int row = s / n, col = s % n;
  switch (a) {
    case 0: row = (row + n - 1) % n; break;
    case 1: col = (col + 1) % n; break;
    case 2: row = (row + 1) % n; break;
    case 3: col = (col + n - 1) % n; break;
    default: throw std::invalid_argument(fmt::format("grid move {} out of range", a));
  }
  return row * n + col;
}

int grid_heading(const GridModesConfig& cfg, int s) { return (s / cfg.side + s % cfg.side) % 4; }

int grid_expert_action(const GridModesConfig& cfg, int s, int skill) {
  return (grid_heading(cfg, s) + skill) % 4;
}

TabularJoint::TabularJoint(int states, int actions, int skills)
    : s_(states), a_(actions), k_(skills), p_(Vec::Zero(static_cast<Index>(states) * actions * skills)) {}

Mat TabularJoint::sc_marginal() const {
  Mat m = Mat::Zero(s_, k_);
  for (int s = 0; s < s_; ++s)
    for (int a = 0; a < a_; ++a)
      for (int c = 0; c < k_; ++c) m(s, c) += (*this)(s, a, c);
  return m;
}

Mat TabularJoint::sa_marginal() const {
  Mat m = Mat::Zero(s_, a_);
  for (int s = 0; s < s_; ++s)
    for (int a = 0; a < a_; ++a)
      for (int c = 0; c < k_; ++c) m(s, a) += (*this)(s, a, c);
  return m;
}

bool TabularJoint::normalized(Scalar tol) const {
  return p_.size() > 0 && (p_.array() >= 0.0).all() && std::abs(p_.sum() - 1.0) <= tol;
}

Mat grid_expert_policy(const GridModesConfig& cfg) {
  const int na = GridModesConfig::actions();
  Mat pi(cfg.states() * cfg.skills, na);
  for (int s = 0; s < cfg.states(); ++s)
    for (int c = 0; c < cfg.skills; ++c) {
      pi.row(s * cfg.skills + c).setConstant(cfg.epsilon / (na - 1));
      pi(s * cfg.skills + c, grid_expert_action(cfg, s, c)) = 1.0 - cfg.epsilon;
    }
  return pi;
}

TabularJoint grid_expert_joint(const GridModesConfig& cfg, const Vec& start) {
  const int ns = cfg.states(), na = GridModesConfig::actions(), k = cfg.skills;
  if (start.size() != ns) throw DimensionError("grid_expert_joint: start distribution size");
  const Mat pi = grid_expert_policy(cfg);
  TabularJoint joint(ns, na, k);
  for (int c = 0; c < k; ++c) {
    Vec dist = start;
    Vec occupancy = Vec::Zero(ns);
    for (int t = 0; t < cfg.horizon; ++t) {
      occupancy += dist;
      Vec next = Vec::Zero(ns);
      for (int s = 0; s < ns; ++s)
        for (int a = 0; a < na; ++a) next(grid_next(cfg, s, a)) += dist(s) * pi(s * k + c, a);
      dist = next;
    }
    occupancy /= static_cast<Scalar>(cfg.horizon);
    for (int s = 0; s < ns; ++s)
      for (int a = 0; a < na; ++a) joint(s, a, c) = occupancy(s) * pi(s * k + c, a) / k;
  }
  return joint;
}

Mat posterior_over_skills(const TabularJoint& joint) {
  const int ns = joint.states(), na = joint.actions(), k = joint.skills();
  Mat post(ns * na, k);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) {
      Scalar z = 0.0;
      for (int c = 0; c < k; ++c) z += joint(s, a, c);
      for (int c = 0; c < k; ++c) post(s * na + a, c) = z > 0.0 ? joint(s, a, c) / z : 1.0 / k;
    }
  return post;
}

namespace {

void require_conditional(const Mat& m, Index rows, Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols)
    throw std::invalid_argument(
        fmt::format("{}: expected {}x{} conditional, got {}x{}", what, rows, cols, m.rows(), m.cols()));
  if ((m.array() < 0.0).any()) throw std::invalid_argument(fmt::format("{}: negative entry", what));
  for (Index r = 0; r < m.rows(); ++r)
    if (std::abs(m.row(r).sum() - 1.0) > 1e-9)
      throw std::invalid_argument(fmt::format("{}: row {} is not normalized", what, r));
}

}  // namespace

JointTables gridmodes_enumerate(const Mat& generator, const Mat& selector,
                                const TabularJoint& expert) {
  const int ns = expert.states(), na = expert.actions(), k = expert.skills();
  if (!expert.normalized(1e-9)) throw std::invalid_argument("gridmodes_enumerate: expert not normalized");
  require_conditional(generator, static_cast<Index>(ns) * k, na, "generator");
  require_conditional(selector, static_cast<Index>(ns) * na, k, "selector");

  JointTables out{TabularJoint(ns, na, k), TabularJoint(ns, na, k), expert};
  const Mat p_sc = expert.sc_marginal();
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a)
      for (int c = 0; c < k; ++c) out.generator(s, a, c) = p_sc(s, c) * generator(s * k + c, a);
  const Mat p_sa = out.generator.sa_marginal();
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a)
      for (int c = 0; c < k; ++c) out.selector(s, a, c) = p_sa(s, a) * selector(s * na + a, c);
  return out;
}

Vec GridModes::reset(const EpisodeKey& key) {
  if (key.seed >= static_cast<std::uint64_t>(cfg_.states()))
    throw std::invalid_argument(fmt::format("GridModes: start cell {} out of range", key.seed));
  cell_ = static_cast<int>(key.seed);
  t_ = 0;
  return observation();
}

StepResult GridModes::step(const Vec& action) {
  if (action.size() != action_dim()) throw DimensionError("GridModes::step: action size");
  if (!action.allFinite()) throw NumericalError("GridModes::step: non-finite action");
  cell_ = grid_next(cfg_, cell_, static_cast<int>(argmax_lowest(action)));
  ++t_;
  StepResult r;
  r.observation = observation();
  r.done = t_ >= cfg_.horizon;
  r.cause = r.done ? Termination::horizon : Termination::running;
  return r;
}

std::vector<LabeledTrajectory> gridmodes_demos(const GridModesConfig& cfg, int per_skill,
                                               std::uint64_t seed, GridStarts starts,
                                               const std::vector<int>& skills) {
  if (per_skill < 1) throw std::invalid_argument("gridmodes_demos: per_skill must be >= 1");
  std::vector<int> which = skills;
  if (which.empty())
    for (int c = 0; c < cfg.skills; ++c) which.push_back(c);
  const Mat pi = grid_expert_policy(cfg);
  GridModes env(cfg);
  std::vector<LabeledTrajectory> out;
  for (int c : which) {
    for (int i = 0; i < per_skill; ++i) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(i)));
      const int start = starts == GridStarts::uniform
                            ? static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.states())))
                            : c * cfg.side + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.side)));
      LabeledTrajectory traj;
      traj.label = c;
      traj.key = {c, static_cast<std::uint64_t>(start)};
      Vec obs = env.reset(traj.key);
      bool done = false;
      while (!done) {
        Transition tr;
        tr.t = env.timestep();
        tr.position = env.position();
        tr.state = obs;
        const int a = static_cast<int>(rng.categorical(pi.row(env.cell() * cfg.skills + c).transpose()));
        tr.action = one_hot(a, GridModesConfig::actions());
        const StepResult r = env.step(tr.action);
        tr.next_state = r.observation;
        tr.done = r.done;
        obs = r.observation;
        done = r.done;
        traj.steps.push_back(std::move(tr));
        if (done) traj.end = r.cause;
      }
      traj.final_position = env.position();
      out.push_back(std::move(traj));
    }
  }
  return out;
}

}  // namespace tgail::env
