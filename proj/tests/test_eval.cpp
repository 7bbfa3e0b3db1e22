#include "tgail/demos.hpp"
#include "tgail/eval.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace tgail;
using namespace tgail::eval;

namespace {

EpisodeRecord record(int label, env::Termination end, std::vector<Scalar> xs) {
  EpisodeRecord r;
  r.true_label = label;
  r.end = end;
  for (Scalar x : xs) r.positions.emplace_back(x, 0.0);
  r.used_labels.assign(xs.empty() ? 0 : xs.size() - 1, label);
  return r;
}

model::GeneratorModel lane_generator(std::uint64_t seed) {
  const auto task = algo::laneworld_task();
  model::GeneratorConfig cfg;
  cfg.obs_dim = task.obs_dim;
  cfg.act_dim = task.act_dim;
  cfg.skills = 3;
  cfg.hidden = {16};
  cfg.action_low = task.action_low;
  cfg.action_high = task.action_high;
  return model::GeneratorModel(cfg, seed);
}

// Categorical generator plus a selector that always answers `label`.
struct GridPlayers {
  algo::TaskSpec task;
  model::GeneratorModel gen;
  model::SelectorModel sel;
};

GridPlayers grid_players(int label) {
  env::GridModesConfig g;
  GridPlayers p{algo::gridmodes_task(g), {}, {}};
  model::GeneratorConfig gc;
  gc.obs_dim = p.task.obs_dim;
  gc.act_dim = p.task.act_dim;
  gc.skills = 3;
  gc.hidden = {8};
  gc.head = model::PolicyHead::categorical;
  p.gen = model::GeneratorModel(gc, 3);
  model::SelectorConfig sc;
  sc.obs_dim = p.task.obs_dim;
  sc.act_dim = p.task.act_dim;
  sc.hidden = {};
  p.sel = model::SelectorModel(sc, 0);
  p.sel.params.value(0).setZero();
  p.sel.params.value(1).setZero();
  p.sel.params.value(1)(0, label) = 10.0;
  return p;
}

}  // namespace

TEST(Kl, IdenticalHistogramsGiveZero) {
  Rng rng(1);
  std::vector<EpisodeRecord> recs;
  for (int i = 0; i < 20; ++i) {
    EpisodeRecord r;
    for (int t = 0; t < 30; ++t) r.positions.emplace_back(rng.uniform(0, 200), rng.uniform(-6, 6));
    recs.push_back(r);
  }
  const auto kl = position_kl(recs, recs, 1);
  ASSERT_TRUE(kl[0].has_value());
  EXPECT_LT(*kl[0], 1e-9);
}

TEST(Kl, TwoBinExample) {
  Mat p(1, 2), q(1, 2);
  p << 1.0, 0.0;
  q << 0.5, 0.5;
  EXPECT_NEAR(kl_divergence(p, q), std::log(2.0), 1e-15);
  EXPECT_NEAR(kl_divergence(p, q), 0.693147, 1e-6);
}

TEST(Kl, NonNegativeOnRandomPairs) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Mat p(3, 4), q(3, 4);
    for (Index i = 0; i < p.size(); ++i) {
      p.data()[i] = rng.uniform() + 1e-6;
      q.data()[i] = rng.uniform() + 1e-6;
    }
    p /= p.sum();
    q /= q.sum();
    EXPECT_GE(kl_divergence(p, q), 0.0);
  }
}

TEST(Kl, ShapeMismatchThrows) {
  EXPECT_THROW(kl_divergence(Mat::Ones(2, 2), Mat::Ones(2, 3)), DimensionError);
}

TEST(Kl, HistogramClampsAndSmooths) {
  EpisodeRecord r;
  r.positions = {Vec2(-50.0, 100.0), Vec2(500.0, -100.0)};
  const HistogramGrid g;
  const Mat h = position_histogram({&r}, g);
  EXPECT_NEAR(h.sum(), 1.0, 1e-12);
  EXPECT_TRUE((h.array() > 0.0).all());
  EXPECT_GT(h(0, g.ny - 1), 0.4);
  EXPECT_GT(h(g.nx - 1, 0), 0.4);
}

TEST(Kl, MissingSkillIsReported) {
  std::vector<EpisodeRecord> demos = {record(0, env::Termination::road_end, {0, 10}),
                                      record(1, env::Termination::road_end, {0, 10})};
  std::vector<EpisodeRecord> rolls = {record(0, env::Termination::road_end, {0, 10})};
  const auto kl = position_kl(demos, rolls, 3);
  EXPECT_TRUE(kl[0].has_value());
  EXPECT_FALSE(kl[1].has_value());
  EXPECT_FALSE(kl[2].has_value());
}

TEST(Success, AllCollideIsZeroAllTraverseIsOne) {
  std::vector<EpisodeRecord> bad(5, record(0, env::Termination::collision, {0, 1}));
  std::vector<EpisodeRecord> good(5, record(0, env::Termination::road_end, {0, 200}));
  EXPECT_EQ(success_rate(bad), 0.0);
  EXPECT_EQ(success_rate(good), 1.0);
  auto mixed = bad;
  mixed.insert(mixed.end(), good.begin(), good.begin() + 5);
  EXPECT_EQ(success_rate(mixed), 0.5);
  EXPECT_THROW(success_rate({}), std::invalid_argument);
}

TEST(Distance, ImmediateCollisionIsZero) {
  EXPECT_EQ(mean_distance({record(0, env::Termination::collision, {12.0})}), 0.0);
}

TEST(Distance, ConstantSpeedOverHorizon) {
  // Empty road, v = 10, dt = 0.1, 130 steps.
  env::LaneWorldConfig cfg;
  env::LaneWorldState s;
  s.y = cfg.lane_center(1);
  s.v = 10.0;
  EpisodeRecord r;
  r.positions.emplace_back(s.x, s.y);
  for (int t = 0; t < cfg.horizon; ++t) {
    s = env::laneworld_step(s, {0.0, 0.0}, cfg).next;
    r.positions.emplace_back(s.x, s.y);
  }
  EXPECT_NEAR(mean_distance({r}), 130.0, 1e-9);
}

TEST(Accuracy, TrueLabelsScoreOne) {
  std::vector<EpisodeRecord> recs = {record(0, env::Termination::road_end, {0, 1, 2}),
                                     record(2, env::Termination::road_end, {0, 1})};
  EXPECT_EQ(selector_accuracy(recs), 1.0);
}

TEST(Accuracy, RandomLabelsScoreAboutOneThird) {
  // 10^4 steps; 0.02 is about four binomial standard errors.
  Rng rng(4);
  std::vector<EpisodeRecord> recs;
  for (int i = 0; i < 500; ++i) {
    auto r = record(static_cast<int>(rng.below(3)), env::Termination::road_end, std::vector<Scalar>(21, 0.0));
    for (int& c : r.used_labels) c = static_cast<int>(rng.below(3));
    recs.push_back(r);
  }
  EXPECT_NEAR(selector_accuracy(recs), 1.0 / 3.0, 0.02);
}

TEST(Accuracy, ConstantSelectorOnCycledScenarios) {
  // Scenarios cycle 0, 1, 2 and the selector always answers 2.
  auto p = grid_players(2);
  EvalOptions opts;
  opts.episodes = 30;
  const auto recs = rollout_eval(p.task, p.gen, &p.sel, opts);
  EXPECT_NEAR(selector_accuracy(recs), 1.0 / 3.0, 1e-15);
  for (const auto& r : recs)
    for (int c : r.used_labels) EXPECT_EQ(c, 2);
}

TEST(Harness, PerfectSelectorMatchesTrueLabels) {
  // On scenario 2 only, the always-2 selector is perfect.
  auto p = grid_players(2);
  auto task = p.task;
  task.scenarios = 1;
  task.scenario_skill = [](int) { return 2; };
  const auto inner = p.task.eval_key;
  task.eval_key = [inner](int, std::uint64_t seed) { return inner(2, seed); };
  EvalOptions opts;
  opts.episodes = 12;
  opts.stochastic = true;
  const auto a = rollout_eval(task, p.gen, &p.sel, opts);
  opts.labels = LabelMode::true_labels;
  const auto b = rollout_eval(task, p.gen, nullptr, opts);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].positions, b[i].positions);
  EXPECT_EQ(selector_accuracy(a), 1.0);
}

TEST(Harness, FixedSeedGivesIdenticalReport) {
  const auto task = algo::laneworld_task();
  const auto gen = lane_generator(1);
  EvalOptions opts;
  opts.episodes = 9;
  opts.labels = LabelMode::true_labels;
  opts.stochastic = true;
  const auto demos = records_from(env::generate_demos(3, 1).trajectories);
  const auto a = evaluate("x", task, gen, nullptr, demos, {0, 1}, opts);
  const auto b = evaluate("x", task, gen, nullptr, demos, {0, 1}, opts);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_EQ(a.episodes, 18);
  opts.workers = 3;
  EXPECT_EQ(evaluate("x", task, gen, nullptr, demos, {0, 1}, opts).to_json(), a.to_json());
}

TEST(Harness, LeavesModelsUntouched) {
  const auto task = algo::laneworld_task();
  auto gen = lane_generator(2);
  const auto before = gen.policy.flatten();
  const auto value_before = gen.value_params.flatten();
  EvalOptions opts;
  opts.episodes = 6;
  opts.labels = LabelMode::true_labels;
  opts.stochastic = true;
  rollout_eval(task, gen, nullptr, opts);
  EXPECT_EQ(gen.policy.flatten(), before);
  EXPECT_EQ(gen.value_params.flatten(), value_before);
}

TEST(Harness, DistanceWithinRoadLength) {
  const auto task = algo::laneworld_task();
  const auto gen = lane_generator(3);
  EvalOptions opts;
  opts.episodes = 9;
  opts.labels = LabelMode::true_labels;
  for (const auto& r : rollout_eval(task, gen, nullptr, opts)) {
    EXPECT_LE(r.distance(), env::LaneWorldConfig{}.road_length + 1e-9);
    EXPECT_GE(r.distance(), 0.0);
  }
}

TEST(Harness, ExpertDemosScoreHigh) {
  const auto set = env::generate_demos(40, 7);
  const auto recs = records_from(set.trajectories);
  EXPECT_GE(success_rate(recs), 0.95);
  EXPECT_EQ(selector_accuracy(recs), 1.0);
  for (const auto& r : recs) EXPECT_LE(r.distance(), env::LaneWorldConfig{}.road_length + 1e-9);
}

TEST(Harness, ModeChecks) {
  const auto task = algo::laneworld_task();
  const auto gen = lane_generator(4);
  EvalOptions opts;
  EXPECT_THROW(rollout_eval(task, gen, nullptr, opts), std::invalid_argument);
  opts.episodes = 0;
  opts.labels = LabelMode::true_labels;
  EXPECT_THROW(rollout_eval(task, gen, nullptr, opts), std::invalid_argument);
}

TEST(Report, CsvHasOneFieldPerHeaderColumn) {
  EvalReport rep;
  rep.algorithm = "bc";
  rep.position_kl = {0.1, std::nullopt, 0.3};
  const auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  EXPECT_EQ(count(rep.to_csv()), count(EvalReport::csv_header()));
}

TEST(Report, SvgHasOnePanelPerSkill) {
  const auto recs = records_from(env::generate_demos(2, 1).trajectories);
  const std::string svg = trajectory_svg(recs, 3, {}, "demo");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  std::size_t panels = 0;
  for (auto at = svg.find("#f4f4f4"); at != std::string::npos; at = svg.find("#f4f4f4", at + 1)) ++panels;
  EXPECT_EQ(panels, 3u);
}
