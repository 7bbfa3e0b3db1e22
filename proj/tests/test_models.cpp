#include "tgail/algo.hpp"
#include "tgail/models.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace tgail;
using namespace tgail::model;

namespace {

GeneratorModel small_generator(Scalar log_std = -0.5) {
  GeneratorConfig cfg;
  cfg.obs_dim = 3;
  cfg.act_dim = 2;
  cfg.skills = 3;
  cfg.hidden = {8};
  cfg.init_log_std = log_std;
  return GeneratorModel(cfg, 1);
}

void zero_all(ad::ParamSet& p) {
  for (std::size_t i = 0; i < p.size(); ++i) p.value(i).setZero();
}

const Vec kState = (Vec(3) << 0.2, -0.4, 1.1).finished();
const Vec kLabel = env::skill_label(1, 3);

}  // namespace

TEST(PolicySample, TinySigmaReturnsMean) {
  const auto gen = small_generator(-10.0);
  Rng rng(0);
  const auto s = policy_sample(gen, kState, kLabel, rng);
  const Vec mean = gen.policy_output(gen.input(kState.transpose(), kLabel.transpose())).row(0).transpose();
  EXPECT_LT((s.action - mean).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(PolicySample, FixedSeedIsReproducible) {
  const auto gen = small_generator();
  Rng a(17), b(17);
  const auto x = policy_sample(gen, kState, kLabel, a);
  const auto y = policy_sample(gen, kState, kLabel, b);
  EXPECT_EQ(x.action, y.action);
  EXPECT_EQ(x.log_prob, y.log_prob);
}

TEST(PolicySample, SampleMeanMatchesNetworkMean) {
  const auto gen = small_generator(0.0);
  Rng rng(3);
  const int n = 100000;
  Vec acc = Vec::Zero(2);
  for (int i = 0; i < n; ++i) acc += policy_sample(gen, kState, kLabel, rng).raw;
  acc /= n;
  const Vec mean = gen.policy_output(gen.input(kState.transpose(), kLabel.transpose())).row(0).transpose();
  // sigma = 1.
  EXPECT_LT((acc - mean).cwiseAbs().maxCoeff(), 3.0 / std::sqrt(static_cast<Scalar>(n)));
}

TEST(PolicySample, LogProbMatchesPlainEvaluation) {
  const auto gen = small_generator();
  Rng rng(8);
  const auto s = policy_sample(gen, kState, kLabel, rng);
  const Vec lp = log_prob_value(gen, gen.input(kState.transpose(), kLabel.transpose()), s.raw.transpose());
  EXPECT_NEAR(lp(0), s.log_prob, 1e-12);
}

TEST(PolicySample, NonFiniteMeanThrows) {
  auto gen = small_generator();
  gen.policy.value(gen.policy_spec.param_entries() - 1)(0, 0) = std::nan("");
  Rng rng(0);
  EXPECT_THROW(policy_sample(gen, kState, kLabel, rng), NumericalError);
}

TEST(Selector, ZeroWeightsAreUniform) {
  SelectorConfig cfg;
  cfg.obs_dim = 3;
  cfg.act_dim = 2;
  SelectorModel sel(cfg, 0);
  zero_all(sel.params);
  const Vec p = selector_predict(sel, Vec::Random(sel.input_dim()));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(p(k), 1.0 / 3.0, 1e-15);
  // Ties go to the lowest index.
  EXPECT_EQ(selector_choose(sel, Vec::Random(sel.input_dim())), 0);
}

TEST(Selector, OutputsAreDistributions) {
  SelectorConfig cfg;
  cfg.obs_dim = 5;
  cfg.act_dim = 2;
  SelectorModel sel(cfg, 4);
  Rng rng(1);
  Mat x(1000, sel.input_dim());
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = 10.0 * rng.normal();
  const Mat p = sel.probs(x);
  EXPECT_TRUE((p.array() >= 0.0).all());
  for (Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
}

TEST(Selector, WindowFeaturesNewestFirst) {
  SelectorWindow w(2, 1, 1);
  w.push(Vec::Constant(1, 1.0), Vec::Constant(1, 0.0));
  Vec f = w.features();
  EXPECT_EQ(f, (Vec(4) << 1.0, 0.0, 0.0, 0.0).finished());
  w.push(Vec::Constant(1, 2.0), Vec::Constant(1, 5.0));
  f = w.features();
  EXPECT_EQ(f, (Vec(4) << 2.0, 5.0, 1.0, 0.0).finished());
  const Mat rows = selector_features({Vec::Constant(1, 1.0), Vec::Constant(1, 2.0)},
                                     {Vec::Constant(1, 5.0), Vec::Constant(1, 6.0)}, 2, Vec::Zero(1));
  EXPECT_EQ(rows.row(1).transpose(), f);
}

TEST(Selector, LearnsSeparableGridModesDemos) {
  env::GridModesConfig grid;
  grid.epsilon = 0.0;
  const auto task = algo::gridmodes_task(grid);
  const auto demos = env::gridmodes_demos(grid, 20, 5, env::GridStarts::skill_rows);
  algo::TripleGailConfig cfg;
  cfg.classifier_epochs = 300;
  const auto sel = algo::train_classifier(task, demos, cfg);
  EXPECT_GE(algo::heldout_selector_accuracy(sel, demos, 1, task.zero_action), 0.99);
}

TEST(Discriminator, ZeroWeightsScoreHalf) {
  DiscriminatorConfig cfg;
  cfg.obs_dim = 3;
  cfg.act_dim = 2;
  cfg.skills = 3;
  DiscriminatorModel disc(cfg, 0);
  zero_all(disc.params);
  EXPECT_EQ(discriminator_score(disc, kState, Vec::Zero(2), kLabel), 0.5);
  EXPECT_NEAR(surrogate_reward(disc, kState, Vec::Zero(2), kLabel), 0.693147, 1e-6);
}

TEST(Discriminator, ClampBounds) {
  EXPECT_EQ(clamped_sigmoid(-100.0), 1e-6);
  EXPECT_EQ(clamped_sigmoid(100.0), 1.0 - 1e-6);
  EXPECT_NEAR(-std::log(clamped_sigmoid(100.0)), 1e-6, 1e-12);
  EXPECT_NEAR(-std::log(clamped_sigmoid(-100.0)), 13.815511, 1e-6);
}

TEST(Discriminator, RewardsStayFinite) {
  DiscriminatorConfig cfg;
  cfg.obs_dim = 3;
  cfg.act_dim = 2;
  cfg.skills = 3;
  DiscriminatorModel disc(cfg, 2);
  disc.params.value(disc.params.size() - 1)(0, 0) = 1e6;
  const Vec r = surrogate_rewards(disc, Mat::Random(20, 3), Mat::Random(20, 2), Mat::Zero(20, 3));
  EXPECT_TRUE(r.allFinite());
  EXPECT_TRUE((r.array() > 0.0).all());
}

TEST(Entropy, ClosedFormAtUnitSigma) {
  const auto gen = small_generator(0.0);
  EXPECT_NEAR(policy_entropy(gen), 2.837877, 1e-6);
}

TEST(Entropy, SampledMatchesAnalytic) {
  const auto gen = small_generator(-0.3);
  Rng rng(21);
  const Scalar mc = sampled_entropy(gen, kState, kLabel, 100000, rng);
  const Scalar exact = policy_entropy(gen);
  EXPECT_LT(std::abs(mc - exact), 0.01 * std::abs(exact));
}

TEST(Entropy, IncreasesWithLogStd) {
  Scalar prev = -1e9;
  for (Scalar ls : {-2.0, -1.0, -0.5, 0.0, 0.7}) {
    const Scalar h = policy_entropy(small_generator(ls));
    EXPECT_GT(h, prev);
    prev = h;
  }
}

TEST(Persistence, ModelsRoundTripThroughCheckpoint) {
  const auto gen = small_generator();
  SelectorConfig sc;
  sc.obs_dim = 3;
  sc.act_dim = 2;
  sc.window = 2;
  const SelectorModel sel(sc, 5);
  DiscriminatorConfig dc;
  dc.obs_dim = 3;
  dc.act_dim = 2;
  dc.skills = 3;
  const DiscriminatorModel disc(dc, 6);
  Checkpoint ck;
  store(ck, gen);
  store(ck, sel);
  store(ck, disc);
  const auto back = deserialize_checkpoint(serialize_checkpoint(ck));
  const auto g2 = load_generator(back);
  const auto s2 = load_selector(back);
  const auto d2 = load_discriminator(back);
  EXPECT_TRUE(g2.policy == gen.policy);
  EXPECT_TRUE(g2.value_params == gen.value_params);
  EXPECT_EQ(g2.config().skills, 3);
  EXPECT_TRUE(s2.params == sel.params);
  EXPECT_EQ(s2.config().window, 2);
  EXPECT_TRUE(d2.params == disc.params);
  const Mat in = gen.input(Mat::Random(4, 3), Mat::Identity(4, 3));
  EXPECT_EQ(g2.policy_output(in), gen.policy_output(in));
}
