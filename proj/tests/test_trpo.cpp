#include "tgail/trpo.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

using namespace tgail;
using namespace tgail::rl;

namespace {

GeneratorModel make_gen(std::uint64_t seed, Scalar log_std = -0.5) {
  model::GeneratorConfig cfg;
  cfg.obs_dim = 3;
  cfg.act_dim = 2;
  cfg.hidden = {16, 16};
  cfg.init_log_std = log_std;
  return GeneratorModel(cfg, seed);
}

// Actions sampled from the policy itself, arbitrary rewards.
RolloutBatch make_batch(const GeneratorModel& gen, Index n, std::uint64_t seed) {
  Rng rng(seed);
  RolloutBatch b;
  Mat states(n, 3);
  for (Index i = 0; i < states.size(); ++i) states.data()[i] = rng.normal();
  b.inputs = gen.input(states, Mat(n, 0));
  const Mat mean = gen.policy_output(b.inputs);
  const RowVec sd = gen.log_std().array().exp();
  b.actions.resize(n, 2);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < 2; ++j) b.actions(i, j) = mean(i, j) + sd(j) * rng.normal();
  b.log_probs = model::log_prob_value(gen, b.inputs, b.actions);
  b.rewards.resize(n);
  for (Index i = 0; i < n; ++i) b.rewards(i) = rng.normal();
  b.values = Vec::Zero(n);
  b.episodes.push_back({0, n, true, 0.0});
  return b;
}

// Direct recursion A_t = delta_t + gamma lambda A_{t+1}, written independently.
Scalar gae_recursive(const RolloutBatch& b, const EpisodeSpan& e, Index t, Scalar gamma, Scalar lambda) {
  if (t >= e.end) return 0.0;
  const Scalar next_v = t + 1 < e.end ? b.values(t + 1) : (e.terminal ? 0.0 : e.bootstrap);
  const Scalar delta = b.rewards(t) + gamma * next_v - b.values(t);
  return delta + gamma * lambda * gae_recursive(b, e, t + 1, gamma, lambda);
}

}  // namespace

TEST(Gae, UndiscountedZeroValuesIsRewardToGo) {
  RolloutBatch b;
  b.inputs = Mat::Zero(4, 1);
  b.actions = Mat::Zero(4, 1);
  b.log_probs = Vec::Zero(4);
  b.rewards = (Vec(4) << 1.0, 2.0, 3.0, 4.0).finished();
  b.values = Vec::Zero(4);
  b.episodes = {{0, 4, true, 0.0}};
  const auto g = compute_gae(b, 1.0, 1.0);
  EXPECT_EQ(g.raw_advantages, (Vec(4) << 10.0, 9.0, 7.0, 4.0).finished());
  EXPECT_NEAR(g.advantages.mean(), 0.0, 1e-12);
}

TEST(Gae, SingleTerminalStep) {
  RolloutBatch b;
  b.inputs = Mat::Zero(1, 1);
  b.actions = Mat::Zero(1, 1);
  b.log_probs = Vec::Zero(1);
  b.rewards = Vec::Constant(1, 1.0);
  b.values = Vec::Zero(1);
  b.episodes = {{0, 1, true, 0.0}};
  EXPECT_EQ(compute_gae(b, 0.99, 0.95).raw_advantages(0), 1.0);
}

TEST(Gae, MatchesRecursionOnThreeEpisodes) {
  Rng rng(2);
  RolloutBatch b;
  const Index n = 17;
  b.inputs = Mat::Zero(n, 1);
  b.actions = Mat::Zero(n, 1);
  b.log_probs = Vec::Zero(n);
  b.rewards = Vec(n);
  b.values = Vec(n);
  for (Index i = 0; i < n; ++i) {
    b.rewards(i) = rng.normal();
    b.values(i) = rng.normal();
  }
  b.episodes = {{0, 5, true, 0.0}, {5, 12, false, 0.7}, {12, 17, false, -1.3}};
  const auto g = compute_gae(b, 0.97, 0.9);
  for (const auto& e : b.episodes)
    for (Index t = e.begin; t < e.end; ++t)
      EXPECT_NEAR(g.raw_advantages(t), gae_recursive(b, e, t, 0.97, 0.9), 1e-12);
  EXPECT_LT((g.targets - (g.raw_advantages + b.values)).norm(), 1e-15);
}

TEST(Gae, EmptyBatchThrows) {
  RolloutBatch b;
  EXPECT_ANY_THROW(compute_gae(b, 0.99, 0.95));
}

TEST(ConjugateGradient, IdentityInOneIteration) {
  const Vec b = (Vec(3) << 1.0, -2.0, 0.5).finished();
  const auto r = conjugate_gradient([](const Vec& v) { return v; }, b, 10);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LT((r.x - b).norm(), 1e-15);
}

TEST(ConjugateGradient, RandomSpdMatchesDirectSolve) {
  Rng rng(6);
  Mat m(8, 8);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  const Mat a = m * m.transpose() + Mat::Identity(8, 8);
  Vec b(8);
  for (Index i = 0; i < 8; ++i) b(i) = rng.normal();
  const auto r = conjugate_gradient([&](const Vec& v) { return Vec(a * v); }, b, 50, 1e-14);
  const Vec direct = a.ldlt().solve(b);
  EXPECT_LT((r.x - direct).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ConjugateGradient, ZeroRightHandSide) {
  const auto r = conjugate_gradient([](const Vec& v) { return Vec(2.0 * v); }, Vec::Zero(5), 10);
  EXPECT_TRUE(r.x.isZero(0.0));
}

TEST(ConjugateGradient, ResidualBelowToleranceOnLargeSystem) {
  Rng rng(7);
  const Index n = 1000;
  Vec diag(n);
  for (Index i = 0; i < n; ++i) diag(i) = 1.0 + 9.0 * rng.uniform();
  Vec b(n);
  for (Index i = 0; i < n; ++i) b(i) = rng.normal();
  const Scalar tol = 1e-10;
  const auto avp = [&](const Vec& v) { return Vec(diag.cwiseProduct(v)); };
  const auto r = conjugate_gradient(avp, b, 500, tol);
  EXPECT_TRUE(r.converged);
  EXPECT_LE((b - avp(r.x)).norm(), tol * b.norm() * 1.0001);
}

TEST(Fisher, ZeroVectorGivesZero) {
  const auto gen = make_gen(1);
  const auto b = make_batch(gen, 32, 1);
  EXPECT_TRUE(fisher_vector_product(gen, b.inputs, Vec::Zero(gen.policy.dim()), 0.0).isZero(0.0));
}

TEST(Fisher, SymmetricAndLinear) {
  const auto gen = make_gen(2);
  const auto b = make_batch(gen, 32, 2);
  Rng rng(3);
  const Index d = gen.policy.dim();
  const Vec u = rng.normal_vec(d), v = rng.normal_vec(d);
  const Vec fu = fisher_vector_product(gen, b.inputs, u, 0.1);
  const Vec fv = fisher_vector_product(gen, b.inputs, v, 0.1);
  EXPECT_NEAR(u.dot(fv), v.dot(fu), 1e-10 * (1.0 + std::abs(u.dot(fv))));
  const Vec combo = fisher_vector_product(gen, b.inputs, 2.5 * u - 0.7 * v, 0.1);
  EXPECT_LT((combo - (2.5 * fu - 0.7 * fv)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Fisher, MatchesKlCurvature) {
  // v'Fv = d^2/de^2 KL(theta || theta + e v) at e = 0.
  const auto gen = make_gen(4);
  const auto b = make_batch(gen, 16, 4);
  Rng rng(5);
  const Vec v = rng.normal_vec(gen.policy.dim());
  const Scalar vfv = v.dot(fisher_vector_product(gen, b.inputs, v, 0.0));
  const Scalar eps = 1e-4;
  auto kl_at = [&](Scalar e) {
    GeneratorModel moved = gen;
    moved.policy.unflatten(gen.policy.flatten() + e * v);
    return mean_kl(gen, moved, b.inputs);
  };
  const Scalar numeric = (kl_at(eps) + kl_at(-eps)) / (eps * eps);
  EXPECT_NEAR(vfv, numeric, 1e-4 * std::max(1.0, std::abs(vfv)));
}

TEST(Fisher, DampingOnlyLimit) {
  // The curvature of a one-row batch is negligible next to a large damping.
  const auto gen = make_gen(5);
  Rng rng(1);
  const Vec v = rng.normal_vec(gen.policy.dim());
  const Mat tiny = make_batch(gen, 1, 9).inputs * 0.0;
  const Vec f = fisher_vector_product(gen, tiny, v, 1e3);
  EXPECT_LT((f - 1e3 * v).norm() / (1e3 * v.norm()), 1e-2);
}

TEST(Fisher, WrongLengthThrows) {
  const auto gen = make_gen(1);
  const auto b = make_batch(gen, 4, 1);
  EXPECT_THROW(fisher_vector_product(gen, b.inputs, Vec::Zero(3), 0.1), DimensionError);
}

TEST(TrpoUpdate, ZeroAdvantagesMeanNoStep) {
  auto gen = make_gen(3);
  const auto before = gen.policy;
  const auto b = make_batch(gen, 32, 3);
  const auto rep = trpo_update(gen, b, Vec::Zero(32), TrpoConfig{}, 0.0);
  EXPECT_FALSE(rep.accepted);
  EXPECT_EQ(rep.kl, 0.0);
  EXPECT_TRUE(gen.policy == before);
}

TEST(TrpoUpdate, StandardBatchRespectsTrustRegion) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto gen = make_gen(seed);
    const auto old = gen;
    const auto b = make_batch(gen, 128, seed);
    const auto adv = compute_gae(b, 0.99, 0.95).advantages;
    TrpoConfig cfg;
    const auto rep = trpo_update(gen, b, adv, cfg, 0.001);
    ASSERT_TRUE(rep.accepted) << seed;
    EXPECT_LE(rep.kl, 1.5 * cfg.max_kl);
    EXPECT_NEAR(mean_kl(old, gen, b.inputs), rep.kl, 1e-15);
    EXPECT_GE(rep.surrogate_after, rep.surrogate_before);
  }
}

TEST(TrpoUpdate, BacktracksWhenFullStepBreaksConstraint) {
  // A large radius with almost no damping: the quadratic model
  // underestimates the true KL along the full step.
  auto gen = make_gen(11, -2.0);
  const auto b = make_batch(gen, 8, 11);
  Vec adv(8);
  adv << 5.0, -5.0, 5.0, -5.0, 5.0, -5.0, 5.0, -5.0;
  TrpoConfig cfg;
  cfg.max_kl = 2.0;
  cfg.cg_damping = 1e-6;
  cfg.cg_iters = 30;
  cfg.backtrack_steps = 30;
  const auto old = gen;
  const auto rep = trpo_update(gen, b, adv, cfg, 0.0);
  EXPECT_GT(rep.backtracks, 0);
  ASSERT_TRUE(rep.accepted);
  EXPECT_LE(mean_kl(old, gen, b.inputs), 1.5 * cfg.max_kl);
}

TEST(ValueFit, LossNeverIncreases) {
  auto gen = make_gen(8);
  const auto b = make_batch(gen, 200, 8);
  const Vec targets = b.rewards * 3.0;
  ad::Adam opt(gen.value_params, 1e-2);
  Rng rng(0);
  TrpoConfig cfg;
  cfg.value_epochs = 20;
  cfg.value_minibatch = 32;
  const auto losses = fit_value(gen, opt, b.inputs, targets, cfg, rng);
  ASSERT_FALSE(losses.empty());
  for (std::size_t i = 1; i < losses.size(); ++i) EXPECT_LE(losses[i], losses[i - 1]);
  EXPECT_NEAR(losses.back(), value_loss(gen, b.inputs, targets), 1e-12);
}
