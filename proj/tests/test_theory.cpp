#include "tgail/tabular.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>

using namespace tgail;
using namespace tgail::theory;

namespace {

// Two states, one action, one skill: the joint is just a two-cell vector.
TabularJoint two_cells(Scalar a, Scalar b) {
  TabularJoint j(2, 1, 1);
  j(0, 0, 0) = a;
  j(1, 0, 0) = b;
  return j;
}

}  // namespace

TEST(OptimalDiscriminator, EqualTablesGiveHalf) {
  const env::GridModesConfig g;
  const auto e = env::grid_expert_joint(g, Vec::Constant(g.states(), 1.0 / g.states()));
  const auto d = optimal_discriminator(e, e, e, 0.5);
  for (Index i = 0; i < d.d.size(); ++i) {
    if (d.defined[static_cast<std::size_t>(i)])
      EXPECT_DOUBLE_EQ(d.d(i), 0.5);
    else
      EXPECT_TRUE(std::isnan(d.d(i)));
  }
  EXPECT_GT(d.defined_cells(), 0);
}

TEST(OptimalDiscriminator, TwoCellRatio) {
  const auto d = optimal_discriminator(two_cells(0.8, 0.2), two_cells(0.2, 0.8), two_cells(0.2, 0.8), 0.5);
  EXPECT_NEAR(d.d(0), 0.2, 1e-15);
  EXPECT_NEAR(d.d(1), 0.8, 1e-15);
}

TEST(OptimalDiscriminator, MixtureMatchesExpert) {
  const auto d = optimal_discriminator(two_cells(0.5, 0.5), two_cells(1.0, 0.0), two_cells(0.0, 1.0), 0.5);
  EXPECT_EQ(d.d(0), 0.5);
  EXPECT_EQ(d.d(1), 0.5);
}

TEST(OptimalDiscriminator, OmegaOneIgnoresSelector) {
  const auto a = optimal_discriminator(two_cells(0.3, 0.7), two_cells(0.6, 0.4), two_cells(1.0, 0.0), 1.0);
  const auto b = optimal_discriminator(two_cells(0.3, 0.7), two_cells(0.6, 0.4), two_cells(0.0, 1.0), 1.0);
  EXPECT_EQ(a.d, b.d);
  EXPECT_NEAR(a.d(0), 0.6 / 0.9, 1e-15);
}

TEST(OptimalDiscriminator, UnsupportedCellsAreUndefined) {
  const auto d = optimal_discriminator(two_cells(1.0, 0.0), two_cells(1.0, 0.0), two_cells(1.0, 0.0), 0.5);
  EXPECT_TRUE(d.defined[0]);
  EXPECT_FALSE(d.defined[1]);
  EXPECT_EQ(d.defined_cells(), 1);
  // Undefined cells are skipped by the deviation.
  EXPECT_EQ(max_abs_deviation((Vec(2) << 0.5, 123.0).finished(), d), 0.0);
}

TEST(OptimalDiscriminator, ShapeMismatchThrows) {
  TabularJoint other(3, 1, 1);
  other(0, 0, 0) = 1.0;
  EXPECT_THROW(optimal_discriminator(two_cells(0.5, 0.5), other, two_cells(0.5, 0.5), 0.5), DimensionError);
}

TEST(OptimalDiscriminator, IsTheMaximizerOfTheExpectedObjective) {
  // Cellwise p_E log(1 - D) + p_w log D peaks at D*.
  Rng rng(1);
  const Scalar pe = 0.3, pw = 0.55;
  const auto d = optimal_discriminator(two_cells(pe, 1 - pe), two_cells(pw, 1 - pw), two_cells(pw, 1 - pw), 0.5);
  auto f = [&](Scalar x) { return pe * std::log(1 - x) + pw * std::log(x); };
  for (int i = 0; i < 100; ++i) EXPECT_LE(f(rng.uniform(0.01, 0.99)), f(d.d(0)) + 1e-15);
}

TEST(Tables, TabularStepsCarryTheJoint) {
  Rng rng(2);
  const env::GridModesConfig g;
  const auto e = env::grid_expert_joint(g, Vec::Constant(g.states(), 1.0 / g.states()));
  const auto steps = tabular_steps(e);
  EXPECT_NEAR(steps.weights.sum(), 1.0, 1e-12);
  EXPECT_TRUE((steps.weights.array() > 0.0).all());
  EXPECT_EQ(steps.labels.cols(), g.skills);
}

TEST(Tables, GeneratorAndSelectorRoundTrip) {
  Rng rng(3);
  const Mat pi = random_conditional(16 * 3, 4, rng);
  const Mat c = random_conditional(16 * 4, 3, rng);
  EXPECT_LT((generator_table(tabular_generator(16, 4, 3, pi)) - pi).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((selector_table(tabular_selector(16, 4, 3, c), 16, 4) - c).cwiseAbs().maxCoeff(), 1e-12);
  for (Index r = 0; r < pi.rows(); ++r) EXPECT_NEAR(pi.row(r).sum(), 1.0, 1e-12);
}

TEST(Tables, ExpertConditionalRecovered) {
  const env::GridModesConfig g;
  const auto e = env::grid_expert_joint(g, Vec::Constant(g.states(), 1.0 / g.states()));
  const Mat pi = generator_conditional(e);
  const Mat expert = env::grid_expert_policy(g);
  const Mat psc = e.sc_marginal();
  for (int s = 0; s < g.states(); ++s)
    for (int k = 0; k < g.skills; ++k)
      if (psc(s, k) > 0.0) EXPECT_LT((pi.row(s * g.skills + k) - expert.row(s * g.skills + k)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gradients, NonEquilibriumGeneratorHasNonzeroNorm) {
  // A random generator facing the discriminator trained against it.
  Rng rng(4);
  const env::GridModesConfig g;
  const auto e = env::grid_expert_joint(g, Vec::Constant(g.states(), 1.0 / g.states()));
  const auto gen = tabular_generator(16, 4, 3, random_conditional(48, 4, rng));
  const auto sel = tabular_selector(16, 4, 3, random_conditional(64, 3, rng));
  const auto tables = env::gridmodes_enumerate(generator_table(gen), selector_table(sel, 16, 4), e);
  auto disc = tabular_discriminator(16, 4, 3, 5);
  DiscTrainConfig dc;
  dc.steps = 1000;
  train_tabular_discriminator(disc, e, tables.generator, tables.selector, 0.5, dc);
  EXPECT_GT(generator_gradient_norm(gen, disc, sel, e, 0.5), 1e-3);
  EXPECT_GT(selector_gradient_norm(sel, disc, e, tables.generator, 0.5, 1.0, 0.5), 1e-3);
}

TEST(Gradients, ConstantDiscriminatorLeavesGeneratorFlatInTheSimplex) {
  // With D constant the game is constant along the probability simplex.
  Rng rng(5);
  const env::GridModesConfig g;
  const auto e = env::grid_expert_joint(g, Vec::Constant(g.states(), 1.0 / g.states()));
  const auto gen = tabular_generator(16, 4, 3, random_conditional(48, 4, rng));
  const auto sel = tabular_selector(16, 4, 3, random_conditional(64, 3, rng));
  auto disc = tabular_discriminator(16, 4, 3, 6);
  for (std::size_t i = 0; i < disc.params.size(); ++i) disc.params.value(i).setZero();
  EXPECT_LT(generator_gradient_norm(gen, disc, sel, e, 0.5), 1e-12);
}

TEST(TrainedDiscriminator, ConvergesToOracleOnTwoCells) {
  auto disc = tabular_discriminator(2, 1, 1, 7);
  const auto e = two_cells(0.8, 0.2), p = two_cells(0.2, 0.8);
  train_tabular_discriminator(disc, e, p, p, 0.5);
  const auto oracle = optimal_discriminator(e, p, p, 0.5);
  EXPECT_LT(max_abs_deviation(discriminator_table(disc, 2, 1, 1), oracle), 0.02);
}

TEST(VerifyTheory, AllChecksPass) {
  const auto rep = verify_theory();
  for (const auto& c : rep.checks) EXPECT_TRUE(c.pass) << c.name << " " << c.value << " " << c.detail;
  EXPECT_TRUE(rep.pass());
  EXPECT_LE(rep.at("optimal_discriminator").value, 0.02);
  EXPECT_LE(rep.at("equilibrium_discriminator").value, 0.02);
  EXPECT_LT(rep.at("equilibrium_generator_gradient").value, 1e-3);
  EXPECT_LT(rep.at("equilibrium_selector_gradient").value, 1e-3);
  EXPECT_GT(rep.at("mixture_supervised_penalty").value, 0.5);
  EXPECT_FALSE(rep.to_text().empty());
  EXPECT_NO_THROW((void)nlohmann::json::parse(rep.to_json()));
}

TEST(VerifyTheory, CorruptedDiscriminatorFails) {
  TheoryConfig cfg;
  cfg.corrupt_discriminator = true;
  const auto rep = verify_theory(cfg);
  EXPECT_FALSE(rep.pass());
  EXPECT_FALSE(rep.at("optimal_discriminator").pass);
  EXPECT_THROW(rep.at("no_such_check"), std::out_of_range);
}
