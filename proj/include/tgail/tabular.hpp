#pragma once

// Exact-table versions of the three players on an enumerable (s, a, c)
// space. With joint one-hot inputs and no hidden layers each network is a
// lookup table, so trained values can be compared cell by cell against
// closed forms.

#include "tgail/algo.hpp"
#include "tgail/gridmodes.hpp"

#include <string>
#include <vector>

namespace tgail::theory {

using env::TabularJoint;

struct DiscriminatorTable {
  /// D per cell, flat in TabularJoint order; NaN where undefined.
  Vec d;
  /// p_E + p_omega > 0.
  std::vector<bool> defined;

  Index defined_cells() const;
};

/// D*(s,a,c) = p_w / (p_E + p_w) with p_w = omega p_gen + (1 - omega) p_sel.
/// Throws DimensionError when the three tables differ in shape.
DiscriminatorTable optimal_discriminator(const TabularJoint& expert, const TabularJoint& generator,
                                         const TabularJoint& selector, Scalar omega);

/// Largest |trained - oracle| over the oracle's defined cells.
Scalar max_abs_deviation(const Vec& trained, const DiscriminatorTable& oracle);

/// One row per cell with p > 0, weighted by p. Selector input is the one-hot
/// (s, a) cell.
algo::StepSet tabular_steps(const TabularJoint& joint);

/// Row-stochastic matrix with softmax(N(0, scale^2)) rows.
Mat random_conditional(int rows, int cols, Rng& rng, Scalar scale = 1.0);

/// Rows s * K + c of p(a | s, c); uniform where p(s, c) = 0.
Mat generator_conditional(const TabularJoint& joint);

model::GeneratorModel tabular_generator(int states, int actions, int skills, const Mat& conditional);
model::SelectorModel tabular_selector(int states, int actions, int skills, const Mat& conditional);
model::DiscriminatorModel tabular_discriminator(int states, int actions, int skills, std::uint64_t seed);

/// Read the tables back out of the models.
Mat generator_table(const model::GeneratorModel& gen);
Mat selector_table(const model::SelectorModel& sel, int states, int actions);
Vec discriminator_table(const model::DiscriminatorModel& disc, int states, int actions, int skills);

struct DiscTrainConfig {
  int steps = 6000;
  Scalar lr = 0.05;
  /// Learning rate decays geometrically to this by the last step.
  Scalar final_lr = 1e-4;
};

/// Full-batch ascent on the exact expected discriminator objective.
/// Returns the final objective value.
Scalar train_tabular_discriminator(model::DiscriminatorModel& disc, const TabularJoint& expert,
                                   const TabularJoint& generator, const TabularJoint& selector, Scalar omega,
                                   const DiscTrainConfig& cfg = {});

/// Norm of the gradient of the game value with respect to the generator
/// table, D and C held fixed:
///   sum p_E(s,c) pi(a|s,c) [omega log D(s,a,c) + (1-omega) sum_c' C(c'|s,a) log D(s,a,c')].
/// The entropy term is left out.
Scalar generator_gradient_norm(const model::GeneratorModel& gen, const model::DiscriminatorModel& disc,
                               const model::SelectorModel& sel, const TabularJoint& expert, Scalar omega);

/// Norm of the gradient of the selector objective (adversarial term plus
/// lambda_e R_E + lambda_g R_G), D fixed.
Scalar selector_gradient_norm(const model::SelectorModel& sel, const model::DiscriminatorModel& disc,
                              const TabularJoint& expert, const TabularJoint& generator, Scalar omega,
                              Scalar lambda_e, Scalar lambda_g);

struct TheoryCheck {
  std::string name;
  Scalar value = 0.0;
  Scalar tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

struct TheoryReport {
  std::vector<TheoryCheck> checks;

  bool pass() const;
  const TheoryCheck& at(const std::string& name) const;
  std::string to_text() const;
  std::string to_json() const;
};

struct TheoryConfig {
  env::GridModesConfig grid{};
  Scalar omega = 0.5;
  Scalar lambda_e = 1.0;
  Scalar lambda_g = 0.5;
  std::uint64_t seed = 0;
  DiscTrainConfig disc{};
  Scalar d_tolerance = 0.02;
  Scalar norm_tolerance = 1e-3;
  /// Negative control: flip the trained discriminator's logits before the
  /// optimal-D comparison.
  bool corrupt_discriminator = false;
};

/// Optimal-D match on random frozen players, the equilibrium fixed point,
/// and the two-cell mixture counterexample.
TheoryReport verify_theory(const TheoryConfig& cfg = {});

}  // namespace tgail::theory
