#pragma once

#include "tgail/models.hpp"

#include <functional>
#include <vector>

namespace tgail::rl {

using model::GeneratorModel;

struct TrpoConfig {
  Scalar max_kl = 0.01;
  int cg_iters = 10;
  Scalar cg_damping = 0.1;
  int backtrack_steps = 10;
  Scalar backtrack_coeff = 0.5;
  Scalar gamma = 0.99;
  Scalar lambda = 0.95;
  int value_epochs = 5;
  Scalar value_lr = 1e-3;
  int value_minibatch = 256;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

struct EpisodeSpan {
  Index begin = 0;
  Index end = 0;  // one past the last step
  /// Ended in an absorbing state (collision); otherwise the episode was cut
  /// off and `bootstrap` is V of the state after the last step.
  bool terminal = false;
  Scalar bootstrap = 0.0;
};

/// Steps of several episodes laid out back to back.
struct RolloutBatch {
  Mat inputs;    // policy inputs, n x input_dim
  Mat actions;   // raw (pre-clip) actions
  Vec log_probs; // log pi_old(a | s, c) recorded at collection time
  Vec rewards;
  Vec values;
  std::vector<EpisodeSpan> episodes;

  Index size() const { return inputs.rows(); }
  /// Spans partition [0, n) in order and all arrays agree in length.
  void validate() const;
};

struct Gae {
  Vec advantages;      // normalized
  Vec raw_advantages;  // before normalization
  Vec targets;         // raw_advantages + values
};

Gae compute_gae(const RolloutBatch& batch, Scalar gamma, Scalar lambda);

struct CgResult {
  Vec x;
  int iterations = 0;
  Scalar residual = 0.0;
  bool converged = false;
};

CgResult conjugate_gradient(const std::function<Vec(const Vec&)>& avp, const Vec& b, int iters,
                            Scalar tol = 1e-10);

/// (F + damping I) v with F the Fisher matrix of the policy at its current
/// parameters over `inputs`; equals the Hessian of the mean KL there.
Vec fisher_vector_product(const GeneratorModel& gen, const Mat& inputs, const Vec& v,
                          Scalar damping);

/// Mean over rows of KL(pi_old(.|x) || pi_new(.|x)).
Scalar mean_kl(const GeneratorModel& old_gen, const GeneratorModel& new_gen, const Mat& inputs);

/// mean(ratio * advantage) + entropy_coef * H.
Scalar surrogate(const GeneratorModel& gen, const RolloutBatch& batch, const Vec& advantages,
                 Scalar entropy_coef);

struct StepReport {
  Scalar surrogate_before = 0.0;
  Scalar surrogate_after = 0.0;
  Scalar kl = 0.0;
  int backtracks = 0;
  bool accepted = false;
  Scalar expected_improvement = 0.0;
  int cg_iterations = 0;
  Scalar cg_residual = 0.0;
};

/// One natural-gradient step with backtracking. A step is accepted only if
/// KL <= 1.5 max_kl and the surrogate improves; otherwise parameters stay put.
StepReport trpo_update(GeneratorModel& gen, const RolloutBatch& batch, const Vec& advantages,
                       const TrpoConfig& cfg, Scalar entropy_coef);

/// Minibatch regression of the value network on `targets`. An epoch that
/// raises the full-batch loss is undone and fitting stops.
std::vector<Scalar> fit_value(GeneratorModel& gen, ad::Adam& opt, const Mat& inputs,
                              const Vec& targets, const TrpoConfig& cfg, Rng& rng);

Scalar value_loss(const GeneratorModel& gen, const Mat& inputs, const Vec& targets);

}  // namespace tgail::rl
