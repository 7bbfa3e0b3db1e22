#pragma once

#include "tgail/rollout.hpp"
#include "tgail/trpo.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace tgail::algo {

// ---------------------------------------------------------------- data

/// Weighted (s, a, c) rows plus the selector features of each row.
struct StepSet {
  Mat states;
  Mat actions;
  /// One-hot rows; no columns for label-blind sets.
  Mat labels;
  /// Selector input for the row: (s_t, a_{t-1}) window.
  Mat selector_in;
  Vec weights;
  /// Episode of each row.
  std::vector<int> episode;

  Index size() const { return states.rows(); }
  bool empty() const { return size() == 0; }
  /// Rows in `rows`, weights rescaled to sum to `total`.
  StepSet subset(const std::vector<Index>& rows, Scalar total = 1.0) const;
  /// Same rows with weight 1/n each.
  StepSet uniform() const;
};

/// Every step of `trajs`, each episode weighted 1/(N T_j). `skills` = 0
/// leaves the label matrix empty. Generated episodes use the raw (pre-clip)
/// actions when `raw_actions` is set.
StepSet steps_from(const std::vector<env::LabeledTrajectory>& trajs, int skills, int window,
                   const Vec& zero_action, bool raw_actions = false);

// ---------------------------------------------------------------- losses

/// Weighted mean of -log C(c | x) over the set: the selector cross-entropy
/// used for both supervised terms.
Scalar selector_cross_entropy(const SelectorModel& sel, const StepSet& set);
ad::Var selector_cross_entropy(const SelectorModel& sel, std::span<const ad::Var> vars,
                               ad::Tape& tape, const StepSet& set);

/// Supervised selector loss on expert trajectories: mean over trajectories
/// of the per-step mean cross-entropy, a_{-1} = zero action.
Scalar compute_RE(const SelectorModel& sel, const std::vector<env::LabeledTrajectory>& expert,
                  int window, const Vec& zero_action);
/// The same loss on generated trajectories tagged with their episode labels.
Scalar compute_RG(const SelectorModel& sel, const std::vector<env::LabeledTrajectory>& generated,
                  int window, const Vec& zero_action);

struct DiscParts {
  Scalar expert = 0.0;     // sum w log(1 - D) on expert rows
  Scalar generated = 0.0;  // omega * sum w log D on generated rows
  Scalar selector = 0.0;   // (1 - omega) * sum w log D on selector-labeled rows
  Scalar total() const { return expert + generated + selector; }
};

/// Objective the discriminator ascends. The selector-labeled set is skipped
/// entirely when omega = 1.
ad::Var discriminator_objective(const DiscriminatorModel& disc, std::span<const ad::Var> vars,
                                ad::Tape& tape, const StepSet& expert, const StepSet& generated,
                                const StepSet& selected, Scalar omega, DiscParts* parts = nullptr);
DiscParts discriminator_objective_value(const DiscriminatorModel& disc, const StepSet& expert,
                                        const StepSet& generated, const StepSet& selected,
                                        Scalar omega);

/// n x K table of log D(s, a, c) for every label c at each row.
Mat log_d_all_labels(const DiscriminatorModel& disc, const StepSet& set, int skills);

struct SelectorParts {
  Scalar adversarial = 0.0;  // (1 - omega) sum w sum_c C(c|x) log D(s, a, c)
  Scalar re = 0.0;
  Scalar rg = 0.0;
  Scalar total(Scalar le, Scalar lg) const { return adversarial + le * re + lg * rg; }
};

/// Objective the selector descends with D held fixed. `generated` supplies
/// both the adversarial rows and the R_G rows; `log_d` is
/// log_d_all_labels(disc, generated).
ad::Var selector_objective(const SelectorModel& sel, std::span<const ad::Var> vars, ad::Tape& tape,
                           const StepSet& expert, const StepSet& generated, const Mat& log_d,
                           Scalar omega, Scalar lambda_e, Scalar lambda_g,
                           SelectorParts* parts = nullptr);
SelectorParts selector_objective_value(const SelectorModel& sel, const DiscriminatorModel& disc,
                                       const StepSet& expert, const StepSet& generated,
                                       Scalar omega, int skills);

/// Value of the three-player game: discriminator objective with the
/// selector term taken as the exact expectation over C, minus lambda_h H.
Scalar game_value(const DiscriminatorModel& disc, const SelectorModel& sel, const StepSet& expert,
                  const StepSet& generated, Scalar omega, Scalar lambda_h, Scalar entropy, int skills);
/// game_value + lambda_e R_E + lambda_g R_G.
Scalar regularized_game_value(const DiscriminatorModel& disc, const SelectorModel& sel,
                              const StepSet& expert, const StepSet& generated, Scalar omega,
                              Scalar lambda_h, Scalar entropy, Scalar lambda_e, Scalar lambda_g,
                              int skills);

// ---------------------------------------------------------------- updates

struct UpdateConfig {
  Scalar lr = 3e-4;
  int epochs = 3;
  int minibatch = 256;
};

/// Splits three sets into aligned minibatches and calls fn on each; weights
/// are renormalized per set inside a minibatch.
void for_each_minibatch(const StepSet& a, const StepSet& b, const StepSet& c, int minibatch, Rng& rng,
                        const std::function<void(const StepSet&, const StepSet&, const StepSet&)>& fn);

DiscParts discriminator_update(DiscriminatorModel& disc, ad::Adam& opt, const StepSet& expert,
                               const StepSet& generated, const StepSet& selected, Scalar omega,
                               const UpdateConfig& cfg, Rng& rng);

SelectorParts selector_update(SelectorModel& sel, ad::Adam& opt, const DiscriminatorModel& disc,
                              const StepSet& expert, const StepSet& generated, Scalar omega,
                              Scalar lambda_e, Scalar lambda_g, int skills, const UpdateConfig& cfg,
                              Rng& rng);

/// Copy of `set` whose labels are drawn from C(. | selector_in).
StepSet selector_labeled(const SelectorModel& sel, const StepSet& set, Rng& rng);

// ---------------------------------------------------------------- configs

struct TripleGailConfig {
  Scalar omega = 0.5;
  Scalar lambda_e = 1.0;
  Scalar lambda_g_max = 0.5;
  /// Fraction of iterations over which lambda_g ramps linearly from 0.
  Scalar lambda_g_warmup = 0.5;
  Scalar lambda_h = 0.001;
  int iterations = 150;
  int episodes_per_skill = 4;
  UpdateConfig disc{3e-4, 3, 256};
  UpdateConfig sel{3e-4, 3, 256};
  int window = 1;
  std::vector<int> hidden{64, 64};
  Scalar init_log_std = -0.5;
  std::uint64_t seed = 0;
  int workers = 1;
  /// Supervised epochs on the demos before adversarial training (0 = off).
  int bc_warmstart_epochs = 0;
  /// Supervised epochs for the CGAIL classifier.
  int classifier_epochs = 30;

  void validate() const;
  /// lambda_g at 0-based iteration `it` of `iterations`.
  Scalar lambda_g_at(int it) const;
};

struct BcConfig {
  int epochs = 200;
  Scalar lr = 1e-3;
  int minibatch = 256;
  std::vector<int> hidden{64, 64};
  Scalar init_log_std = -0.5;
  /// Condition on the true label; otherwise label-blind.
  bool labeled = false;
  std::uint64_t seed = 0;
};

struct LossReport {
  int iteration = 0;
  DiscParts disc;
  Scalar r_e = 0.0;
  Scalar r_g = 0.0;
  Scalar lambda_g = 0.0;
  Scalar entropy = 0.0;
  Scalar selector_accuracy = 0.0;
  Scalar mean_reward = 0.0;
  Scalar value_loss = 0.0;
  Scalar rollout_success = 0.0;
  rl::StepReport trpo;

  bool finite() const;
  std::string to_json() const;
};

enum class Algorithm { bc, gail, cgail, triple_gail };
std::string_view algorithm_name(Algorithm a);
Algorithm parse_algorithm(std::string_view s);

struct TrainedModels {
  Algorithm algorithm = Algorithm::triple_gail;
  GeneratorModel gen;
  std::optional<SelectorModel> sel;
  std::optional<DiscriminatorModel> disc;
  std::vector<LossReport> log;
  bool aborted = false;
  std::string abort_reason;
  /// Held-out negative log-likelihood per epoch (BC only).
  std::vector<Scalar> bc_train_nll;
  std::vector<Scalar> bc_heldout_nll;

  /// Label width the generator expects (0 = label-blind).
  int generator_skills() const { return gen.config().skills; }
};

struct TrainHooks {
  std::function<void(const LossReport&)> on_iteration;
  /// Called with the 1-based iteration count after each iteration.
  std::function<void(int, const TrainedModels&)> on_checkpoint;
};

// ---------------------------------------------------------------- trainers

TrainedModels bc_train(const TaskSpec& task, const std::vector<env::LabeledTrajectory>& demos,
                       const std::vector<env::LabeledTrajectory>& heldout, const BcConfig& cfg);

TrainedModels gail_train(const TaskSpec& task, const std::vector<env::LabeledTrajectory>& demos,
                         const TripleGailConfig& cfg, const rl::TrpoConfig& trpo,
                         const TrainHooks& hooks = {});

/// Supervised classifier (frozen), then label-conditioned GAIL.
TrainedModels cgail_train(const TaskSpec& task, const std::vector<env::LabeledTrajectory>& demos,
                          const std::vector<env::LabeledTrajectory>& heldout,
                          const TripleGailConfig& cfg, const rl::TrpoConfig& trpo,
                          const TrainHooks& hooks = {});

TrainedModels triple_gail_train(const TaskSpec& task, const std::vector<env::LabeledTrajectory>& demos,
                                const std::vector<env::LabeledTrajectory>& heldout,
                                const TripleGailConfig& cfg, const rl::TrpoConfig& trpo,
                                const TrainHooks& hooks = {});

/// Supervised training of a selector on demos (R_E only), for
/// cfg.classifier_epochs epochs.
SelectorModel train_classifier(const TaskSpec& task, const std::vector<env::LabeledTrajectory>& demos,
                               const TripleGailConfig& cfg);

/// Per-step argmax accuracy on labeled trajectories, averaged over steps
/// then episodes.
Scalar heldout_selector_accuracy(const SelectorModel& sel,
                                 const std::vector<env::LabeledTrajectory>& trajs, int window,
                                 const Vec& zero_action);

}  // namespace tgail::algo
