#pragma once

// The three heads: generator pi(a | s, c) with its value network, selector
// C(c | s_t, a_{t-1}) and discriminator D(s, a, c).

#include "tgail/checkpoint.hpp"
#include "tgail/diffcore.hpp"

#include <deque>
#include <string>
#include <vector>

namespace tgail::model {

/// How (state, action, label) rows become network inputs. joint_one_hot
/// expects one-hot state/action/label rows and feeds a single one-hot over
/// the joint cell, which makes a layer-free network a lookup table.
enum class Encoding { concat, joint_one_hot };

enum class PolicyHead { gaussian, categorical };

std::string_view encoding_name(Encoding e);
Encoding parse_encoding(std::string_view s);

/// Index of the joint cell for one-hot rows; the label factor is skipped when
/// `labels` has no columns.
Mat joint_cells(const Mat& states, const Mat& actions, const Mat& labels);

inline constexpr Scalar kDiscClamp = 1e-6;

// ---------------------------------------------------------------- generator

struct GeneratorConfig {
  int obs_dim = 1;
  int act_dim = 1;
  /// Label width; 0 makes the policy label-blind.
  int skills = 0;
  std::vector<int> hidden{64, 64};
  PolicyHead head = PolicyHead::gaussian;
  Encoding encoding = Encoding::concat;
  Scalar init_log_std = -0.5;
  /// Post-sample clip bounds; empty means unbounded.
  Vec action_low;
  Vec action_high;
};

class GeneratorModel {
 public:
  GeneratorModel() = default;
  GeneratorModel(GeneratorConfig cfg, std::uint64_t seed);

  const GeneratorConfig& config() const { return cfg_; }
  int input_dim() const;
  /// Policy/value input rows from states and labels (labels ignored when
  /// label-blind).
  Mat input(const Mat& states, const Mat& labels) const;

  /// Gaussian mean or categorical logits, n x act_dim.
  Mat policy_output(const Mat& input) const;
  Vec value(const Mat& input) const;
  /// 1 x act_dim; Gaussian head only.
  RowVec log_std() const;
  bool gaussian() const { return cfg_.head == PolicyHead::gaussian; }
  Vec clip(const Vec& action) const;

  ad::MlpSpec policy_spec;
  ad::MlpSpec value_spec;
  /// Network entries, then "log_std" for the Gaussian head.
  ad::ParamSet policy;
  ad::ParamSet value_params;

  std::size_t log_std_entry() const { return policy_spec.param_entries(); }

 private:
  GeneratorConfig cfg_;
};

/// n x 1 log-probabilities of `actions` under the policy bound on `vars`.
/// Categorical actions are one-hot rows.
ad::Var log_prob(const GeneratorModel& gen, std::span<const ad::Var> vars, const ad::Var& input,
                 const Mat& actions);

/// Mean per-row entropy as a differentiable scalar.
ad::Var entropy(const GeneratorModel& gen, std::span<const ad::Var> vars, const ad::Var& input);

/// Plain (tape-free) log-probabilities, n x 1.
Vec log_prob_value(const GeneratorModel& gen, const Mat& input, const Mat& actions);

/// d/2 log(2 pi e) + sum log sigma for the Gaussian head.
Scalar policy_entropy(const GeneratorModel& gen);

/// Monte-Carlo estimate of E[-log pi] from `samples` draws at one input row.
Scalar sampled_entropy(const GeneratorModel& gen, const Vec& state, const Vec& label, int samples,
                       Rng& rng);

struct PolicySample {
  /// Clipped to the action bounds; one-hot for the categorical head.
  Vec action;
  /// The draw before clipping.
  Vec raw;
  /// log pi(raw | s, c).
  Scalar log_prob = 0.0;
};

PolicySample policy_sample(const GeneratorModel& gen, const Vec& state, const Vec& label, Rng& rng);

/// Deterministic action: clipped mean, or the one-hot argmax.
Vec policy_mode(const GeneratorModel& gen, const Vec& state, const Vec& label);

// ---------------------------------------------------------------- selector

struct SelectorConfig {
  int obs_dim = 1;
  int act_dim = 1;
  int skills = 3;
  std::vector<int> hidden{64, 64};
  /// Number of (s, a_prev) pairs fed at once.
  int window = 1;
  /// Overrides the input width when the caller builds features itself.
  int raw_input_dim = 0;
};

class SelectorModel {
 public:
  SelectorModel() = default;
  SelectorModel(SelectorConfig cfg, std::uint64_t seed);

  const SelectorConfig& config() const { return cfg_; }
  int input_dim() const;
  /// Row-wise p(c | features), n x K.
  Mat probs(const Mat& features) const;

  ad::MlpSpec spec;
  ad::ParamSet params;

 private:
  SelectorConfig cfg_;
};

/// Differentiable n x K log-probabilities.
ad::Var selector_log_probs(const SelectorModel& sel, std::span<const ad::Var> vars,
                           const ad::Var& features);

/// Rolling window of (s_t, a_{t-1}) pairs; slots before the episode start
/// are zero. Newest pair first.
class SelectorWindow {
 public:
  SelectorWindow(int window, int obs_dim, int act_dim);
  void reset() { pairs_.clear(); }
  void push(const Vec& state, const Vec& prev_action);
  Vec features() const;

 private:
  int window_, obs_dim_, act_dim_;
  std::deque<Vec> pairs_;
};

/// Feature rows for every step of an episode; a_{-1} is `zero_action`.
Mat selector_features(const std::vector<Vec>& states, const std::vector<Vec>& actions, int window,
                      const Vec& zero_action);

/// p(c | s_t, a_prev) for one step.
Vec selector_predict(const SelectorModel& sel, const Vec& features);
/// argmax with ties to the lowest index.
int selector_choose(const SelectorModel& sel, const Vec& features);

// ---------------------------------------------------------------- discriminator

struct DiscriminatorConfig {
  int obs_dim = 1;
  int act_dim = 1;
  int skills = 0;
  std::vector<int> hidden{64, 64};
  Encoding encoding = Encoding::concat;
};

class DiscriminatorModel {
 public:
  DiscriminatorModel() = default;
  DiscriminatorModel(DiscriminatorConfig cfg, std::uint64_t seed);

  const DiscriminatorConfig& config() const { return cfg_; }
  int input_dim() const;
  Mat input(const Mat& states, const Mat& actions, const Mat& labels) const;
  Vec logit(const Mat& input) const;
  /// Clamped sigmoid, n x 1.
  Vec score(const Mat& input) const;

  ad::MlpSpec spec;
  ad::ParamSet params;

 private:
  DiscriminatorConfig cfg_;
};

/// Differentiable log D and log(1 - D), both on the clamped score.
ad::Var log_d(const DiscriminatorModel& disc, std::span<const ad::Var> vars, const ad::Var& input);
ad::Var log_one_minus_d(const DiscriminatorModel& disc, std::span<const ad::Var> vars,
                        const ad::Var& input);

/// sigmoid(logit) clamped to [1e-6, 1 - 1e-6].
Scalar clamped_sigmoid(Scalar logit);

Scalar discriminator_score(const DiscriminatorModel& disc, const Vec& state, const Vec& action,
                           const Vec& label);
/// -log D(s, a, c).
Scalar surrogate_reward(const DiscriminatorModel& disc, const Vec& state, const Vec& action,
                        const Vec& label);
Vec surrogate_rewards(const DiscriminatorModel& disc, const Mat& states, const Mat& actions,
                      const Mat& labels);

// ---------------------------------------------------------------- persistence

void store(Checkpoint& ckpt, const GeneratorModel& gen, const std::string& prefix = "gen.");
void store(Checkpoint& ckpt, const SelectorModel& sel, const std::string& prefix = "sel.");
void store(Checkpoint& ckpt, const DiscriminatorModel& disc, const std::string& prefix = "disc.");

GeneratorModel load_generator(const Checkpoint& ckpt, const std::string& prefix = "gen.");
SelectorModel load_selector(const Checkpoint& ckpt, const std::string& prefix = "sel.");
DiscriminatorModel load_discriminator(const Checkpoint& ckpt, const std::string& prefix = "disc.");
bool has_model(const Checkpoint& ckpt, const std::string& prefix);

}  // namespace tgail::model
