#pragma once

#include "tgail/rollout.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tgail::eval {

using algo::TaskSpec;

struct EpisodeRecord {
  int scenario = 0;
  int true_label = 0;
  env::Termination end = env::Termination::running;
  /// (x, y) at every step plus the final position.
  std::vector<Vec2> positions;
  /// Label the generator saw at each step.
  std::vector<int> used_labels;

  bool success() const { return end == env::Termination::road_end; }
  Scalar distance() const { return positions.empty() ? 0.0 : positions.back()(0) - positions.front()(0); }
};

/// Records of demonstrations, for comparing position distributions.
std::vector<EpisodeRecord> records_from(const std::vector<env::LabeledTrajectory>& trajs);

enum class LabelMode { selector, true_labels, none };
std::string_view label_mode_name(LabelMode m);

struct EvalOptions {
  int episodes = 100;
  std::uint64_t seed = 0;
  LabelMode labels = LabelMode::selector;
  /// Act on samples instead of the mean / argmax.
  bool stochastic = false;
  int window = 1;
  int workers = 1;
};

/// Evaluation episodes cycle through the task's scenarios; starts and noise
/// come only from (seed, episode index).
std::vector<EpisodeRecord> rollout_eval(const TaskSpec& task, const model::GeneratorModel& gen,
                                        const model::SelectorModel* sel, const EvalOptions& opts);

Scalar success_rate(const std::vector<EpisodeRecord>& records);
Scalar mean_distance(const std::vector<EpisodeRecord>& records);
/// Per-step agreement of the used label with the true label, averaged over
/// steps, then episodes.
Scalar selector_accuracy(const std::vector<EpisodeRecord>& records);

struct HistogramGrid {
  Scalar x_lo = 0.0, x_hi = 200.0;
  Scalar y_lo = -6.0, y_hi = 6.0;
  int nx = 50, ny = 12;
  Scalar epsilon = 1e-6;
};

/// Normalized 2-D histogram with add-epsilon smoothing; points outside the
/// grid are clamped to the border bins.
Mat position_histogram(const std::vector<const EpisodeRecord*>& records, const HistogramGrid& grid);

/// sum p log(p / q) over cells with p > 0.
Scalar kl_divergence(const Mat& p, const Mat& q);

/// KL(demo || rollout) per skill label; nullopt where either side has no
/// episodes with that label.
std::vector<std::optional<Scalar>> position_kl(const std::vector<EpisodeRecord>& demos,
                                               const std::vector<EpisodeRecord>& rollouts, int skills,
                                               const HistogramGrid& grid = {});

struct EvalReport {
  std::string algorithm;
  std::string label_mode;
  int seeds = 0;
  int episodes = 0;
  Scalar success_mean = 0.0, success_std = 0.0;
  Scalar distance_mean = 0.0, distance_std = 0.0;
  std::vector<std::optional<Scalar>> position_kl;
  std::optional<Scalar> selector_accuracy;

  std::string to_json() const;
  static std::string csv_header();
  std::string to_csv() const;
};

/// Runs rollout_eval once per seed and aggregates mean and (population) std
/// over seeds. KL and accuracy are averaged over seeds.
EvalReport evaluate(const std::string& algorithm, const TaskSpec& task, const model::GeneratorModel& gen,
                    const model::SelectorModel* sel, const std::vector<EpisodeRecord>& demo_records,
                    const std::vector<std::uint64_t>& seeds, EvalOptions opts,
                    std::vector<EpisodeRecord>* all_records = nullptr);

/// Trajectory overlay, one panel per skill, as an SVG document.
std::string trajectory_svg(const std::vector<EpisodeRecord>& records, int skills,
                           const HistogramGrid& extent = {}, const std::string& title = "");

}  // namespace tgail::eval
