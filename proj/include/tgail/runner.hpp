#pragma once

// Glue between configuration, trainers, checkpoints and evaluation, shared
// by the command-line tool and the end-to-end tests.

#include "tgail/config.hpp"
#include "tgail/eval.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace tgail::run {

/// Training with the algorithm named in `c` for one seed.
algo::TrainedModels train(const cfg::ExperimentConfig& c, const algo::TaskSpec& task,
                          const std::vector<env::LabeledTrajectory>& demos,
                          const std::vector<env::LabeledTrajectory>& heldout, std::uint64_t seed,
                          const algo::TrainHooks& hooks = {});

/// Models plus metadata (algorithm, iteration, seed, config, aborted).
Checkpoint make_checkpoint(const algo::TrainedModels& m, int iteration, std::uint64_t seed,
                           const cfg::ExperimentConfig& c);

struct LoadedModels {
  algo::Algorithm algorithm = algo::Algorithm::triple_gail;
  model::GeneratorModel gen;
  std::optional<model::SelectorModel> sel;
  std::optional<model::DiscriminatorModel> disc;
  int iteration = 0;
  std::uint64_t seed = 0;
  int window = 1;
};

LoadedModels from_checkpoint(const Checkpoint& ckpt);

/// FNV-1a of the serialized checkpoint, as 16 hex digits.
std::string checkpoint_hash(const Checkpoint& ckpt);

/// The label source an evaluation should use: none for label-blind
/// generators, the true labels on request, the selector otherwise.
eval::LabelMode label_mode_for(const model::GeneratorModel& gen, bool has_selector, bool true_labels);

/// Demonstrations for `c`: loaded from c.demos when set, generated from
/// `seed` otherwise.
std::vector<env::LabeledTrajectory> demos_for(const cfg::ExperimentConfig& c, const std::string& path,
                                              int per_skill, std::uint64_t seed);

}  // namespace tgail::run
