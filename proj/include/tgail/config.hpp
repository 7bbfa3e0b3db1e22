#pragma once

// Experiment configuration: defaults, overridden by a JSON file, overridden
// by command-line flags.

#include "tgail/algo.hpp"
#include "tgail/laneworld.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace tgail::cfg {

/// Number of hardware threads, at least 1.
int default_workers();

struct ExperimentConfig {
  /// "laneworld" or "gridmodes".
  std::string environment = "laneworld";
  algo::Algorithm algorithm = algo::Algorithm::triple_gail;
  algo::TripleGailConfig triple{};
  rl::TrpoConfig trpo{};
  algo::BcConfig bc{};
  std::string demos;
  std::string heldout;
  std::string scenarios;
  std::string out_dir = "runs/default";
  std::vector<std::uint64_t> seeds{0};
  /// Save a checkpoint every k iterations (0 = final only).
  int checkpoint_every = 25;
  /// Quick evaluation every k iterations during training (0 = off).
  int eval_every = 0;
  int eval_episodes = 100;
  bool eval_stochastic = false;
  int workers = default_workers();

  /// Throws std::invalid_argument. With `check_paths`, referenced files
  /// must exist.
  void validate(bool check_paths) const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Overrides only the keys present in `j`; unknown keys are an error.
void apply_json(ExperimentConfig& c, const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// "0,1,2" -> {0, 1, 2}.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

algo::TaskSpec make_task(const ExperimentConfig& c);

}  // namespace tgail::cfg
