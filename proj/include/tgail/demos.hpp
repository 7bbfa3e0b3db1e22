#pragma once

#include "tgail/laneworld.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace tgail::env {

struct DemoSet {
  std::vector<LabeledTrajectory> trajectories;
  std::vector<int> per_skill;
  /// Episodes discarded because the expert collided.
  int regenerated = 0;
  /// Fraction of kept episodes that reached the road end.
  Scalar expert_success_rate = 0.0;
};

/// Runs the scripted expert for `skill` from `key` until the episode ends.
LabeledTrajectory expert_rollout(LaneWorld& env, const EpisodeKey& key, int skill);

/// `per_skill` expert episodes per skill on each skill's matched scenario.
/// Collided episodes are regenerated with a fresh sub-seed and counted.
DemoSet generate_demos(int per_skill, std::uint64_t seed, const LaneWorldConfig& cfg = {},
                       const ScenarioCatalog& catalog = ScenarioCatalog::defaults(),
                       int skills = kDrivingSkills);

/// Shortest decimal text that parses back to the same double.
std::string format_scalar(Scalar v);

/// Line-delimited text: a schema header, a column header, then one
/// comma-separated transition per line.
void write_demos(std::ostream& out, const std::vector<LabeledTrajectory>& demos,
                 const std::vector<std::string>& feature_names = {});
std::vector<LabeledTrajectory> read_demos(std::istream& in);

void save_demos(const std::filesystem::path& path, const std::vector<LabeledTrajectory>& demos,
                const std::vector<std::string>& feature_names = {});
std::vector<LabeledTrajectory> load_demos(const std::filesystem::path& path);

}  // namespace tgail::env
