#pragma once

#include "tgail/diffcore.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace tgail {

/// Binary checkpoint: magic "SKG1", format version, string metadata, then
/// named float64 arrays. Values round-trip bit-exactly.
struct Checkpoint {
  static constexpr char kMagic[4] = {'S', 'K', 'G', '1'};
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> meta;
  ad::ParamSet params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);

/// Throws std::runtime_error on a missing file, bad magic or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint deserialize_checkpoint(const std::string& bytes);

/// Copies every entry of `src` into `dst` under "<prefix><name>".
void append_prefixed(ad::ParamSet& dst, const ad::ParamSet& src, const std::string& prefix);

/// Entries of `src` whose names start with `prefix`, with the prefix removed.
ad::ParamSet extract_prefixed(const ad::ParamSet& src, const std::string& prefix);

}  // namespace tgail
