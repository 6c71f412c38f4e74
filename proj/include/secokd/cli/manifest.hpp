#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace secokd::cli {

inline constexpr const char* kCodeVersion = "0.1.0";

std::string fnv64_hex(const std::string& bytes);
std::string fnv64_file(const std::string& path);  // throws when missing

struct ArtifactRecord {
  std::string path;  // relative to the run root
  std::string hash;
};

struct StageRecord {
  bool done = false;
  std::vector<ArtifactRecord> artifacts;
};

// Records which stages completed and what they produced. A stage only counts
// as done when every recorded artifact still exists with its recorded hash,
// so post-hoc modification forces a recompute.
struct RunManifest {
  nlohmann::json config_snapshot;
  std::string config_hash;
  std::string version = kCodeVersion;
  std::map<std::string, StageRecord> stages;

  static RunManifest load(const std::string& path);
  void save(const std::string& path) const;

  bool stage_done(const std::string& key, const std::string& root) const;
  void record_stage(const std::string& key, const std::string& root,
                    const std::vector<std::string>& relative_paths);
  // Throws naming the first missing artifact of the stage.
  void require_stage(const std::string& key, const std::string& root,
                     const std::string& wanted_by) const;
};

}  // namespace secokd::cli
