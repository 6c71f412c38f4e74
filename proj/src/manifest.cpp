#include "secokd/cli/manifest.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace secokd::cli {

using nlohmann::json;

std::string fnv64_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string fnv64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("fnv64_file: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv64_hex(bytes);
}

RunManifest RunManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  json j;
  in >> j;
  RunManifest m;
  m.config_snapshot = j.at("config");
  m.config_hash = j.at("config_hash").get<std::string>();
  m.version = j.at("version").get<std::string>();
  for (const auto& [key, sj] : j.at("stages").items()) {
    StageRecord rec;
    rec.done = sj.at("done").get<bool>();
    for (const auto& aj : sj.at("artifacts")) {
      rec.artifacts.push_back(
          ArtifactRecord{aj.at("path").get<std::string>(), aj.at("hash").get<std::string>()});
    }
    m.stages[key] = std::move(rec);
  }
  return m;
}

void RunManifest::save(const std::string& path) const {
  json stages_json = json::object();
  for (const auto& [key, rec] : stages) {
    json artifacts = json::array();
    for (const auto& a : rec.artifacts) {
      artifacts.push_back({{"path", a.path}, {"hash", a.hash}});
    }
    stages_json[key] = {{"done", rec.done}, {"artifacts", std::move(artifacts)}};
  }
  const json j = {{"config", config_snapshot},
                  {"config_hash", config_hash},
                  {"version", version},
                  {"stages", std::move(stages_json)}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("manifest: cannot write " + path);
  out << j.dump(2) << "\n";
}

bool RunManifest::stage_done(const std::string& key, const std::string& root) const {
  const auto it = stages.find(key);
  if (it == stages.end() || !it->second.done) return false;
  for (const auto& a : it->second.artifacts) {
    const auto full = std::filesystem::path(root) / a.path;
    if (!std::filesystem::exists(full)) return false;
    if (fnv64_file(full.string()) != a.hash) return false;
  }
  return true;
}

void RunManifest::record_stage(const std::string& key, const std::string& root,
                               const std::vector<std::string>& relative_paths) {
  StageRecord rec;
  rec.done = true;
  for (const auto& rel : relative_paths) {
    const auto full = std::filesystem::path(root) / rel;
    rec.artifacts.push_back(ArtifactRecord{rel, fnv64_file(full.string())});
  }
  stages[key] = std::move(rec);
}

void RunManifest::require_stage(const std::string& key, const std::string& root,
                                const std::string& wanted_by) const {
  const auto it = stages.find(key);
  if (it == stages.end() || !it->second.done) {
    throw std::runtime_error(wanted_by + ": required stage '" + key + "' has not completed");
  }
  for (const auto& a : it->second.artifacts) {
    const auto full = std::filesystem::path(root) / a.path;
    if (!std::filesystem::exists(full)) {
      throw std::runtime_error(wanted_by + ": missing artifact " + full.string() +
                               " from stage '" + key + "'");
    }
  }
}

}  // namespace secokd::cli
