#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthcal/scene.hpp"

namespace depthcal {

using Json = nlohmann::json;

/// Scene description. Every key is optional; missing keys keep the value of
/// `base` (default_scene() when loading files). Unknown keys are rejected.
SceneConfig scene_from_json(const Json& j, const SceneConfig& base);
SceneConfig scene_from_json(const Json& j);
Json scene_to_json(const SceneConfig& cfg);

/// Reads a scene file. Throws ConfigError on a missing file or bad content.
SceneConfig load_scene(const std::filesystem::path& path);

Json training_to_json(const TrainingConfig& cfg);
TrainingConfig training_from_json(const Json& j, const TrainingConfig& base = {});
Json kalman_to_json(const KalmanConfig& cfg);
KalmanConfig kalman_from_json(const Json& j, const KalmanConfig& base = {});

Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols);

/// 64-bit FNV-1a of the canonical (sorted-key, compact) dump, as 16 hex digits.
std::string config_hash(const Json& j);

inline constexpr const char* kToolVersion = "1.0.0";

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::string tool_version = kToolVersion;
  std::string timestamp;  // UTC, ISO 8601
  std::vector<std::string> outputs;

  Json to_json() const;
  void write(const std::filesystem::path& path) const;
};

std::string utc_timestamp();

}  // namespace depthcal
