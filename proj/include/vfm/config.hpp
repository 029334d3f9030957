#pragma once

// Run configuration files (JSON). Unknown keys are rejected so that a typo
// cannot silently fall back to a default.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "vfm/experiment.hpp"

namespace vfm {

struct RunConfig {
  ExperimentConfig experiment;
  std::filesystem::path output_dir = "results";
};

TrainConfig parse_train_config(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json train_config_to_json(const TrainConfig& c);

RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& c);

// Throws Error(Usage) when the file is missing or malformed.
RunConfig load_run_config(const std::filesystem::path& path);

// Digest of the canonical JSON form; excludes output_dir and jobs, which do
// not change any reported number.
std::string config_digest(const RunConfig& c);
std::string config_digest(const TrainConfig& c, const NetSpec& net);

}  // namespace vfm
