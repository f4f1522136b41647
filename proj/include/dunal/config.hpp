#pragma once

#include <filesystem>

#include <json.hpp>

#include "dunal/harness.hpp"

namespace dunal {

/// Strict reader: unknown keys are rejected so typos surface as errors.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Relative dataset paths resolve against $DUN_DATA_DIR when set, otherwise
/// against the config file's directory.
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace dunal
