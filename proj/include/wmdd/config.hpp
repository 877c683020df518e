#pragma once

// Flat JSON configuration mirroring TrainConfig field names. Unknown keys
// and mistyped values are rejected with ConfigError naming the key.

#include <filesystem>
#include <string>

#include "wmdd/trainer.hpp"

namespace wmdd {

// Relative manifest paths are resolved against `base_dir`.
TrainConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
TrainConfig load_config(const std::filesystem::path& path);

// Every field, manifest path made absolute; loading it reproduces `config`.
std::string config_to_json(const TrainConfig& config);

}  // namespace wmdd
