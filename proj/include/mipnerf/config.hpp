#pragma once

#include "mipnerf/trainer.hpp"

#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mipnerf {

/// Bad config text, unknown key or unparsable value.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Flat `key = value` lines; `#` starts a comment. Later lines override earlier ones
/// when applied.
KeyValues parse_key_values(std::istream& in, const std::string& source = "<config>");
KeyValues read_config_file(const std::filesystem::path& path);

/// "key=value" from the command line.
std::pair<std::string, std::string> parse_override(const std::string& text);

/// Every recognized TrainConfig key, in canonical order.
const std::vector<std::string>& config_keys();

/// Applies entries in order. Unknown keys are rejected by exact name.
void apply_config(TrainConfig& config, const KeyValues& entries);

/// Canonical key/value rendering of a config (round-trips through apply_config).
KeyValues config_entries(const TrainConfig& config);

std::string format_config(const TrainConfig& config);

}  // namespace mipnerf
