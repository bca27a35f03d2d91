#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fit/model_config.hpp"
#include "fit/train.hpp"

namespace fit {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// Line-oriented key=value text. Blank lines and '#' comments are skipped.
// Duplicate keys are an error.
std::map<std::string, std::string> parse_key_values(const std::string& text);

// Applies key=value pairs on top of the defaults. Unknown keys are rejected
// together, by name; values are validated afterwards.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Every addressable key, model fields first.
std::vector<std::string> config_keys();

std::string to_text(const ModelConfig& cfg);
std::string to_text(const RunConfig& cfg);

// Reads model keys only; other keys are left in `rest`.
ModelConfig model_config_from(const std::map<std::string, std::string>& kv,
                              std::map<std::string, std::string>* rest = nullptr);

// Strict numeric parsing shared by the config and CLI layers.
std::size_t parse_size(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
std::string format_double(double v);

}  // namespace fit
