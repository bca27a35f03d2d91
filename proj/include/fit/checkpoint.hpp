#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "fit/model.hpp"

namespace fit {

// Binary layout, all integers u32 little-endian:
//   "FITC" | version | config length | config text (key=value lines)
//   | entry count | per entry: name length, name, rank, dims..., f32 LE data
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ModelParams& p);
// Throws FormatError on bad magic, unsupported version or truncation.
ModelParams deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& p);
ModelParams load_checkpoint(const std::filesystem::path& path);

// Rounds every parameter to float32, the precision a checkpoint keeps.
ModelParams to_float32(const ModelParams& p);

}  // namespace fit
