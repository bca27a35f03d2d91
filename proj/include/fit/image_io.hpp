#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fit/tensor.hpp"

namespace fit {

// 8-bit PNG -> (3, H, W) in [0, 1]. Grayscale is replicated to RGB and alpha
// is dropped. Throws FormatError on unreadable files.
Tensor read_png(const std::filesystem::path& path);

// (3, H, W) -> 8-bit RGB PNG; values are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Tensor& img);

// *.png files directly inside `dir` (case-insensitive extension), sorted.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

}  // namespace fit
