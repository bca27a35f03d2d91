#include "fit/model_config.hpp"

#include <cmath>

#include "fit/errors.hpp"

namespace fit {

const char* to_string(SubspaceMode m) { return m == SubspaceMode::Mixed ? "mixed" : "spatial"; }

SubspaceMode subspace_mode_from_string(const std::string& s) {
  if (s == "mixed") return SubspaceMode::Mixed;
  if (s == "spatial") return SubspaceMode::Spatial;
  throw ConfigError("subspace_mode must be 'mixed' or 'spatial', got '" + s + "'");
}

double ModelConfig::attention_temperature() const {
  return std::sqrt(static_cast<double>(channels) / static_cast<double>(heads));
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (channels == 0) fail("channels must be >= 1");
  if (heads == 0 || channels % heads != 0) {
    fail("heads (" + std::to_string(heads) + ") must divide channels (" + std::to_string(channels) + ")");
  }
  if (subspaces % 2 != 0) fail("subspaces must be even, got " + std::to_string(subspaces));
  if (subspaces != 0 && channels % subspaces != 0) {
    fail("subspaces (" + std::to_string(subspaces) + ") must divide channels (" +
         std::to_string(channels) + ")");
  }
  if (grid_h == 0 || grid_w == 0 || grid_h % 2 == 0 || grid_w % 2 == 0) {
    fail("query grid extents must be odd, got " + std::to_string(grid_h) + "x" + std::to_string(grid_w));
  }
  if (encoder_depth == 0) fail("encoder_depth must be >= 1");
  if (pe_length == 0) fail("pe_length must be >= 1");
  if (pe_hidden == 0) fail("pe_hidden must be >= 1");
  if (decoder_hidden == 0) fail("decoder_hidden must be >= 1");
  if (max_tokens == 0) fail("max_tokens must be >= 1");
  const double head_width = static_cast<double>(head_dim());
  if (std::abs(attention_temperature() - std::sqrt(head_width)) > 1e-12) {
    fail("attention temperature does not match sqrt(head dimension)");
  }
}

}  // namespace fit
