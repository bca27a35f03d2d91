#pragma once

#include <cstddef>
#include <string>

namespace fit {

enum class SubspaceMode {
  Mixed,    // alternating spatial / frequency projections
  Spatial,  // every subspace projects the spatial map
};

const char* to_string(SubspaceMode m);
SubspaceMode subspace_mode_from_string(const std::string& s);

struct ModelConfig {
  std::size_t channels = 16;
  std::size_t encoder_depth = 4;
  std::size_t fim_blocks = 2;
  std::size_t subspaces = 4;  // 0 disables the subspace projection
  SubspaceMode subspace_mode = SubspaceMode::Mixed;
  std::size_t heads = 8;
  std::size_t pe_length = 10;
  std::size_t pe_hidden = 64;
  std::size_t grid_h = 3;
  std::size_t grid_w = 3;
  std::size_t decoder_hidden = 64;
  std::size_t decoder_depth = 2;
  // Upper bound on LR tokens (H * W) for the dense frequency-correlation map.
  std::size_t max_tokens = 4096;

  std::size_t head_dim() const { return channels / heads; }
  std::size_t pe_width() const { return 4 * pe_length + 2; }
  // Attention temperature sqrt(d_k / H) with d_k the key width.
  double attention_temperature() const;

  // Throws ConfigError naming the violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace fit
