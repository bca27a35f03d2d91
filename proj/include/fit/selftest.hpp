#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fit/model_config.hpp"

namespace fit {

struct CheckLine {
  std::string name;
  double value = 0.0;
  double limit = 0.0;  // passes when value < limit
  std::string detail{};  // shown on failure
  bool pass() const { return value < limit; }
};

struct GroupReport {
  std::string group;
  std::vector<CheckLine> checks;
  double seconds = 0.0;
  bool pass() const;
  std::string summary() const;  // one line
};

// Model configuration used by gradient and shape checks: the default layout
// with 8 channels and narrow MLPs.
ModelConfig check_config();

// Naive-DFT agreement on every size up to 8x8 plus 48x48, 7x5 and 17x13;
// roundtrip, Parseval, unitarity and linearity.
GroupReport fft_group();
// Central-difference checks per module (< 1e-4) and end to end (< 1e-3).
GroupReport gradient_group(std::uint64_t seed = 3);
// iisa_attend and fcsa_forward against scalar-loop oracles.
GroupReport attention_group(std::size_t instances = 20, std::uint64_t seed = 11);
// Output extents for every (scale, size) pair of the shape law.
GroupReport shape_group();

std::vector<GroupReport> run_selftest();

}  // namespace fit
