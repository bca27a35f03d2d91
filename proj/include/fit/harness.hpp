#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fit/tensor.hpp"

namespace fit {

// HR image cropped so the LR side lengths scale back exactly, and its LR
// counterpart: antialiased bicubic downsampling, quantized to 8 bits.
struct EvalPair {
  Tensor hr;
  Tensor lr;
};
EvalPair make_eval_pair(const Tensor& hr, double eta);

// Maps an LR image to an HR estimate at isotropic scale eta.
using Upscaler = std::function<Tensor(const Tensor& lr, double eta)>;

struct EvalOptions {
  std::vector<double> scales;
  int shave = -1;  // border pixels ignored by PSNR; -1 means ceil(eta) + 6
  bool luma = false;
  std::size_t threads = 1;
};

struct EvalRow {
  std::string image;
  std::vector<double> psnr;  // one per scale
};

struct EvalTable {
  std::vector<double> scales;
  std::vector<EvalRow> rows;  // sorted by file name
  std::vector<double> mean;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;

  // image,x2,x3,... then a mean row and a trailing "# images=N skipped=M".
  std::string to_csv() const;
};

EvalTable evaluate_directory(const std::filesystem::path& hr_dir, const Upscaler& up, const EvalOptions& opt);

std::string scale_label(double eta);

}  // namespace fit
