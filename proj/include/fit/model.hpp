#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fit/fcsa.hpp"
#include "fit/fim.hpp"
#include "fit/iisa.hpp"
#include "fit/model_config.hpp"

namespace fit {

// Every trainable tensor of the network, keyed by dotted name:
//   enc.head.*, enc.body<i>.*   encoder convolutions
//   fim<i>.*                    frequency incorporation blocks
//   iisa.*                      interaction implicit self-attention
//   fcsa.*                      frequency correlation self-attention
//   dec.<i>.*, dec.out.*        coordinate decoder MLP
struct ModelParams {
  ModelConfig config;
  ParamStore store;
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
  // Verifies the store holds exactly the expected names and shapes.
  void check() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

std::vector<std::pair<std::string, Shape>> expected_param_shapes(const ModelConfig& cfg);

// Output extents (round(eta_h * H), round(eta_w * W)).
std::pair<std::size_t, std::size_t> output_size(std::size_t h, std::size_t w, double eta_h, double eta_w);

ad::Var encoder_forward(ad::Var img, const Scope& scope, const ModelConfig& cfg);
Tensor encoder_forward(const Tensor& img, const ModelParams& p);

// Per-image maps shared by every query of that image.
struct ImageFeatures {
  ad::Var q_map;     // IISA query/key source
  ad::Var v_map;     // IISA values
  ad::Var attn_map;  // FCSA output before grid sampling
};
ImageFeatures image_features(ad::Var img, const Scope& scope, const ModelConfig& cfg);

// Z_IISA + Z_FCSA for n queries sharing one query-grid layout -> (n, C).
ad::Var fusam_forward(const ImageFeatures& f, const Tensor& queries, const Tensor& cells,
                      const Scope& scope, const ModelConfig& cfg);

ad::Var decoder_forward(ad::Var z, const Scope& scope, const ModelConfig& cfg);
Tensor decoder_forward(const Tensor& z, const ModelParams& p);

// Decoder residual plus the bilinear skip from the LR image -> (n, 3).
ad::Var predict_rgb(const ImageFeatures& f, const Tensor& img_lr, const Tensor& queries,
                    const Tensor& cells, const Scope& scope, const ModelConfig& cfg);

// LR image sampled bilinearly at every HR pixel center.
Tensor bilinear_upsample(const Tensor& img, double eta_h, double eta_w);

// Full arbitrary-scale inference. Queries are evaluated in independent chunks,
// optionally on `threads` workers; results do not depend on the thread count.
Tensor fit_forward(const Tensor& img_lr, double eta_h, double eta_w, const ModelParams& p,
                   std::size_t threads = 1);

}  // namespace fit
