#pragma once

#include <string>

#include "fit/coords.hpp"
#include "fit/layers.hpp"
#include "fit/model_config.hpp"

namespace fit {

// Parameter names under the FCSA prefix: qkv.w (3C, C), qkv.b (3C).
struct FcsaParams {
  Tensor qkv_w;
  Tensor qkv_b;

  static FcsaParams init(std::size_t channels, Rng& rng);
  void export_to(ParamStore& store, const std::string& prefix) const;
};

void init_fcsa(ParamStore& store, const std::string& prefix, std::size_t channels, Rng& rng);

// Global attention map over all LR tokens, returned as (C, H, W):
//   M = F(Q) F(K)^T over flattened tokens (plain transpose),
//   each column of M inverse-transformed in the H x W geometry, real part,
//   scaled by 1/sqrt(C), row softmax -> F_attn; Attn = F_attn V + z.
ad::Var fcsa_map(ad::Var z, const Scope& scope, std::size_t max_tokens);

// Row-normalized correlation F_attn (N, N) on its own, for inspection.
Tensor fcsa_attention_weights(const Tensor& z, const FcsaParams& p);

// max |Im| / max |Re| of the column inverse transforms; the imaginary part is
// discarded, this reports how much.
double fcsa_imag_residue_ratio(const Tensor& z, const FcsaParams& p);

// Attn sampled at each query grid center -> (n, C).
ad::Var fcsa_sample(ad::Var attn_map, const Tensor& grid_centers);

// Single query grid -> (1, C).
Tensor fcsa_forward(const Tensor& z, const QueryGrid& grid, const FcsaParams& p,
                    std::size_t max_tokens = 4096);

}  // namespace fit
