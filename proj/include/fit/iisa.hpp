#pragma once

#include <string>
#include <vector>

#include "fit/coords.hpp"
#include "fit/fim.hpp"
#include "fit/model_config.hpp"

namespace fit {

// Parameter names under the IISA prefix:
//   fim.*              inner frequency incorporation (produces Z'_FIM)
//   sub<k>.w           subspace projection, (C/s, C) spatial or (C/s, 2C) frequency
//   fuse.w, fuse.b     linear fusion C -> C
//   v.w, v.b           value projection C -> C
//   pe1.*, pe2.*       positional-bias MLP (4p+2) -> hidden -> heads
struct IisaParams {
  ParamStore store;  // names relative to the IISA prefix

  static IisaParams init(const ModelConfig& cfg, Rng& rng);
};

void init_iisa(ParamStore& store, const std::string& prefix, const ModelConfig& cfg, Rng& rng);

// True when subspace k projects the spectrum rather than the spatial map.
bool is_frequency_subspace(const ModelConfig& cfg, std::size_t k);

// Q map: subspace projections of z concatenated channel-wise, then fused.
ad::Var project_subspaces(ad::Var z, const Scope& scope, const ModelConfig& cfg);
Tensor project_subspaces(const Tensor& z, const IisaParams& p, const ModelConfig& cfg);

struct IisaMaps {
  ad::Var q_map;  // (C, H, W)
  ad::Var v_map;  // (C, H, W)
};
// Inner FIM, subspace projection and value projection of Z_FIM.
IisaMaps iisa_maps(ad::Var z_fim, const Scope& scope, const ModelConfig& cfg);

// Per-head positional logits (n*G, heads) from query/key offsets and cells.
ad::Var positional_bias(const Tensor& queries, const Tensor& cells, const QueryGridBatch& grids,
                        const Scope& scope, const ModelConfig& cfg);

// Coordinate-conditioned attention for n HR queries -> (n, C).
ad::Var iisa_attend(ad::Var q_map, ad::Var v_map, const Tensor& queries, const Tensor& cells,
                    const Scope& scope, const ModelConfig& cfg);

// Single query convenience: (1, C).
Tensor iisa_attend(const Tensor& q_map, const Tensor& v_map, double qy, double qx, double cell_h,
                   double cell_w, const IisaParams& p, const ModelConfig& cfg);

}  // namespace fit
