#include "fit/iisa.hpp"

namespace fit {

bool is_frequency_subspace(const ModelConfig& cfg, std::size_t k) {
  // Mixed mode alternates, starting with a spatial projection at k = 0.
  return cfg.subspace_mode == SubspaceMode::Mixed && k % 2 == 1;
}

void init_iisa(ParamStore& store, const std::string& prefix, const ModelConfig& cfg, Rng& rng) {
  const std::size_t c = cfg.channels;
  init_fim(store, prefix + "fim.", c, rng);
  for (std::size_t k = 0; k < cfg.subspaces; ++k) {
    const std::size_t in = is_frequency_subspace(cfg, k) ? 2 * c : c;
    init_linear(store, prefix + "sub" + std::to_string(k), c / cfg.subspaces, in, rng, false);
  }
  init_linear(store, prefix + "fuse", c, c, rng);
  init_linear(store, prefix + "v", c, c, rng);
  init_linear(store, prefix + "pe1", cfg.pe_hidden, cfg.pe_width(), rng);
  init_linear(store, prefix + "pe2", cfg.heads, cfg.pe_hidden, rng);
}

IisaParams IisaParams::init(const ModelConfig& cfg, Rng& rng) {
  IisaParams p;
  init_iisa(p.store, "", cfg, rng);
  return p;
}

ad::Var project_subspaces(ad::Var z, const Scope& s, const ModelConfig& cfg) {
  const std::size_t c = z.dims()[0];
  if (cfg.subspaces != 0 && c % cfg.subspaces != 0) {
    throw ConfigError("subspaces (" + std::to_string(cfg.subspaces) + ") must divide channels (" +
                      std::to_string(c) + ")");
  }
  if (cfg.subspaces == 0) return ad::pconv(z, s("fuse.w"), s("fuse.b"));

  ad::Var spectrum_channels{};
  bool have_spectrum = false;
  std::vector<ad::Var> parts;
  for (std::size_t k = 0; k < cfg.subspaces; ++k) {
    const std::string w = "sub" + std::to_string(k) + ".w";
    if (is_frequency_subspace(cfg, k)) {
      if (!have_spectrum) {
        ad::Var f = ad::fft2(z);
        spectrum_channels = ad::concat0({ad::real_part(f), ad::imag_part(f)});
        have_spectrum = true;
      }
      parts.push_back(ad::pconv(spectrum_channels, s(w), s.none()));
    } else {
      parts.push_back(ad::pconv(z, s(w), s.none()));
    }
  }
  return ad::pconv(ad::concat0(parts), s("fuse.w"), s("fuse.b"));
}

Tensor project_subspaces(const Tensor& z, const IisaParams& p, const ModelConfig& cfg) {
  ad::Tape tape;
  return project_subspaces(tape.constant(z), Scope{&tape, &p.store, ""}, cfg).value();
}

IisaMaps iisa_maps(ad::Var z_fim, const Scope& s, const ModelConfig& cfg) {
  ad::Var zp = fim_forward(z_fim, s.sub("fim"));
  return {project_subspaces(zp, s, cfg), ad::pconv(zp, s("v.w"), s("v.b"))};
}

ad::Var positional_bias(const Tensor& queries, const Tensor& cells, const QueryGridBatch& grids,
                        const Scope& s, const ModelConfig& cfg) {
  const std::size_t n = queries.dim(0), g = grids.group;
  Tensor delta({n * g, 2}), cell({n * g, 2});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      const std::size_t r = i * g + j;
      delta.at(r, 0) = queries.at(i, 0) - grids.keys.at(r, 0);
      delta.at(r, 1) = queries.at(i, 1) - grids.keys.at(r, 1);
      cell.at(r, 0) = cells.at(i, 0);
      cell.at(r, 1) = cells.at(i, 1);
    }
  }
  ad::Var pe = s.tape->constant(pos_encode(delta, cell, positional_frequencies(cfg.pe_length)));
  ad::Var hidden = ad::relu(ad::linear(pe, s("pe1.w"), s("pe1.b")));
  return ad::linear(hidden, s("pe2.w"), s("pe2.b"));
}

ad::Var iisa_attend(ad::Var q_map, ad::Var v_map, const Tensor& queries, const Tensor& cells,
                    const Scope& s, const ModelConfig& cfg) {
  const Shape d = q_map.dims();
  const QueryGridBatch grids = make_query_grids(queries, d[1], d[2], cfg.grid_h, cfg.grid_w);
  ad::Var q = ad::bilinear_sample(q_map, queries);
  ad::Var k = ad::bilinear_sample(q_map, grids.keys);
  ad::Var v = ad::nearest_sample(v_map, grids.keys);
  ad::Var bias = positional_bias(queries, cells, grids, s, cfg);
  return ad::local_attention(q, k, v, bias, cfg.heads, 1.0 / cfg.attention_temperature());
}

Tensor iisa_attend(const Tensor& q_map, const Tensor& v_map, double qy, double qx, double cell_h,
                   double cell_w, const IisaParams& p, const ModelConfig& cfg) {
  ad::Tape tape;
  const Tensor queries({1, 2}, {qy, qx});
  const Tensor cells({1, 2}, {cell_h, cell_w});
  return iisa_attend(tape.constant(q_map), tape.constant(v_map), queries, cells,
                     Scope{&tape, &p.store, ""}, cfg)
      .value();
}

}  // namespace fit
