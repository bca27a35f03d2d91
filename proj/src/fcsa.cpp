#include "fit/fcsa.hpp"

#include <cmath>
#include <cstdint>

namespace fit {

FcsaParams FcsaParams::init(std::size_t channels, Rng& rng) {
  ParamStore s;
  init_fcsa(s, "", channels, rng);
  return {s.at("qkv.w"), s.at("qkv.b")};
}

void FcsaParams::export_to(ParamStore& store, const std::string& prefix) const {
  if (qkv_w.rank() != 2 || qkv_w.dim(0) != 3 * qkv_w.dim(1)) {
    throw ShapeError("FCSA projection must map C -> 3C, got " + shape_str(qkv_w.dims()));
  }
  store.set(prefix + "qkv.w", qkv_w);
  store.set(prefix + "qkv.b", qkv_b);
}

void init_fcsa(ParamStore& store, const std::string& prefix, std::size_t channels, Rng& rng) {
  init_linear(store, prefix + "qkv", 3 * channels, channels, rng);
}

namespace {

struct Correlation {
  ad::Var weights;  // F_attn (N, N)
  ad::Var values;   // V tokens (N, C)
  ad::Var inverse;  // complex column inverse transforms before the real part
};

Correlation correlate(ad::Var z, const Scope& s, std::size_t max_tokens) {
  const Shape d = z.dims();
  const std::size_t c = d[0], h = d[1], w = d[2], n = h * w;
  if (n > max_tokens) {
    throw ConfigError("frequency correlation over " + std::to_string(n) + " tokens exceeds max_tokens=" +
                      std::to_string(max_tokens));
  }
  ad::Var qkv = ad::pconv(z, s("qkv.w"), s("qkv.b"));
  ad::Var q = ad::slice0(qkv, 0, c);
  ad::Var k = ad::slice0(qkv, c, c);
  ad::Var v = ad::slice0(qkv, 2 * c, c);

  ad::Var fq = ad::transpose(ad::reshape(ad::fft2(q), {c, n}));  // (N, C)
  ad::Var fk_t = ad::reshape(ad::fft2(k), {c, n});                 // (C, N)
  ad::Var corr = ad::cmatmul(fq, fk_t);                            // (N_a, N_b)

  // Column b of corr is a response over source positions a; invert it as an
  // H x W spectrum.
  ad::Var cols = ad::reshape(ad::transpose(corr), {n, h, w});
  ad::Var inverse = ad::ifft2(cols);
  ad::Var spatial = ad::real_part(inverse);
  ad::Var logits = ad::transpose(ad::reshape(spatial, {n, n}));
  ad::Var weights = ad::softmax_rows(ad::scale(logits, 1.0 / std::sqrt(static_cast<double>(c))));
  return {weights, ad::transpose(ad::reshape(v, {c, n})), inverse};
}

}  // namespace

ad::Var fcsa_map(ad::Var z, const Scope& s, std::size_t max_tokens) {
  const Shape d = z.dims();
  const std::size_t c = d[0], n = d[1] * d[2];
  Correlation corr = correlate(z, s, max_tokens);
  ad::Var attn = ad::matmul(corr.weights, corr.values);  // (N, C)
  ad::Var tokens = ad::transpose(ad::reshape(z, {c, n}));
  ad::Var skip = ad::add(attn, tokens);
  return ad::reshape(ad::transpose(skip), d);
}

Tensor fcsa_attention_weights(const Tensor& z, const FcsaParams& p) {
  ParamStore store;
  p.export_to(store, "");
  ad::Tape tape;
  return correlate(tape.constant(z), Scope{&tape, &store, ""}, SIZE_MAX).weights.value();
}

double fcsa_imag_residue_ratio(const Tensor& z, const FcsaParams& p) {
  ParamStore store;
  p.export_to(store, "");
  ad::Tape tape;
  ad::Var inv = correlate(tape.constant(z), Scope{&tape, &store, ""}, SIZE_MAX).inverse;
  const double re = max_abs(inv.value());
  return re > 0.0 ? max_abs(inv.imag()) / re : 0.0;
}

ad::Var fcsa_sample(ad::Var attn_map, const Tensor& grid_centers) {
  return ad::nearest_sample(attn_map, grid_centers);
}

Tensor fcsa_forward(const Tensor& z, const QueryGrid& grid, const FcsaParams& p, std::size_t max_tokens) {
  ParamStore store;
  p.export_to(store, "");
  ad::Tape tape;
  ad::Var map = fcsa_map(tape.constant(z), Scope{&tape, &store, ""}, max_tokens);
  return fcsa_sample(map, Tensor({1, 2}, {grid.center_y, grid.center_x})).value();
}

}  // namespace fit
