#include "fit/model.hpp"

#include <cmath>
#include <set>

#include "fit/parallel.hpp"

namespace fit {

namespace {

std::string body_name(std::size_t i) { return "enc.body" + std::to_string(i); }
std::string fim_name(std::size_t i) { return "fim" + std::to_string(i) + "."; }
std::string dec_name(std::size_t i) { return "dec." + std::to_string(i); }

constexpr std::size_t kQueryChunk = 1024;

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  p.seed = seed;
  Rng rng(seed);
  const std::size_t c = cfg.channels;
  init_conv(p.store, "enc.head", c, 3, 3, rng);
  for (std::size_t i = 1; i < cfg.encoder_depth; ++i) init_conv(p.store, body_name(i), c, c, 3, rng);
  for (std::size_t i = 0; i < cfg.fim_blocks; ++i) init_fim(p.store, fim_name(i), c, rng);
  init_iisa(p.store, "iisa.", cfg, rng);
  init_fcsa(p.store, "fcsa.", c, rng);
  std::size_t in = c;
  for (std::size_t i = 0; i < cfg.decoder_depth; ++i) {
    init_linear(p.store, dec_name(i), cfg.decoder_hidden, in, rng);
    in = cfg.decoder_hidden;
  }
  init_linear(p.store, "dec.out", 3, in, rng);
  return p;
}

std::vector<std::pair<std::string, Shape>> expected_param_shapes(const ModelConfig& cfg) {
  // Built from a zero-seed init so the naming logic lives in one place.
  ModelParams p = ModelParams::init(cfg, 0);
  std::vector<std::pair<std::string, Shape>> out;
  for (const auto& [name, t] : p.store) out.emplace_back(name, t.dims());
  return out;
}

void ModelParams::check() const {
  config.validate();
  const auto expected = expected_param_shapes(config);
  std::set<std::string> names;
  for (const auto& [name, dims] : expected) {
    store.require(name, dims);
    names.insert(name);
  }
  for (const auto& [name, _] : store) {
    if (!names.count(name)) throw ShapeError("unexpected parameter '" + name + "'");
  }
}

std::pair<std::size_t, std::size_t> output_size(std::size_t h, std::size_t w, double eta_h, double eta_w) {
  if (!(eta_h >= 1.0) || !(eta_w >= 1.0)) {
    throw UsageError("scale factors must be >= 1, got " + std::to_string(eta_h) + "," + std::to_string(eta_w));
  }
  return {static_cast<std::size_t>(std::lround(eta_h * static_cast<double>(h))),
          static_cast<std::size_t>(std::lround(eta_w * static_cast<double>(w)))};
}

ad::Var encoder_forward(ad::Var img, const Scope& s, const ModelConfig& cfg) {
  ad::Var x = ad::conv2d(img, s("enc.head.w"), s("enc.head.b"));
  for (std::size_t i = 1; i < cfg.encoder_depth; ++i) {
    const std::string n = body_name(i);
    x = ad::add(x, ad::conv2d(ad::relu(x), s(n + ".w"), s(n + ".b")));
  }
  return x;
}

Tensor encoder_forward(const Tensor& img, const ModelParams& p) {
  ad::Tape tape;
  return encoder_forward(tape.constant(img), Scope{&tape, &p.store, ""}, p.config).value();
}

ImageFeatures image_features(ad::Var img, const Scope& s, const ModelConfig& cfg) {
  ad::Var z_in = encoder_forward(img, s, cfg);
  ad::Var z = z_in;
  for (std::size_t i = 0; i < cfg.fim_blocks; ++i) z = fim_forward(z, Scope{s.tape, s.store, s.prefix + fim_name(i)});
  ad::Var z_fim = ad::add(z, z_in);
  IisaMaps maps = iisa_maps(z_fim, s.sub("iisa"), cfg);
  ad::Var attn = fcsa_map(z_fim, s.sub("fcsa"), cfg.max_tokens);
  return {maps.q_map, maps.v_map, attn};
}

ad::Var fusam_forward(const ImageFeatures& f, const Tensor& queries, const Tensor& cells, const Scope& s,
                      const ModelConfig& cfg) {
  const Shape d = f.q_map.dims();
  ad::Var iisa = iisa_attend(f.q_map, f.v_map, queries, cells, s.sub("iisa"), cfg);
  const QueryGridBatch grids = make_query_grids(queries, d[1], d[2], cfg.grid_h, cfg.grid_w);
  ad::Var fcsa = fcsa_sample(f.attn_map, grids.centers);
  return ad::add(iisa, fcsa);
}

ad::Var decoder_forward(ad::Var z, const Scope& s, const ModelConfig& cfg) {
  ad::Var x = z;
  for (std::size_t i = 0; i < cfg.decoder_depth; ++i) {
    const std::string n = dec_name(i);
    x = ad::relu(ad::linear(x, s(n + ".w"), s(n + ".b")));
  }
  return ad::linear(x, s("dec.out.w"), s("dec.out.b"));
}

Tensor decoder_forward(const Tensor& z, const ModelParams& p) {
  ad::Tape tape;
  return decoder_forward(tape.constant(z), Scope{&tape, &p.store, ""}, p.config).value();
}

ad::Var predict_rgb(const ImageFeatures& f, const Tensor& img_lr, const Tensor& queries, const Tensor& cells,
                    const Scope& s, const ModelConfig& cfg) {
  ad::Var residual = decoder_forward(fusam_forward(f, queries, cells, s, cfg), s, cfg);
  return ad::add(residual, s.tape->constant(bilinear_sample(img_lr, queries)));
}

Tensor bilinear_upsample(const Tensor& img, double eta_h, double eta_w) {
  if (img.rank() != 3) throw ShapeError("bilinear_upsample expects (C, H, W), got " + shape_str(img.dims()));
  const auto [oh, ow] = output_size(img.dim(1), img.dim(2), eta_h, eta_w);
  const Tensor samples = bilinear_sample(img, make_coord_grid(oh, ow).coords);  // (oh*ow, C)
  return transpose(samples).reshaped({img.dim(0), oh, ow});
}

Tensor fit_forward(const Tensor& img_lr, double eta_h, double eta_w, const ModelParams& p, std::size_t threads) {
  if (img_lr.rank() != 3 || img_lr.dim(0) != 3) {
    throw ShapeError("fit_forward expects a (3, H, W) image, got " + shape_str(img_lr.dims()));
  }
  const std::size_t h = img_lr.dim(1), w = img_lr.dim(2);
  const auto [oh, ow] = output_size(h, w, eta_h, eta_w);
  const auto [cell_h, cell_w] = cell_for_scale(eta_h, eta_w, h, w);
  const CoordGrid grid = make_coord_grid(oh, ow);

  Tensor q_map, v_map, attn_map;
  {
    ad::Tape tape;
    ImageFeatures f = image_features(tape.constant(img_lr), Scope{&tape, &p.store, ""}, p.config);
    q_map = f.q_map.value();
    v_map = f.v_map.value();
    attn_map = f.attn_map.value();
  }

  const std::size_t total = oh * ow;
  const std::size_t chunks = (total + kQueryChunk - 1) / kQueryChunk;
  Tensor out({3, oh, ow});
  parallel_for(chunks, threads, [&](std::size_t ci) {
    const std::size_t begin = ci * kQueryChunk, n = std::min(kQueryChunk, total - begin);
    Tensor queries({n, 2}), cells({n, 2});
    for (std::size_t i = 0; i < n; ++i) {
      queries.at(i, 0) = grid.coords.at(begin + i, 0);
      queries.at(i, 1) = grid.coords.at(begin + i, 1);
      cells.at(i, 0) = cell_h;
      cells.at(i, 1) = cell_w;
    }
    ad::Tape tape;
    ImageFeatures f{tape.constant(q_map), tape.constant(v_map), tape.constant(attn_map)};
    const Tensor rgb = predict_rgb(f, img_lr, queries, cells, Scope{&tape, &p.store, ""}, p.config).value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < 3; ++ch) out[ch * total + begin + i] = rgb.at(i, ch);
  });
  return out;
}

}  // namespace fit
