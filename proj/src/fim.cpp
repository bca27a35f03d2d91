#include "fit/fim.hpp"

namespace fit {

namespace {

Tensor impulse_kernel(std::size_t c) {
  Tensor k({c, c, 3, 3});
  for (std::size_t i = 0; i < c; ++i) k[((i * c + i) * 3 + 1) * 3 + 1] = 1.0;
  return k;
}

Tensor identity_matrix(std::size_t c) {
  Tensor m({c, c});
  for (std::size_t i = 0; i < c; ++i) m.at(i, i) = 1.0;
  return m;
}

}  // namespace

FimParams FimParams::init(std::size_t channels, Rng& rng) {
  ParamStore s;
  init_fim(s, "", channels, rng);
  return import_from(s, "");
}

FimParams FimParams::identity(std::size_t c) {
  return {impulse_kernel(c), Tensor({c}), impulse_kernel(c), Tensor({c}), identity_matrix(c), Tensor({c})};
}

void FimParams::export_to(ParamStore& store, const std::string& prefix) const {
  store.set(prefix + "conv_re.w", conv_re_w);
  store.set(prefix + "conv_re.b", conv_re_b);
  store.set(prefix + "conv_im.w", conv_im_w);
  store.set(prefix + "conv_im.b", conv_im_b);
  store.set(prefix + "pconv.w", pconv_w);
  store.set(prefix + "pconv.b", pconv_b);
}

FimParams FimParams::import_from(const ParamStore& store, const std::string& prefix) {
  FimParams p{store.at(prefix + "conv_re.w"), store.at(prefix + "conv_re.b"),
              store.at(prefix + "conv_im.w"), store.at(prefix + "conv_im.b"),
              store.at(prefix + "pconv.w"),   store.at(prefix + "pconv.b")};
  if (p.conv_re_w.dims() != p.conv_im_w.dims()) {
    throw ShapeError("FIM real/imaginary kernels differ: " + shape_str(p.conv_re_w.dims()) + " vs " +
                     shape_str(p.conv_im_w.dims()));
  }
  return p;
}

void init_fim(ParamStore& store, const std::string& prefix, std::size_t channels, Rng& rng) {
  init_conv(store, prefix + "conv_re", channels, channels, 3, rng);
  init_conv(store, prefix + "conv_im", channels, channels, 3, rng);
  init_linear(store, prefix + "pconv", channels, channels, rng);
}

ad::Var fim_forward(ad::Var z_in, const Scope& s) {
  ad::Var spec = ad::fft2(z_in);
  ad::Var re = ad::conv2d(ad::real_part(spec), s("conv_re.w"), s("conv_re.b"));
  ad::Var im = ad::conv2d(ad::imag_part(spec), s("conv_im.w"), s("conv_im.b"));
  // Skip operand is the input spectrum, added in the frequency domain.
  ad::Var mixed = ad::ifft2(ad::add(ad::comp(re, im), spec));
  return ad::pconv(ad::real_part(mixed), s("pconv.w"), s("pconv.b"));
}

Tensor fim_forward(const Tensor& z_in, const FimParams& p) {
  ParamStore store;
  p.export_to(store, "");
  ad::Tape tape;
  return fim_forward(tape.constant(z_in), Scope{&tape, &store, ""}).value();
}

CTensor comp(const Tensor& re, const Tensor& im) { return CTensor(re, im); }

std::pair<Tensor, Tensor> split(const CTensor& z) { return {z.re, z.im}; }

}  // namespace fit
