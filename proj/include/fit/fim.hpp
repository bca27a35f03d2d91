#pragma once

#include <string>
#include <utility>

#include "fit/layers.hpp"

namespace fit {

// Frequency incorporation: FFT, independent real/imaginary 3x3 convolutions,
// spectral skip, inverse FFT, pointwise modulation of the real part.
struct FimParams {
  Tensor conv_re_w, conv_re_b;  // (C, C, 3, 3), (C)
  Tensor conv_im_w, conv_im_b;
  Tensor pconv_w, pconv_b;      // (C, C), (C)

  static FimParams init(std::size_t channels, Rng& rng);
  // Centered-impulse convolutions and identity modulation.
  static FimParams identity(std::size_t channels);

  void export_to(ParamStore& store, const std::string& prefix) const;
  static FimParams import_from(const ParamStore& store, const std::string& prefix);
};

void init_fim(ParamStore& store, const std::string& prefix, std::size_t channels, Rng& rng);

ad::Var fim_forward(ad::Var z_in, const Scope& scope);
Tensor fim_forward(const Tensor& z_in, const FimParams& p);

// Complexification and its inverse; both exact copies of the planes.
CTensor comp(const Tensor& re, const Tensor& im);
std::pair<Tensor, Tensor> split(const CTensor& z);

}  // namespace fit
