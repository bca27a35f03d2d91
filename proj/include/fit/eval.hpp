#pragma once

#include <cstddef>
#include <vector>

#include "fit/tensor.hpp"

namespace fit {

// Returned when the mean squared error is below 1e-12.
inline constexpr double kPsnrCap = 99.0;

// Rec. 601 luma of a (3, H, W) image -> (1, H, W).
Tensor luma(const Tensor& rgb);

// Drops `border` pixels from every side of a (C, H, W) image.
Tensor shave(const Tensor& img, std::size_t border);

// Both images are clamped to [0, peak] first. With use_luma the comparison is
// on the luma channel only.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0, bool use_luma = false);

// Resampling taps for one output sample along one axis.
struct ResampleTaps {
  std::vector<std::size_t> index;  // edge-clamped source indices
  std::vector<double> weight;      // normalized to sum 1
};

// Cubic convolution kernel with a = -0.5.
double cubic_kernel(double x);

// Taps mapping an axis of length n_in to n_out at magnification `scale`, with
// pixel-center alignment. When antialias is set and scale < 1 the kernel is
// stretched by 1/scale.
std::vector<ResampleTaps> cubic_taps(std::size_t n_in, std::size_t n_out, double scale,
                                     bool antialias = true);

// Separable bicubic resampling to (C, round(eta_h * H), round(eta_w * W)).
Tensor bicubic_resize(const Tensor& img, double eta_h, double eta_w, bool antialias = true);
// Explicit output size; scale is taken as out / in per axis.
Tensor bicubic_resize_to(const Tensor& img, std::size_t out_h, std::size_t out_w, bool antialias = true);

// |log(1 + |F(sr_y)|) - log(1 + |F(hr_y)|)| on luma, DC centered -> (H, W).
Tensor frequency_error_map(const Tensor& sr, const Tensor& hr);

// Red for the largest error, green for none; linear in between -> (3, H, W).
Tensor render_error_map(const Tensor& map);

// Rounds to the nearest 1/255 after clamping to [0, 1].
Tensor quantize8(const Tensor& img);

}  // namespace fit
