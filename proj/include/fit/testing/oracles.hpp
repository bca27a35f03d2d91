#pragma once

// Slow reference implementations written directly from the defining
// formulas, with plain loops and no shared code paths with the library
// kernels beyond the Tensor container. Used by tests and `fit selftest`.

#include <complex>
#include <vector>

#include "fit/autodiff.hpp"
#include "fit/model_config.hpp"
#include "fit/tensor.hpp"

namespace fit::testing {

// Direct O(N^2) double sum with 1/sqrt(HW) scaling. sign = -1 forward.
CTensor naive_dft2(const CTensor& x, int sign);

// Brute-force triple loop.
Tensor naive_matmul(const Tensor& a, const Tensor& b);

// Zero-padded cross-correlation, seven nested loops.
Tensor naive_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

// Four-corner bilinear interpolation of one channel with border clamping.
double naive_bilinear(const Tensor& feat, std::size_t ch, double y, double x);

// Index of the pixel center closest to coord along an axis of n pixels,
// found by exhaustive search; ties keep the lower index.
std::size_t naive_nearest(double coord, std::size_t n);

// Coordinate-conditioned multi-head attention for one HR query. `iisa` holds
// pe1.*, pe2.* relative to the IISA prefix. Returns C values.
std::vector<double> iisa_attend_oracle(const Tensor& q_map, const Tensor& v_map, double qy, double qx,
                                       double cell_h, double cell_w, const ParamStore& iisa,
                                       const ModelConfig& cfg);

// Frequency-correlation attention evaluated at the LR pixel nearest
// (center_y, center_x). Returns C values.
std::vector<double> fcsa_forward_oracle(const Tensor& z, double center_y, double center_x, const Tensor& qkv_w,
                                        const Tensor& qkv_b);

// Random tensor with entries uniform in [lo, hi).
Tensor random_tensor(const Shape& dims, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

}  // namespace fit::testing
