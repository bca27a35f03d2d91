#pragma once

#include <complex>
#include <span>

#include "fit/tensor.hpp"

namespace fit::fft {

// Unnormalized in-place 1D DFT of arbitrary length. Power-of-two lengths use
// iterative radix-2 Cooley-Tukey; other lengths go through Bluestein's chirp-z.
// sign = -1 forward, +1 inverse.
void transform(std::span<std::complex<double>> data, int sign);

// Per-channel 2D DFT with symmetric 1/sqrt(H*W) scaling in both directions,
// so the pair is unitary. Input is (C, H, W).
CTensor fft2(const Tensor& x);
CTensor fft2(const CTensor& x);
CTensor ifft2(const CTensor& x);

// Cyclic shift by (H/2, W/2) per channel; moves the DC bin to the center.
CTensor fftshift2(const CTensor& x);
Tensor fftshift2(const Tensor& x);

namespace testing {
// Multiplies the forward normalization by `factor`. Used by the selftest
// mutation check; leave at 1.0 otherwise.
void set_forward_norm_perturbation(double factor);
double forward_norm_perturbation();
}  // namespace testing

}  // namespace fit::fft
