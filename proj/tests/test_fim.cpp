#include <doctest.h>

#include "fit/fft.hpp"
#include "fit/fim.hpp"
#include "fit/testing/oracles.hpp"

using namespace fit;
using fit::testing::random_tensor;

namespace {

FimParams zero_bias(FimParams p) {
  p.conv_re_b = Tensor(p.conv_re_b.dims());
  p.conv_im_b = Tensor(p.conv_im_b.dims());
  p.pconv_b = Tensor(p.pconv_b.dims());
  return p;
}

}  // namespace

TEST_CASE("zero input with zero biases gives zero output") {
  Rng rng(1);
  const FimParams p = zero_bias(FimParams::init(3, rng));
  CHECK(max_abs(fim_forward(Tensor({3, 5, 4}), p)) == 0.0);
}

TEST_CASE("identity block doubles its input") {
  const Tensor z = random_tensor({3, 6, 5}, 2);
  CHECK(max_abs_diff(fim_forward(z, FimParams::identity(3)), scale(z, 2.0)) < 1e-8);
}

TEST_CASE("bias-free block is linear") {
  Rng rng(3);
  const FimParams p = zero_bias(FimParams::init(2, rng));
  const Tensor a = random_tensor({2, 5, 7}, 4), b = random_tensor({2, 5, 7}, 5);
  const double alpha = 0.6, beta = -1.4;
  const Tensor lhs = fim_forward(add(scale(a, alpha), scale(b, beta)), p);
  const Tensor rhs = add(scale(fim_forward(a, p), alpha), scale(fim_forward(b, p), beta));
  CHECK(max_abs_diff(lhs, rhs) < 1e-8);
}

TEST_CASE("output keeps the input shape for odd sizes") {
  Rng rng(6);
  const FimParams p = FimParams::init(4, rng);
  for (const Shape& s : {Shape{4, 1, 1}, Shape{4, 7, 3}, Shape{4, 17, 13}, Shape{4, 8, 8}}) {
    const Tensor y = fim_forward(random_tensor(s, 7), p);
    CHECK(y.dims() == s);
    CHECK(all_finite(y));
  }
}

TEST_CASE("complexification is lossless") {
  const CTensor x(random_tensor({2, 3, 4}, 8), random_tensor({2, 3, 4}, 9));
  const auto [re, im] = split(x);
  const CTensor back = comp(re, im);
  CHECK(back.re == x.re);
  CHECK(back.im == x.im);

  const Tensor z = random_tensor({1, 4, 4}, 10);
  const CTensor real = comp(z, Tensor(z.dims()));
  CHECK(real.re == z);
  CHECK(max_abs(real.im) == 0.0);

  // (0 + i z) * (-i) = z
  const CTensor rotated = cmul(comp(Tensor(z.dims()), z), CTensor(Tensor(z.dims()), Tensor(z.dims(), -1.0)));
  CHECK(rotated.re == z);
  CHECK(max_abs(rotated.im) == 0.0);
  CHECK_THROWS(comp(Tensor({2, 2}), Tensor({2, 3})));
}

TEST_CASE("equal plane kernels act as one complex convolution") {
  Rng rng(11);
  FimParams p = zero_bias(FimParams::init(2, rng));
  p.conv_im_w = p.conv_re_w;
  const Tensor z = random_tensor({2, 8, 8}, 12);
  const CTensor spec = fft::fft2(z);
  // Reference: complex cross-correlation with the shared real kernel, then the
  // rest of the block by hand.
  const Tensor cre = fit::testing::naive_conv2d(spec.re, p.conv_re_w, Tensor({2}));
  const Tensor cim = fit::testing::naive_conv2d(spec.im, p.conv_re_w, Tensor({2}));
  const CTensor y = fft::ifft2(CTensor(add(cre, spec.re), add(cim, spec.im)));
  const Tensor expect = pconv(y.re, p.pconv_w, p.pconv_b);
  CHECK(max_abs_diff(fim_forward(z, p), expect) < 1e-10);
}

TEST_CASE("parameters export and import under a prefix") {
  Rng rng(13);
  const FimParams p = FimParams::init(3, rng);
  ParamStore store;
  p.export_to(store, "blk.");
  CHECK(store.size() == 6);
  const FimParams q = FimParams::import_from(store, "blk.");
  CHECK(q.conv_re_w == p.conv_re_w);
  CHECK(q.pconv_w == p.pconv_w);
  CHECK(q.conv_re_w.dims() == q.conv_im_w.dims());
  CHECK(max_abs(p.conv_re_b) == 0.0);
}
