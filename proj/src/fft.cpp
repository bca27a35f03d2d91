#include "fit/fft.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

namespace fit::fft {

namespace {

using cd = std::complex<double>;

std::atomic<double> g_norm_perturbation{1.0};

bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

struct Radix2Plan {
  std::size_t n = 0;
  std::vector<std::size_t> bitrev;
  std::vector<cd> twiddle;  // exp(-2*pi*i*k/n), k < n/2
};

struct BluesteinPlan {
  std::size_t n = 0;
  std::size_t m = 0;                    // padded power-of-two length >= 2n-1
  std::vector<cd> chirp;                // exp(-i*pi*k^2/n)
  std::vector<cd> kernel_fft;           // forward DFT of conj(chirp), wrapped
  std::shared_ptr<const Radix2Plan> inner;
};

std::shared_ptr<const Radix2Plan> make_radix2(std::size_t n) {
  auto p = std::make_shared<Radix2Plan>();
  p->n = n;
  p->bitrev.resize(n);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    p->bitrev[i] = r;
  }
  p->twiddle.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    p->twiddle[k] = {std::cos(a), std::sin(a)};
  }
  return p;
}

// Forward (sign -1) radix-2; inverse obtained by conjugating twiddles.
void run_radix2(const Radix2Plan& p, std::span<cd> a, int sign) {
  const std::size_t n = p.n;
  for (std::size_t i = 0; i < n; ++i)
    if (i < p.bitrev[i]) std::swap(a[i], a[p.bitrev[i]]);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2, step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < half; ++j) {
        cd w = p.twiddle[j * step];
        if (sign > 0) w = std::conj(w);
        const cd u = a[i + j];
        const cd v = a[i + j + half] * w;
        a[i + j] = u + v;
        a[i + j + half] = u - v;
      }
    }
  }
}

std::shared_ptr<const Radix2Plan> radix2_plan(std::size_t n);

std::shared_ptr<const BluesteinPlan> make_bluestein(std::size_t n) {
  auto p = std::make_shared<BluesteinPlan>();
  p->n = n;
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  p->m = m;
  p->inner = radix2_plan(m);
  p->chirp.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the phase argument small for long transforms.
    const std::size_t k2 = (k * k) % (2 * n);
    const double a = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    p->chirp[k] = {std::cos(a), std::sin(a)};
  }
  p->kernel_fft.assign(m, cd{});
  p->kernel_fft[0] = std::conj(p->chirp[0]);
  for (std::size_t k = 1; k < n; ++k) {
    p->kernel_fft[k] = std::conj(p->chirp[k]);
    p->kernel_fft[m - k] = std::conj(p->chirp[k]);
  }
  run_radix2(*p->inner, p->kernel_fft, -1);
  return p;
}

std::mutex g_plan_mutex;
std::map<std::size_t, std::shared_ptr<const Radix2Plan>> g_radix2;
std::map<std::size_t, std::shared_ptr<const BluesteinPlan>> g_bluestein;

std::shared_ptr<const Radix2Plan> radix2_plan(std::size_t n) {
  {
    std::lock_guard lock(g_plan_mutex);
    if (auto it = g_radix2.find(n); it != g_radix2.end()) return it->second;
  }
  auto p = make_radix2(n);
  std::lock_guard lock(g_plan_mutex);
  return g_radix2.emplace(n, std::move(p)).first->second;
}

std::shared_ptr<const BluesteinPlan> bluestein_plan(std::size_t n) {
  {
    std::lock_guard lock(g_plan_mutex);
    if (auto it = g_bluestein.find(n); it != g_bluestein.end()) return it->second;
  }
  auto p = make_bluestein(n);
  std::lock_guard lock(g_plan_mutex);
  return g_bluestein.emplace(n, std::move(p)).first->second;
}

void run_bluestein(const BluesteinPlan& p, std::span<cd> a, int sign) {
  // The inverse transform is conj(DFT(conj(x))).
  std::vector<cd> buf(p.m, cd{});
  for (std::size_t k = 0; k < p.n; ++k) {
    const cd x = sign > 0 ? std::conj(a[k]) : a[k];
    buf[k] = x * p.chirp[k];
  }
  run_radix2(*p.inner, buf, -1);
  for (std::size_t k = 0; k < p.m; ++k) buf[k] *= p.kernel_fft[k];
  run_radix2(*p.inner, buf, +1);
  const double inv_m = 1.0 / static_cast<double>(p.m);
  for (std::size_t k = 0; k < p.n; ++k) {
    const cd y = buf[k] * inv_m * p.chirp[k];
    a[k] = sign > 0 ? std::conj(y) : y;
  }
}

// Transforms every channel of (C, H, W) planes in place, unnormalized.
void transform_planes(CTensor& x, int sign) {
  if (x.re.rank() != 3) throw ShapeError("fft2 expects (C, H, W), got " + shape_str(x.dims()));
  const std::size_t c = x.re.dim(0), h = x.re.dim(1), w = x.re.dim(2);
  std::vector<cd> line(std::max(h, w));
  for (std::size_t ch = 0; ch < c; ++ch) {
    double* re = &x.re.at(ch, 0, 0);
    double* im = &x.im.at(ch, 0, 0);
    if (w > 1) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t i = 0; i < w; ++i) line[i] = {re[y * w + i], im[y * w + i]};
        transform(std::span(line.data(), w), sign);
        for (std::size_t i = 0; i < w; ++i) {
          re[y * w + i] = line[i].real();
          im[y * w + i] = line[i].imag();
        }
      }
    }
    if (h > 1) {
      for (std::size_t i = 0; i < w; ++i) {
        for (std::size_t y = 0; y < h; ++y) line[y] = {re[y * w + i], im[y * w + i]};
        transform(std::span(line.data(), h), sign);
        for (std::size_t y = 0; y < h; ++y) {
          re[y * w + i] = line[y].real();
          im[y * w + i] = line[y].imag();
        }
      }
    }
  }
}

void scale_planes(CTensor& x, double s) {
  for (auto& v : x.re.data()) v *= s;
  for (auto& v : x.im.data()) v *= s;
}

double unitary_scale(const CTensor& x) {
  return 1.0 / std::sqrt(static_cast<double>(x.re.dim(1) * x.re.dim(2)));
}

}  // namespace

void transform(std::span<std::complex<double>> data, int sign) {
  const std::size_t n = data.size();
  if (n <= 1) return;
  if (is_pow2(n)) {
    run_radix2(*radix2_plan(n), data, sign);
  } else {
    run_bluestein(*bluestein_plan(n), data, sign);
  }
}

CTensor fft2(const Tensor& x) { return fft2(CTensor(x, Tensor(x.dims()))); }

CTensor fft2(const CTensor& x) {
  CTensor out = x;
  transform_planes(out, -1);
  scale_planes(out, unitary_scale(out) * g_norm_perturbation.load());
  return out;
}

CTensor ifft2(const CTensor& x) {
  CTensor out = x;
  transform_planes(out, +1);
  scale_planes(out, unitary_scale(out));
  return out;
}

Tensor fftshift2(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("fftshift2 expects (C, H, W), got " + shape_str(x.dims()));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t sy = h / 2, sx = w / 2;
  Tensor out(x.dims());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t i = 0; i < w; ++i) out.at(ch, (y + sy) % h, (i + sx) % w) = x.at(ch, y, i);
  return out;
}

CTensor fftshift2(const CTensor& x) { return {fftshift2(x.re), fftshift2(x.im)}; }

namespace testing {
void set_forward_norm_perturbation(double factor) { g_norm_perturbation.store(factor); }
double forward_norm_perturbation() { return g_norm_perturbation.load(); }
}  // namespace testing

}  // namespace fit::fft
