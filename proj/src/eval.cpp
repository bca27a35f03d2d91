#include "fit/eval.hpp"

#include <algorithm>
#include <cmath>

#include "fit/fft.hpp"

namespace fit {

namespace {

void require_image(const Tensor& img, const char* what) {
  if (img.rank() != 3) throw ShapeError(std::string(what) + " expects (C, H, W), got " + shape_str(img.dims()));
}

Tensor clamped(const Tensor& img, double peak) {
  Tensor out = img;
  for (double& v : out.data()) v = std::clamp(v, 0.0, peak);
  return out;
}

}  // namespace

Tensor luma(const Tensor& rgb) {
  require_image(rgb, "luma");
  if (rgb.dim(0) != 3) throw ShapeError("luma expects 3 channels, got " + shape_str(rgb.dims()));
  const std::size_t h = rgb.dim(1), w = rgb.dim(2);
  Tensor y({1, h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      y.at(0, i, j) = 0.299 * rgb.at(0, i, j) + 0.587 * rgb.at(1, i, j) + 0.114 * rgb.at(2, i, j);
  return y;
}

Tensor shave(const Tensor& img, std::size_t border) {
  require_image(img, "shave");
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (2 * border >= h || 2 * border >= w) return img;
  Tensor out({c, h - 2 * border, w - 2 * border});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < out.dim(1); ++y)
      for (std::size_t x = 0; x < out.dim(2); ++x) out.at(ch, y, x) = img.at(ch, y + border, x + border);
  return out;
}

double psnr(const Tensor& a, const Tensor& b, double peak, bool use_luma) {
  require_same_shape(a, b, "psnr");
  Tensor x = clamped(a, peak), y = clamped(b, peak);
  if (use_luma) {
    x = luma(x);
    y = luma(y);
  }
  double se = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(x.size());
  if (mse < 1e-12) return kPsnrCap;
  return 10.0 * std::log10(peak * peak / mse);
}

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double t = std::abs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

std::vector<ResampleTaps> cubic_taps(std::size_t n_in, std::size_t n_out, double scale, bool antialias) {
  if (n_in == 0 || n_out == 0 || !(scale > 0.0)) throw UsageError("cubic_taps: empty axis or non-positive scale");
  const double stretch = (antialias && scale < 1.0) ? scale : 1.0;
  const double support = 2.0 / stretch;
  std::vector<ResampleTaps> taps(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    const double u = (static_cast<double>(o) + 0.5) / scale - 0.5;
    const auto lo = static_cast<long>(std::floor(u - support));
    const auto hi = static_cast<long>(std::ceil(u + support));
    ResampleTaps& t = taps[o];
    double total = 0.0;
    for (long j = lo; j <= hi; ++j) {
      const double wgt = cubic_kernel((u - static_cast<double>(j)) * stretch);
      if (wgt == 0.0) continue;
      const long clamped_j = std::clamp<long>(j, 0, static_cast<long>(n_in) - 1);
      t.index.push_back(static_cast<std::size_t>(clamped_j));
      t.weight.push_back(wgt);
      total += wgt;
    }
    for (double& wgt : t.weight) wgt /= total;
  }
  return taps;
}

namespace {

Tensor resample(const Tensor& img, const std::vector<ResampleTaps>& ty, const std::vector<ResampleTaps>& tx) {
  const std::size_t c = img.dim(0), w = img.dim(2), oh = ty.size(), ow = tx.size();
  Tensor rows({c, oh, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t o = 0; o < oh; ++o)
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < ty[o].index.size(); ++k) s += ty[o].weight[k] * img.at(ch, ty[o].index[k], x);
        rows.at(ch, o, x) = s;
      }
  Tensor out({c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t o = 0; o < ow; ++o) {
        double s = 0.0;
        for (std::size_t k = 0; k < tx[o].index.size(); ++k) s += tx[o].weight[k] * rows.at(ch, y, tx[o].index[k]);
        out.at(ch, y, o) = s;
      }
  return out;
}

}  // namespace

Tensor bicubic_resize_to(const Tensor& img, std::size_t out_h, std::size_t out_w, bool antialias) {
  require_image(img, "bicubic_resize");
  const std::size_t h = img.dim(1), w = img.dim(2);
  return resample(img, cubic_taps(h, out_h, static_cast<double>(out_h) / static_cast<double>(h), antialias),
                  cubic_taps(w, out_w, static_cast<double>(out_w) / static_cast<double>(w), antialias));
}

Tensor bicubic_resize(const Tensor& img, double eta_h, double eta_w, bool antialias) {
  require_image(img, "bicubic_resize");
  if (!(eta_h > 0.0) || !(eta_w > 0.0)) throw UsageError("bicubic_resize scale must be positive");
  const auto oh = static_cast<std::size_t>(std::lround(eta_h * static_cast<double>(img.dim(1))));
  const auto ow = static_cast<std::size_t>(std::lround(eta_w * static_cast<double>(img.dim(2))));
  if (oh == 0 || ow == 0) throw UsageError("bicubic_resize output would be empty");
  return resample(img, cubic_taps(img.dim(1), oh, eta_h, antialias), cubic_taps(img.dim(2), ow, eta_w, antialias));
}

Tensor frequency_error_map(const Tensor& sr, const Tensor& hr) {
  require_same_shape(sr, hr, "frequency_error_map");
  const CTensor fs = fft::fft2(luma(sr));
  const CTensor fh = fft::fft2(luma(hr));
  const std::size_t h = sr.dim(1), w = sr.dim(2);
  Tensor err({1, h, w});
  for (std::size_t i = 0; i < err.size(); ++i) {
    const double ms = std::hypot(fs.re[i], fs.im[i]);
    const double mh = std::hypot(fh.re[i], fh.im[i]);
    err[i] = std::abs(std::log1p(ms) - std::log1p(mh));
  }
  return fft::fftshift2(err).reshaped({h, w});
}

Tensor render_error_map(const Tensor& map) {
  if (map.rank() != 2) throw ShapeError("render_error_map expects (H, W), got " + shape_str(map.dims()));
  const double peak = max_abs(map);
  const std::size_t h = map.dim(0), w = map.dim(1);
  Tensor out({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double t = peak > 0.0 ? map.at(y, x) / peak : 0.0;
      out.at(0, y, x) = t;
      out.at(1, y, x) = 1.0 - t;
    }
  return out;
}

Tensor quantize8(const Tensor& img) {
  Tensor out = img;
  for (double& v : out.data()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

}  // namespace fit
