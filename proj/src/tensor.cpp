#include "fit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace fit {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

namespace {

void check_rank(const Shape& dims) {
  if (dims.empty() || dims.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got " + std::to_string(dims.size()));
  }
}

}  // namespace

Tensor::Tensor(Shape dims, double fill) : dims_(std::move(dims)) {
  check_rank(dims_);
  data_.assign(shape_numel(dims_), fill);
}

Tensor::Tensor(Shape dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
  check_rank(dims_);
  if (shape_numel(dims_) != data_.size()) {
    throw ShapeError("tensor " + shape_str(dims_) + " given " + std::to_string(data_.size()) +
                     " values");
  }
}

Tensor Tensor::reshaped(Shape dims) const {
  if (shape_numel(dims) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(dims_) + " to " + shape_str(dims));
  }
  return Tensor(std::move(dims), data_);
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor " + shape_str(dims_));
  return data_[0];
}

CTensor::CTensor(Tensor r, Tensor i) : re(std::move(r)), im(std::move(i)) {
  require_same_shape(re, im, "complex planes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.dims()) + " vs " +
                     shape_str(b.dims()));
  }
}

namespace {

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, const char* what, F f) {
  require_same_shape(a, b, what);
  Tensor out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose needs rank 2, got " + shape_str(a.dims()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(const Tensor& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.dims()) + " and " +
                     shape_str(b.dims()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.rank() != 3 || kernel.rank() != 4 || kernel.dim(1) != x.dim(0)) {
    throw ShapeError("conv2d: input " + shape_str(x.dims()) + " incompatible with kernel " +
                     shape_str(kernel.dims()));
  }
  const std::size_t cout = kernel.dim(0), cin = kernel.dim(1), kh = kernel.dim(2),
                    kw = kernel.dim(3);
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ConfigError("conv2d: kernel extents must be odd, got " + shape_str(kernel.dims()));
  }
  if (!bias.empty() && bias.dims() != Shape{cout}) {
    throw ShapeError("conv2d: bias " + shape_str(bias.dims()) + " for " + std::to_string(cout) +
                     " output channels");
  }
  const std::size_t h = x.dim(1), w = x.dim(2);
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  Tensor out({cout, h, w});
  for (std::size_t o = 0; o < cout; ++o) {
    double* op = &out.at(o, 0, 0);
    const double b = bias.empty() ? 0.0 : bias[o];
    for (std::size_t i = 0; i < h * w; ++i) op[i] = b;
    for (std::size_t c = 0; c < cin; ++c) {
      const double* xp = x.data().data() + c * h * w;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const double kv = kernel[((o * cin + c) * kh + ky) * kw + kx];
          if (kv == 0.0) continue;
          const long dy = static_cast<long>(ky) - ph, dx = static_cast<long>(kx) - pw;
          const long y0 = std::max(0L, -dy), y1 = std::min<long>(h, static_cast<long>(h) - dy);
          const long x0 = std::max(0L, -dx), x1 = std::min<long>(w, static_cast<long>(w) - dx);
          for (long y = y0; y < y1; ++y) {
            double* orow = op + y * w;
            const double* xrow = xp + (y + dy) * static_cast<long>(w) + dx;
            for (long xx = x0; xx < x1; ++xx) orow[xx] += kv * xrow[xx];
          }
        }
      }
    }
  }
  return out;
}

Tensor pconv(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() != 3 || w.rank() != 2 || w.dim(1) != x.dim(0)) {
    throw ShapeError("pconv: input " + shape_str(x.dims()) + " incompatible with weights " +
                     shape_str(w.dims()));
  }
  const std::size_t cout = w.dim(0), cin = w.dim(1), hw = x.dim(1) * x.dim(2);
  if (!bias.empty() && bias.dims() != Shape{cout}) {
    throw ShapeError("pconv: bias " + shape_str(bias.dims()) + " for " + std::to_string(cout) +
                     " output channels");
  }
  Tensor out({cout, x.dim(1), x.dim(2)});
  for (std::size_t o = 0; o < cout; ++o) {
    double* op = out.data().data() + o * hw;
    const double b = bias.empty() ? 0.0 : bias[o];
    for (std::size_t i = 0; i < hw; ++i) op[i] = b;
    for (std::size_t c = 0; c < cin; ++c) {
      const double wv = w[o * cin + c];
      const double* xp = x.data().data() + c * hw;
      for (std::size_t i = 0; i < hw; ++i) op[i] += wv * xp[i];
    }
  }
  return out;
}

Tensor softmax(const Tensor& v, std::size_t axis) {
  if (axis >= v.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(v.dims()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= v.dim(i);
  for (std::size_t i = axis + 1; i < v.rank(); ++i) inner *= v.dim(i);
  const std::size_t n = v.dim(axis);
  Tensor out(v.dims());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, v[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = std::exp(v[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= z;
    }
  }
  return out;
}

CTensor cadd(const CTensor& a, const CTensor& b) { return {add(a.re, b.re), add(a.im, b.im)}; }

CTensor cmul(const CTensor& a, const CTensor& b) {
  require_same_shape(a.re, b.re, "cmul");
  CTensor out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.re[i] = a.re[i] * b.re[i] - a.im[i] * b.im[i];
    out.im[i] = a.re[i] * b.im[i] + a.im[i] * b.re[i];
  }
  return out;
}

CTensor cmatmul(const CTensor& a, const CTensor& b) {
  if (a.re.rank() != 2 || b.re.rank() != 2 || a.re.dim(1) != b.re.dim(0)) {
    throw ShapeError("cmatmul: incompatible shapes " + shape_str(a.dims()) + " and " +
                     shape_str(b.dims()));
  }
  const std::size_t m = a.re.dim(0), k = a.re.dim(1), n = b.re.dim(1);
  CTensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* orr = out.re.data().data() + i * n;
    double* oii = out.im.data().data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double ar = a.re[i * k + p], ai = a.im[i * k + p];
      const double* br = b.re.data().data() + p * n;
      const double* bi = b.im.data().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        orr[j] += ar * br[j] - ai * bi[j];
        oii[j] += ar * bi[j] + ai * br[j];
      }
    }
  }
  return out;
}

CTensor ctranspose_plain(const CTensor& a) { return {transpose(a.re), transpose(a.im)}; }

}  // namespace fit
