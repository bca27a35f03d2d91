#include "fit/coords.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fit {

CoordGrid make_coord_grid(std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw UsageError("coordinate grid needs non-zero extents");
  CoordGrid g{Tensor({h * w, 2}), Tensor({h * w, 2})};
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t i = r * w + c;
      g.coords.at(i, 0) = pixel_center(r, h);
      g.coords.at(i, 1) = pixel_center(c, w);
      g.cell.at(i, 0) = 2.0 / static_cast<double>(h);
      g.cell.at(i, 1) = 2.0 / static_cast<double>(w);
    }
  }
  return g;
}

std::pair<double, double> cell_for_scale(double eta_h, double eta_w, std::size_t h, std::size_t w) {
  if (eta_h < 1.0 || eta_w < 1.0) throw UsageError("scale factors must be >= 1");
  return {2.0 / (eta_h * static_cast<double>(h)), 2.0 / (eta_w * static_cast<double>(w))};
}

std::size_t nearest_axis_index(double coord, std::size_t n) {
  const double t = pixel_index(coord, n);
  const double r = std::ceil(t - 0.5);
  if (r <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(r), n - 1);
}

namespace {

// Positions within rounding noise of a pixel center land exactly on it.
double snap(double t) {
  const double r = std::round(t);
  return std::abs(t - r) < 1e-9 ? r : t;
}

}  // namespace

BilinearStencil bilinear_stencil(std::size_t h, std::size_t w, double y, double x) {
  const double ty = std::clamp(snap(pixel_index(y, h)), 0.0, static_cast<double>(h - 1));
  const double tx = std::clamp(snap(pixel_index(x, w)), 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(ty));
  const auto x0 = static_cast<std::size_t>(std::floor(tx));
  const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = ty - static_cast<double>(y0), fx = tx - static_cast<double>(x0);
  BilinearStencil s;
  s.index = {y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1};
  s.weight = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
  return s;
}

namespace {

void check_sample_args(const Tensor& feat, const Tensor& coords) {
  if (feat.rank() != 3) throw ShapeError("sampling expects (C, H, W), got " + shape_str(feat.dims()));
  if (coords.rank() != 2 || coords.dim(1) != 2) {
    throw ShapeError("sampling expects (n, 2) coordinates, got " + shape_str(coords.dims()));
  }
}

}  // namespace

Tensor bilinear_sample(const Tensor& feat, const Tensor& coords) {
  check_sample_args(feat, coords);
  const std::size_t c = feat.dim(0), h = feat.dim(1), w = feat.dim(2), n = coords.dim(0);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = bilinear_stencil(h, w, coords.at(i, 0), coords.at(i, 1));
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* plane = feat.data().data() + ch * h * w;
      double v = 0.0;
      for (int k = 0; k < 4; ++k) v += s.weight[k] * plane[s.index[k]];
      out.at(i, ch) = v;
    }
  }
  return out;
}

Tensor nearest_sample(const Tensor& feat, const Tensor& coords) {
  check_sample_args(feat, coords);
  const std::size_t c = feat.dim(0), h = feat.dim(1), w = feat.dim(2), n = coords.dim(0);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = nearest_axis_index(coords.at(i, 0), h);
    const std::size_t x = nearest_axis_index(coords.at(i, 1), w);
    for (std::size_t ch = 0; ch < c; ++ch) out.at(i, ch) = feat.at(ch, y, x);
  }
  return out;
}

QueryGrid make_query_grid(double qy, double qx, std::size_t h, std::size_t w, std::size_t grid_h,
                          std::size_t grid_w) {
  if (grid_h % 2 == 0 || grid_w % 2 == 0) {
    throw ConfigError("query grid extents must be odd, got " + std::to_string(grid_h) + "x" +
                      std::to_string(grid_w));
  }
  QueryGrid g;
  g.grid_h = grid_h;
  g.grid_w = grid_w;
  g.center_y = pixel_center(nearest_axis_index(qy, h), h);
  g.center_x = pixel_center(nearest_axis_index(qx, w), w);
  const double pitch_y = 2.0 / static_cast<double>(h), pitch_x = 2.0 / static_cast<double>(w);
  const long ry = static_cast<long>(grid_h / 2), rx = static_cast<long>(grid_w / 2);
  g.coords = Tensor({grid_h * grid_w, 2});
  std::size_t k = 0;
  for (long dy = -ry; dy <= ry; ++dy) {
    for (long dx = -rx; dx <= rx; ++dx, ++k) {
      g.coords.at(k, 0) = std::clamp(g.center_y + static_cast<double>(dy) * pitch_y, -1.0, 1.0);
      g.coords.at(k, 1) = std::clamp(g.center_x + static_cast<double>(dx) * pitch_x, -1.0, 1.0);
    }
  }
  return g;
}

QueryGridBatch make_query_grids(const Tensor& queries, std::size_t h, std::size_t w,
                                std::size_t grid_h, std::size_t grid_w) {
  if (queries.rank() != 2 || queries.dim(1) != 2) {
    throw ShapeError("queries must be (n, 2), got " + shape_str(queries.dims()));
  }
  const std::size_t n = queries.dim(0), group = grid_h * grid_w;
  QueryGridBatch b{Tensor({n, 2}), Tensor({n * group, 2}), group};
  for (std::size_t i = 0; i < n; ++i) {
    const QueryGrid g = make_query_grid(queries.at(i, 0), queries.at(i, 1), h, w, grid_h, grid_w);
    b.centers.at(i, 0) = g.center_y;
    b.centers.at(i, 1) = g.center_x;
    std::copy(g.coords.data().begin(), g.coords.data().end(),
              b.keys.data().begin() + static_cast<std::ptrdiff_t>(i * group * 2));
  }
  return b;
}

std::vector<double> positional_frequencies(std::size_t p) {
  if (p == 0) throw ConfigError("positional encoding length must be >= 1");
  std::vector<double> f(p);
  for (std::size_t k = 0; k < p; ++k) f[k] = std::numbers::pi * std::ldexp(1.0, static_cast<int>(k));
  return f;
}

Tensor pos_encode(const Tensor& delta, const Tensor& cell, const std::vector<double>& freqs) {
  if (delta.rank() != 2 || delta.dim(1) != 2) {
    throw ShapeError("pos_encode: delta must be (n, 2), got " + shape_str(delta.dims()));
  }
  require_same_shape(delta, cell, "pos_encode");
  if (freqs.empty()) throw ConfigError("positional encoding length must be >= 1");
  const std::size_t n = delta.dim(0), p = freqs.size(), width = 4 * p + 2;
  Tensor out({n, width});
  for (std::size_t i = 0; i < n; ++i) {
    const double dy = delta.at(i, 0), dx = delta.at(i, 1);
    double* row = out.data().data() + i * width;
    for (std::size_t k = 0; k < p; ++k) {
      row[4 * k + 0] = std::sin(freqs[k] * dy);
      row[4 * k + 1] = std::cos(freqs[k] * dy);
      row[4 * k + 2] = std::sin(freqs[k] * dx);
      row[4 * k + 3] = std::cos(freqs[k] * dx);
    }
    row[4 * p] = cell.at(i, 0);
    row[4 * p + 1] = cell.at(i, 1);
  }
  return out;
}

}  // namespace fit
