#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "fit/tensor.hpp"

namespace fit {

// Continuous (y, x) positions in [-1, 1]^2 plus the per-position pixel extent.
struct CoordGrid {
  Tensor coords;  // (n, 2)
  Tensor cell;    // (n, 2), strictly positive
};

// Pixel-center grid: row r sits at -1 + (2r + 1) / H, row-major order.
CoordGrid make_coord_grid(std::size_t h, std::size_t w);

// Extent of one output pixel when an (h, w) map is magnified by (eta_h, eta_w).
std::pair<double, double> cell_for_scale(double eta_h, double eta_w, std::size_t h, std::size_t w);

// Continuous pixel index of a normalized coordinate along an axis of length n.
inline double pixel_index(double coord, std::size_t n) {
  return (coord + 1.0) * static_cast<double>(n) * 0.5 - 0.5;
}
inline double pixel_center(std::size_t idx, std::size_t n) {
  return -1.0 + (2.0 * static_cast<double>(idx) + 1.0) / static_cast<double>(n);
}

// Index of the nearest pixel center along one axis; ties go to the lower index,
// out-of-range positions clamp to the border.
std::size_t nearest_axis_index(double coord, std::size_t n);

// Four flat (y * W + x) indices and weights; weights sum to 1.
struct BilinearStencil {
  std::array<std::size_t, 4> index{};
  std::array<double, 4> weight{};
};
BilinearStencil bilinear_stencil(std::size_t h, std::size_t w, double y, double x);

Tensor bilinear_sample(const Tensor& feat, const Tensor& coords);  // -> (n, C)
Tensor nearest_sample(const Tensor& feat, const Tensor& coords);   // -> (n, C)

// Local LR neighborhood around one HR query coordinate.
struct QueryGrid {
  double center_y = 0.0, center_x = 0.0;  // nearest LR pixel center
  std::size_t grid_h = 1, grid_w = 1;
  Tensor coords;  // (grid_h * grid_w, 2), row-major over the offsets
};

QueryGrid make_query_grid(double qy, double qx, std::size_t h, std::size_t w, std::size_t grid_h,
                          std::size_t grid_w);

// Stacked query grids for n query coordinates: centers (n, 2) and keys
// (n * grid_h * grid_w, 2), grouped per query.
struct QueryGridBatch {
  Tensor centers;
  Tensor keys;
  std::size_t group = 1;
};
QueryGridBatch make_query_grids(const Tensor& queries, std::size_t h, std::size_t w,
                                std::size_t grid_h, std::size_t grid_w);

// pi * 2^(k-1), k = 1..p
std::vector<double> positional_frequencies(std::size_t p);

// Per row: [sin(f dy), cos(f dy), sin(f dx), cos(f dx)] for each frequency,
// then the two cell entries. Width 4p + 2.
Tensor pos_encode(const Tensor& delta, const Tensor& cell, const std::vector<double>& freqs);

}  // namespace fit
