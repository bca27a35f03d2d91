#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "fit/errors.hpp"

namespace fit {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

// Dense row-major array of doubles, rank 1 to 4. Feature maps are (C, H, W).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims, double fill = 0.0);
  Tensor(Shape dims, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, v); }

  const Shape& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& vec() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
  const double& at(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * dims_[1] + y) * dims_[2] + x];
  }
  const double& at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * dims_[1] + y) * dims_[2] + x];
  }

  // Same data, new extents; element counts must agree.
  Tensor reshaped(Shape dims) const;

  double item() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape dims_;
  std::vector<double> data_;
};

// Complex tensor held as separate real and imaginary planes of equal shape.
struct CTensor {
  Tensor re;
  Tensor im;

  CTensor() = default;
  CTensor(Tensor r, Tensor i);
  explicit CTensor(const Shape& dims) : re(dims), im(dims) {}

  const Shape& dims() const noexcept { return re.dims(); }
  std::size_t size() const noexcept { return re.size(); }
};

// Throws ShapeError unless a and b have identical extents.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor transpose(const Tensor& a);  // rank-2 only
double sum(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& a);

// Row-major accumulation: out[i][j] = sum_k a[i][k] * b[k][j], k ascending.
Tensor matmul(const Tensor& a, const Tensor& b);

// Same-size cross-correlation with zero padding. kernel is (Cout, Cin, kh, kw)
// with odd kh, kw; bias is (Cout) or empty.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

// Per-pixel channel mixing: out[o] = sum_i w[o][i] * x[i] + bias[o].
Tensor pconv(const Tensor& x, const Tensor& w, const Tensor& bias);

// Numerically stable softmax along `axis` (max subtracted first).
Tensor softmax(const Tensor& v, std::size_t axis);

CTensor cadd(const CTensor& a, const CTensor& b);
CTensor cmul(const CTensor& a, const CTensor& b);
CTensor cmatmul(const CTensor& a, const CTensor& b);
CTensor ctranspose_plain(const CTensor& a);  // no conjugation

}  // namespace fit
