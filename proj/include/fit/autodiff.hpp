#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fit/tensor.hpp"

namespace fit {

// Named, shape-checked parameter tensors. Ordered by name so iteration (and
// therefore initialization and serialization) is deterministic.
class ParamStore {
 public:
  void set(const std::string& name, Tensor value);
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  // Throws ShapeError if `name` is missing or has different extents.
  const Tensor& require(const std::string& name, const Shape& dims) const;

  std::size_t size() const { return tensors_.size(); }
  std::size_t numel() const;
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }
  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

using Gradients = std::map<std::string, Tensor>;

namespace ad {

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Scale,
  AddRowBias,
  Relu,
  Matmul,
  Transpose,
  Reshape,
  Concat0,
  Slice0,
  Conv2d,
  Pconv,
  SoftmaxRows,
  Comp,
  RealPart,
  ImagPart,
  Fft2,
  Ifft2,
  CMatmul,
  BilinearSample,
  NearestSample,
  LocalAttention,
  Sum,
  L1Loss,
  kCount
};

inline constexpr std::size_t kOpCount = static_cast<std::size_t>(Op::kCount);
const char* op_name(Op op);

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;  // real plane
  const Tensor& imag() const;   // empty for real nodes
  CTensor cvalue() const;
  bool is_complex() const;
  const Shape& dims() const { return value().dims(); }
};

struct Node {
  Op op = Op::Constant;
  std::vector<int> inputs;
  Tensor re;
  Tensor im;
  bool complex = false;
  // op-specific saved state
  double scalar = 0.0;
  std::size_t a = 0, b = 0, c = 0;
  std::vector<std::size_t> index;
  std::vector<double> weight;
  Tensor saved;
};

// Append-only reverse-mode graph. Node ids are topologically ordered by
// construction, and backward() visits each node once in reverse order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers (or returns the already registered) leaf for `name`.
  Var param(const std::string& name, const Tensor& value);
  Var constant(Tensor value);
  Var constant(CTensor value);

  Var push(Node node);
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }
  const std::map<std::string, int>& params() const { return params_; }

  // dLoss/dParam for every parameter registered on this tape.
  Gradients backward(Var loss) const;
  // As above, plus zero tensors for store entries that never reached the tape.
  Gradients backward(Var loss, const ParamStore& store) const;

 private:
  std::vector<Node> nodes_;
  std::map<std::string, int> params_;
};

// Cotangent storage for backward rules. Complex nodes carry the pair
// (dL/dRe, dL/dIm); real nodes leave `im` empty.
struct GradBuffer {
  std::vector<CTensor> grads;
  std::vector<char> need;  // node lies on a path from a parameter
  bool wants(int id) const { return need[static_cast<std::size_t>(id)] != 0; }
  void accumulate(const Tape& tape, int id, const Tensor& re, const Tensor* im = nullptr);
};

using BackwardFn = void (*)(const Tape&, const Node&, const CTensor& gout, GradBuffer&);

// Backward rule per op; Leaf and Constant have none.
const std::array<BackwardFn, kOpCount>& backward_rules();

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_row_bias(Var x, Var bias);  // x (n, C) + bias (C)
Var relu(Var a);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape dims);
Var concat0(const std::vector<Var>& parts);
Var slice0(Var a, std::size_t start, std::size_t count);
Var conv2d(Var x, Var kernel, Var bias);
Var pconv(Var x, Var w, Var bias);
Var softmax_rows(Var x);
Var comp(Var re, Var im);
Var real_part(Var z);
Var imag_part(Var z);
Var fft2(Var x);  // real inputs are promoted to complex
Var ifft2(Var z);
Var cmatmul(Var a, Var b);
// feat (C, H, W) sampled at fixed (y, x) coordinates (n, 2) -> (n, C).
Var bilinear_sample(Var feat, const Tensor& coords);
Var nearest_sample(Var feat, const Tensor& coords);
// Multi-head attention of n queries over their own group of `group` keys.
// q (n, C); k, v (n*group, C); bias (n*group, heads). Per head the logits are
// bias + q_h . k_h * score_scale, softmaxed over the group.
Var local_attention(Var q, Var k, Var v, Var bias, std::size_t heads, double score_scale);
Var sum(Var a);
Var l1_loss(Var pred, const Tensor& target);

// x (n, Cin) * w(Cout, Cin)^T + b (Cout)
Var linear(Var x, Var w, Var b);

// Central-difference gradient check. `loss_fn` rebuilds the graph on a fresh
// tape from the store it is given. Params with more than `max_coords` entries
// are probed at a random subset of coordinates (at least 32). Returns the
// worst |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t probes = 0;
};
using LossFn = std::function<Var(Tape&, const ParamStore&)>;
GradCheckResult grad_check(const LossFn& loss_fn, const ParamStore& params, double h = 1e-5,
                           std::size_t max_coords = 64, std::uint64_t seed = 7);

}  // namespace ad
}  // namespace fit
