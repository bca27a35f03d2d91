#include "fit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fit/coords.hpp"
#include "fit/fft.hpp"

namespace fit {

void ParamStore::set(const std::string& name, Tensor value) { tensors_[name] = std::move(value); }

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ShapeError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ShapeError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::require(const std::string& name, const Shape& dims) const {
  const Tensor& t = at(name);
  if (t.dims() != dims) {
    throw ShapeError("parameter '" + name + "' has shape " + shape_str(t.dims()) + ", expected " +
                     shape_str(dims));
  }
  return t;
}

std::size_t ParamStore::numel() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

namespace ad {

const char* op_name(Op op) {
  static constexpr std::array<const char*, kOpCount> names = {
      "leaf",          "constant",       "add",          "sub",     "mul",
      "scale",         "add_row_bias",   "relu",         "matmul",  "transpose",
      "reshape",       "concat0",        "slice0",       "conv2d",  "pconv",
      "softmax_rows",  "comp",           "real_part",    "imag_part", "fft2",
      "ifft2",         "cmatmul",        "bilinear_sample", "nearest_sample",
      "local_attention", "sum",          "l1_loss"};
  return names.at(static_cast<std::size_t>(op));
}

const Tensor& Var::value() const { return tape->node(id).re; }
const Tensor& Var::imag() const { return tape->node(id).im; }
CTensor Var::cvalue() const {
  const Node& n = tape->node(id);
  return n.complex ? CTensor(n.re, n.im) : CTensor(n.re, Tensor(n.re.dims()));
}
bool Var::is_complex() const { return tape->node(id).complex; }

Var Tape::param(const std::string& name, const Tensor& value) {
  if (auto it = params_.find(name); it != params_.end()) return Var{this, it->second};
  Node n;
  n.op = Op::Leaf;
  n.re = value;
  Var v = push(std::move(n));
  params_.emplace(name, v.id);
  return v;
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::Constant;
  n.re = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(CTensor value) {
  Node n;
  n.op = Op::Constant;
  n.complex = true;
  n.re = std::move(value.re);
  n.im = std::move(value.im);
  return push(std::move(n));
}

Var Tape::push(Node node) {
  for (int in : node.inputs) {
    if (in < 0 || static_cast<std::size_t>(in) >= nodes_.size()) {
      throw UsageError("tape input id out of order");
    }
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void GradBuffer::accumulate(const Tape& tape, int id, const Tensor& re, const Tensor* im) {
  if (!wants(id)) return;
  const Node& n = tape.node(id);
  CTensor& g = grads[static_cast<std::size_t>(id)];
  if (g.re.empty()) {
    g.re = Tensor(n.re.dims());
    if (n.complex) g.im = Tensor(n.re.dims());
  }
  require_same_shape(g.re, re, "gradient accumulation");
  for (std::size_t i = 0; i < re.size(); ++i) g.re[i] += re[i];
  if (n.complex && im != nullptr) {
    for (std::size_t i = 0; i < im->size(); ++i) g.im[i] += (*im)[i];
  }
}

namespace {

// Marks which nodes lie on a path from a parameter; others are skipped.
std::vector<char> needs_grad(const Tape& tape) {
  std::vector<char> need(tape.size(), 0);
  for (std::size_t i = 0; i < tape.size(); ++i) {
    const Node& n = tape.node(static_cast<int>(i));
    if (n.op == Op::Leaf) {
      need[i] = 1;
      continue;
    }
    for (int in : n.inputs) need[i] |= need[static_cast<std::size_t>(in)];
  }
  return need;
}

}  // namespace

Gradients Tape::backward(Var loss) const {
  if (loss.tape != this) throw UsageError("loss belongs to a different tape");
  const Node& ln = node(loss.id);
  if (ln.complex || ln.re.size() != 1) {
    throw UsageError("backward needs a real scalar loss, got " + shape_str(ln.re.dims()));
  }
  const auto& rules = backward_rules();
  const auto need = needs_grad(*this);
  GradBuffer buf;
  buf.need = need;
  buf.grads.resize(nodes_.size());
  buf.grads[static_cast<std::size_t>(loss.id)].re = Tensor(ln.re.dims(), 1.0);
  for (int id = loss.id; id >= 0; --id) {
    const auto uid = static_cast<std::size_t>(id);
    if (!need[uid] || buf.grads[uid].re.empty()) continue;
    const Node& n = nodes_[uid];
    if (n.op == Op::Leaf || n.op == Op::Constant) continue;
    BackwardFn rule = rules[static_cast<std::size_t>(n.op)];
    if (rule == nullptr) throw UsageError(std::string("no backward rule for ") + op_name(n.op));
    CTensor g = std::move(buf.grads[uid]);
    if (n.complex && g.im.empty()) g.im = Tensor(n.re.dims());
    rule(*this, n, g, buf);
  }
  Gradients out;
  for (const auto& [name, id] : params_) {
    auto& g = buf.grads[static_cast<std::size_t>(id)].re;
    out[name] = g.empty() ? Tensor(node(id).re.dims()) : std::move(g);
  }
  return out;
}

Gradients Tape::backward(Var loss, const ParamStore& store) const {
  Gradients g = backward(loss);
  for (const auto& [name, t] : store) {
    if (!g.count(name)) g[name] = Tensor(t.dims());
  }
  return g;
}

namespace {

Tape* tape_of(std::initializer_list<Var> vs) {
  Tape* t = nullptr;
  for (const Var& v : vs) {
    if (v.tape == nullptr) throw UsageError("variable not attached to a tape");
    if (t != nullptr && v.tape != t) throw UsageError("variables from different tapes");
    t = v.tape;
  }
  return t;
}

Node make_node(Op op, std::vector<int> inputs) {
  Node n;
  n.op = op;
  n.inputs = std::move(inputs);
  return n;
}

const Node& in(const Tape& t, const Node& n, std::size_t k) { return t.node(n.inputs[k]); }

void require_real(Var v, const char* what) {
  if (v.is_complex()) throw ShapeError(std::string(what) + " expects a real operand");
}

}  // namespace

Var add(Var a, Var b) {
  Tape* t = tape_of({a, b});
  if (a.is_complex() != b.is_complex()) throw ShapeError("add: real/complex operand mix");
  Node n = make_node(Op::Add, {a.id, b.id});
  n.re = fit::add(a.value(), b.value());
  if (a.is_complex()) {
    n.complex = true;
    n.im = fit::add(a.imag(), b.imag());
  }
  return t->push(std::move(n));
}

Var sub(Var a, Var b) {
  Tape* t = tape_of({a, b});
  if (a.is_complex() != b.is_complex()) throw ShapeError("sub: real/complex operand mix");
  Node n = make_node(Op::Sub, {a.id, b.id});
  n.re = fit::sub(a.value(), b.value());
  if (a.is_complex()) {
    n.complex = true;
    n.im = fit::sub(a.imag(), b.imag());
  }
  return t->push(std::move(n));
}

Var mul(Var a, Var b) {
  Tape* t = tape_of({a, b});
  require_real(a, "mul");
  require_real(b, "mul");
  Node n = make_node(Op::Mul, {a.id, b.id});
  n.re = fit::mul(a.value(), b.value());
  return t->push(std::move(n));
}

Var scale(Var a, double s) {
  Tape* t = tape_of({a});
  Node n = make_node(Op::Scale, {a.id});
  n.scalar = s;
  n.re = fit::scale(a.value(), s);
  if (a.is_complex()) {
    n.complex = true;
    n.im = fit::scale(a.imag(), s);
  }
  return t->push(std::move(n));
}

Var add_row_bias(Var x, Var bias) {
  Tape* t = tape_of({x, bias});
  require_real(x, "add_row_bias");
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || bv.dims() != Shape{xv.dim(1)}) {
    throw ShapeError("add_row_bias: " + shape_str(xv.dims()) + " with bias " + shape_str(bv.dims()));
  }
  Node n = make_node(Op::AddRowBias, {x.id, bias.id});
  n.re = xv;
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) n.re[r * cols + c] += bv[c];
  return t->push(std::move(n));
}

Var relu(Var a) {
  Tape* t = tape_of({a});
  require_real(a, "relu");
  Node n = make_node(Op::Relu, {a.id});
  n.re = fit::relu(a.value());
  return t->push(std::move(n));
}

Var matmul(Var a, Var b) {
  Tape* t = tape_of({a, b});
  require_real(a, "matmul");
  require_real(b, "matmul");
  Node n = make_node(Op::Matmul, {a.id, b.id});
  n.re = fit::matmul(a.value(), b.value());
  return t->push(std::move(n));
}

Var transpose(Var a) {
  Tape* t = tape_of({a});
  Node n = make_node(Op::Transpose, {a.id});
  n.re = fit::transpose(a.value());
  if (a.is_complex()) {
    n.complex = true;
    n.im = fit::transpose(a.imag());
  }
  return t->push(std::move(n));
}

Var reshape(Var a, Shape dims) {
  Tape* t = tape_of({a});
  Node n = make_node(Op::Reshape, {a.id});
  n.re = a.value().reshaped(dims);
  if (a.is_complex()) {
    n.complex = true;
    n.im = a.imag().reshaped(dims);
  }
  return t->push(std::move(n));
}

Var concat0(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat0 of nothing");
  Tape* t = parts.front().tape;
  Shape tail = parts.front().dims();
  std::size_t rows = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    if (p.tape != t) throw UsageError("variables from different tapes");
    require_real(p, "concat0");
    Shape pt = p.dims();
    if (pt.size() != tail.size() || !std::equal(pt.begin() + 1, pt.end(), tail.begin() + 1)) {
      throw ShapeError("concat0: " + shape_str(pt) + " does not stack with " + shape_str(tail));
    }
    rows += pt[0];
    ids.push_back(p.id);
  }
  Shape dims = tail;
  dims[0] = rows;
  Node n = make_node(Op::Concat0, std::move(ids));
  std::vector<double> data;
  data.reserve(shape_numel(dims));
  for (const Var& p : parts) data.insert(data.end(), p.value().vec().begin(), p.value().vec().end());
  n.re = Tensor(dims, std::move(data));
  return t->push(std::move(n));
}

Var slice0(Var a, std::size_t start, std::size_t count) {
  Tape* t = tape_of({a});
  require_real(a, "slice0");
  Shape dims = a.dims();
  if (start + count > dims[0] || count == 0) {
    throw ShapeError("slice0: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of " + shape_str(dims));
  }
  const std::size_t stride = a.value().size() / dims[0];
  dims[0] = count;
  Node n = make_node(Op::Slice0, {a.id});
  n.a = start;
  const auto& src = a.value().vec();
  n.re = Tensor(dims, std::vector<double>(src.begin() + static_cast<std::ptrdiff_t>(start * stride),
                                          src.begin() + static_cast<std::ptrdiff_t>((start + count) * stride)));
  return t->push(std::move(n));
}

Var conv2d(Var x, Var kernel, Var bias) {
  Tape* t = tape_of({x, kernel, bias});
  require_real(x, "conv2d");
  Node n = make_node(Op::Conv2d, {x.id, kernel.id, bias.id});
  n.re = fit::conv2d(x.value(), kernel.value(), bias.value());
  return t->push(std::move(n));
}

Var pconv(Var x, Var w, Var bias) {
  Tape* t = tape_of({x, w, bias});
  require_real(x, "pconv");
  Node n = make_node(Op::Pconv, {x.id, w.id, bias.id});
  n.re = fit::pconv(x.value(), w.value(), bias.value());
  return t->push(std::move(n));
}

Var softmax_rows(Var x) {
  Tape* t = tape_of({x});
  require_real(x, "softmax_rows");
  if (x.value().rank() != 2) throw ShapeError("softmax_rows expects rank 2");
  Node n = make_node(Op::SoftmaxRows, {x.id});
  n.re = fit::softmax(x.value(), 1);
  return t->push(std::move(n));
}

Var comp(Var re, Var im) {
  Tape* t = tape_of({re, im});
  require_real(re, "comp");
  require_real(im, "comp");
  require_same_shape(re.value(), im.value(), "comp");
  Node n = make_node(Op::Comp, {re.id, im.id});
  n.complex = true;
  n.re = re.value();
  n.im = im.value();
  return t->push(std::move(n));
}

Var real_part(Var z) {
  Tape* t = tape_of({z});
  Node n = make_node(Op::RealPart, {z.id});
  n.re = z.value();
  return t->push(std::move(n));
}

Var imag_part(Var z) {
  Tape* t = tape_of({z});
  Node n = make_node(Op::ImagPart, {z.id});
  n.re = z.is_complex() ? z.imag() : Tensor(z.dims());
  return t->push(std::move(n));
}

Var fft2(Var x) {
  Tape* t = tape_of({x});
  Node n = make_node(Op::Fft2, {x.id});
  CTensor f = fft::fft2(x.cvalue());
  n.complex = true;
  n.re = std::move(f.re);
  n.im = std::move(f.im);
  return t->push(std::move(n));
}

Var ifft2(Var z) {
  Tape* t = tape_of({z});
  Node n = make_node(Op::Ifft2, {z.id});
  CTensor f = fft::ifft2(z.cvalue());
  n.complex = true;
  n.re = std::move(f.re);
  n.im = std::move(f.im);
  return t->push(std::move(n));
}

Var cmatmul(Var a, Var b) {
  Tape* t = tape_of({a, b});
  Node n = make_node(Op::CMatmul, {a.id, b.id});
  CTensor p = fit::cmatmul(a.cvalue(), b.cvalue());
  n.complex = true;
  n.re = std::move(p.re);
  n.im = std::move(p.im);
  return t->push(std::move(n));
}

Var bilinear_sample(Var feat, const Tensor& coords) {
  Tape* t = tape_of({feat});
  require_real(feat, "bilinear_sample");
  const Tensor& f = feat.value();
  Node n = make_node(Op::BilinearSample, {feat.id});
  n.re = fit::bilinear_sample(f, coords);
  const std::size_t h = f.dim(1), w = f.dim(2), cnt = coords.dim(0);
  n.index.resize(4 * cnt);
  n.weight.resize(4 * cnt);
  for (std::size_t i = 0; i < cnt; ++i) {
    const auto s = bilinear_stencil(h, w, coords.at(i, 0), coords.at(i, 1));
    for (int k = 0; k < 4; ++k) {
      n.index[4 * i + k] = s.index[k];
      n.weight[4 * i + k] = s.weight[k];
    }
  }
  return t->push(std::move(n));
}

Var nearest_sample(Var feat, const Tensor& coords) {
  Tape* t = tape_of({feat});
  require_real(feat, "nearest_sample");
  const Tensor& f = feat.value();
  Node n = make_node(Op::NearestSample, {feat.id});
  n.re = fit::nearest_sample(f, coords);
  const std::size_t h = f.dim(1), w = f.dim(2), cnt = coords.dim(0);
  n.index.resize(cnt);
  for (std::size_t i = 0; i < cnt; ++i) {
    n.index[i] = nearest_axis_index(coords.at(i, 0), h) * w + nearest_axis_index(coords.at(i, 1), w);
  }
  return t->push(std::move(n));
}

Var local_attention(Var q, Var k, Var v, Var bias, std::size_t heads, double score_scale) {
  Tape* t = tape_of({q, k, v, bias});
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  const Tensor& bv = bias.value();
  if (qv.rank() != 2 || kv.rank() != 2 || qv.dim(0) == 0) throw ShapeError("local_attention: rank");
  const std::size_t n = qv.dim(0), c = qv.dim(1);
  if (heads == 0 || c % heads != 0) throw ConfigError("local_attention: heads must divide channels");
  if (kv.dim(1) != c || kv.dim(0) % n != 0 || vv.dims() != kv.dims()) {
    throw ShapeError("local_attention: q " + shape_str(qv.dims()) + ", k " + shape_str(kv.dims()) +
                     ", v " + shape_str(vv.dims()));
  }
  const std::size_t g = kv.dim(0) / n, dh = c / heads;
  if (bv.dims() != Shape{n * g, heads}) {
    throw ShapeError("local_attention: bias " + shape_str(bv.dims()));
  }
  Node node = make_node(Op::LocalAttention, {q.id, k.id, v.id, bias.id});
  node.a = heads;
  node.b = g;
  node.scalar = score_scale;
  node.saved = Tensor({n, heads, g});
  node.re = Tensor({n, c});
  std::vector<double> logit(g);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t hd = 0; hd < heads; ++hd) {
      double mx = -INFINITY;
      for (std::size_t j = 0; j < g; ++j) {
        const std::size_t row = i * g + j;
        double dot = 0.0;
        for (std::size_t d = hd * dh; d < (hd + 1) * dh; ++d) dot += qv.at(i, d) * kv.at(row, d);
        logit[j] = bv.at(row, hd) + dot * score_scale;
        mx = std::max(mx, logit[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < g; ++j) z += (logit[j] = std::exp(logit[j] - mx));
      for (std::size_t j = 0; j < g; ++j) {
        const double p = logit[j] / z;
        node.saved.at(i, hd, j) = p;
        for (std::size_t d = hd * dh; d < (hd + 1) * dh; ++d) node.re.at(i, d) += p * vv.at(i * g + j, d);
      }
    }
  }
  return t->push(std::move(node));
}

Var sum(Var a) {
  Tape* t = tape_of({a});
  require_real(a, "sum");
  Node n = make_node(Op::Sum, {a.id});
  n.re = Tensor::scalar(fit::sum(a.value()));
  return t->push(std::move(n));
}

Var l1_loss(Var pred, const Tensor& target) {
  Tape* t = tape_of({pred});
  require_real(pred, "l1_loss");
  require_same_shape(pred.value(), target, "l1_loss");
  Node n = make_node(Op::L1Loss, {pred.id});
  n.saved = target;
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) s += std::abs(pred.value()[i] - target[i]);
  n.re = Tensor::scalar(s / static_cast<double>(target.size()));
  return t->push(std::move(n));
}

Var linear(Var x, Var w, Var b) { return add_row_bias(matmul(x, transpose(w)), b); }

// ---------------------------------------------------------------------------
// Backward rules

namespace {

using BF = BackwardFn;


void bw_add(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  buf.accumulate(t, n.inputs[0], g.re, &g.im);
  buf.accumulate(t, n.inputs[1], g.re, &g.im);
}

void bw_sub(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  buf.accumulate(t, n.inputs[0], g.re, &g.im);
  Tensor nr = fit::scale(g.re, -1.0);
  Tensor ni = g.im.empty() ? Tensor() : fit::scale(g.im, -1.0);
  buf.accumulate(t, n.inputs[1], nr, &ni);
}

void bw_mul(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  buf.accumulate(t, n.inputs[0], fit::mul(g.re, in(t, n, 1).re));
  buf.accumulate(t, n.inputs[1], fit::mul(g.re, in(t, n, 0).re));
}

void bw_scale(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  Tensor r = fit::scale(g.re, n.scalar);
  Tensor i = g.im.empty() ? Tensor() : fit::scale(g.im, n.scalar);
  buf.accumulate(t, n.inputs[0], r, &i);
}

void bw_add_row_bias(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  buf.accumulate(t, n.inputs[0], g.re);
  if (!buf.wants(n.inputs[1])) return;
  const std::size_t rows = g.re.dim(0), cols = g.re.dim(1);
  Tensor gb({cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) gb[c] += g.re[r * cols + c];
  buf.accumulate(t, n.inputs[1], gb);
}

void bw_relu(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  Tensor gx(g.re.dims());
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = n.re[i] > 0.0 ? g.re[i] : 0.0;
  buf.accumulate(t, n.inputs[0], gx);
}

void bw_matmul(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  if (buf.wants(n.inputs[0])) buf.accumulate(t, n.inputs[0], fit::matmul(g.re, fit::transpose(in(t, n, 1).re)));
  if (buf.wants(n.inputs[1])) buf.accumulate(t, n.inputs[1], fit::matmul(fit::transpose(in(t, n, 0).re), g.re));
}

void bw_transpose(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  Tensor r = fit::transpose(g.re);
  Tensor i = g.im.empty() ? Tensor() : fit::transpose(g.im);
  buf.accumulate(t, n.inputs[0], r, &i);
}

void bw_reshape(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  const Shape& d = in(t, n, 0).re.dims();
  Tensor r = g.re.reshaped(d);
  Tensor i = g.im.empty() ? Tensor() : g.im.reshaped(d);
  buf.accumulate(t, n.inputs[0], r, &i);
}

void bw_concat0(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  std::size_t offset = 0;
  for (int id : n.inputs) {
    const Tensor& part = t.node(id).re;
    std::vector<double> d(g.re.vec().begin() + static_cast<std::ptrdiff_t>(offset),
                          g.re.vec().begin() + static_cast<std::ptrdiff_t>(offset + part.size()));
    offset += part.size();
    buf.accumulate(t, id, Tensor(part.dims(), std::move(d)));
  }
}

void bw_slice0(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  const Tensor& src = in(t, n, 0).re;
  Tensor gx(src.dims());
  const std::size_t stride = src.size() / src.dim(0);
  std::copy(g.re.vec().begin(), g.re.vec().end(), gx.data().begin() + static_cast<std::ptrdiff_t>(n.a * stride));
  buf.accumulate(t, n.inputs[0], gx);
}

void bw_conv2d(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  const Tensor& x = in(t, n, 0).re;
  const Tensor& k = in(t, n, 1).re;
  const std::size_t cout = k.dim(0), cin = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  const std::size_t h = x.dim(1), w = x.dim(2);
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  const bool want_x = buf.wants(n.inputs[0]);
  const bool want_k = buf.wants(n.inputs[1]);
  Tensor gx(want_x ? x.dims() : Shape{1});
  Tensor gk(k.dims());
  for (std::size_t o = 0; o < cout; ++o) {
    const double* gp = &g.re.at(o, 0, 0);
    for (std::size_t c = 0; c < cin; ++c) {
      const double* xp = &x.at(c, 0, 0);
      double* gxp = want_x ? &gx.at(c, 0, 0) : nullptr;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const long dy = static_cast<long>(ky) - ph, dx = static_cast<long>(kx) - pw;
          const long y0 = std::max(0L, -dy), y1 = std::min<long>(h, static_cast<long>(h) - dy);
          const long x0 = std::max(0L, -dx), x1 = std::min<long>(w, static_cast<long>(w) - dx);
          const std::size_t kidx = ((o * cin + c) * kh + ky) * kw + kx;
          const double kv = k[kidx];
          double acc = 0.0;
          for (long y = y0; y < y1; ++y) {
            const double* grow = gp + y * static_cast<long>(w);
            const long src = (y + dy) * static_cast<long>(w) + dx;
            for (long xx = x0; xx < x1; ++xx) {
              acc += grow[xx] * xp[src + xx];
              if (want_x) gxp[src + xx] += grow[xx] * kv;
            }
          }
          gk[kidx] += acc;
        }
      }
    }
  }
  if (want_x) buf.accumulate(t, n.inputs[0], gx);
  if (want_k) buf.accumulate(t, n.inputs[1], gk);
  if (buf.wants(n.inputs[2])) {
    Tensor gb({cout});
    for (std::size_t o = 0; o < cout; ++o) {
      const double* gp = &g.re.at(o, 0, 0);
      for (std::size_t i = 0; i < h * w; ++i) gb[o] += gp[i];
    }
    buf.accumulate(t, n.inputs[2], gb);
  }
}

void bw_pconv(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  const Tensor& x = in(t, n, 0).re;
  const Tensor& w = in(t, n, 1).re;
  const std::size_t cout = w.dim(0), cin = w.dim(1), hw = x.dim(1) * x.dim(2);
  // Treat maps as (C, HW) matrices: out = W X.
  const Tensor x2 = x.reshaped({cin, hw});
  const Tensor g2 = g.re.reshaped({cout, hw});
  if (buf.wants(n.inputs[0])) buf.accumulate(t, n.inputs[0], fit::matmul(fit::transpose(w), g2).reshaped(x.dims()));
  if (buf.wants(n.inputs[1])) buf.accumulate(t, n.inputs[1], fit::matmul(g2, fit::transpose(x2)));
  if (buf.wants(n.inputs[2])) {
    Tensor gb({cout});
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < hw; ++i) gb[o] += g2[o * hw + i];
    buf.accumulate(t, n.inputs[2], gb);
  }
}

void bw_softmax_rows(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  const Tensor& y = n.re;
  const std::size_t rows = y.dim(0), cols = y.dim(1);
  Tensor gx(y.dims());
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < cols; ++c) dot += g.re[r * cols + c] * y[r * cols + c];
    for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] = y[r * cols + c] * (g.re[r * cols + c] - dot);
  }
  buf.accumulate(t, n.inputs[0], gx);
}

void bw_comp(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  buf.accumulate(t, n.inputs[0], g.re);
  buf.accumulate(t, n.inputs[1], g.im);
}

void bw_real_part(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  Tensor zero(g.re.dims());
  buf.accumulate(t, n.inputs[0], g.re, &zero);
}

void bw_imag_part(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  Tensor zero(g.re.dims());
  buf.accumulate(t, n.inputs[0], zero, &g.re);
}

// The unitary transform's adjoint is its inverse.
void bw_fft2(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  CTensor gi = fft::ifft2(g);
  buf.accumulate(t, n.inputs[0], gi.re, &gi.im);
}

void bw_ifft2(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  // Unperturbed forward transform: conj(ifft2(conj(g))).
  CTensor cg(g.re, fit::scale(g.im, -1.0));
  CTensor f = fft::ifft2(cg);
  Tensor im = fit::scale(f.im, -1.0);
  buf.accumulate(t, n.inputs[0], f.re, &im);
}

CTensor conj_transpose(const Tensor& re, const Tensor& im) {
  return {fit::transpose(re), fit::scale(fit::transpose(im.empty() ? Tensor(re.dims()) : im), -1.0)};
}

void bw_cmatmul(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  const Node& a = in(t, n, 0);
  const Node& b = in(t, n, 1);
  if (buf.wants(n.inputs[0])) {
    CTensor ga = fit::cmatmul(g, conj_transpose(b.re, b.im));
    buf.accumulate(t, n.inputs[0], ga.re, &ga.im);
  }
  if (buf.wants(n.inputs[1])) {
    CTensor gb = fit::cmatmul(conj_transpose(a.re, a.im), g);
    buf.accumulate(t, n.inputs[1], gb.re, &gb.im);
  }
}

void bw_bilinear(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  const Tensor& f = in(t, n, 0).re;
  const std::size_t c = f.dim(0), hw = f.dim(1) * f.dim(2), cnt = g.re.dim(0);
  Tensor gf(f.dims());
  for (std::size_t i = 0; i < cnt; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double gv = g.re.at(i, ch);
      for (int k = 0; k < 4; ++k) gf[ch * hw + n.index[4 * i + k]] += n.weight[4 * i + k] * gv;
    }
  buf.accumulate(t, n.inputs[0], gf);
}

void bw_nearest(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  const Tensor& f = in(t, n, 0).re;
  const std::size_t c = f.dim(0), hw = f.dim(1) * f.dim(2), cnt = g.re.dim(0);
  Tensor gf(f.dims());
  for (std::size_t i = 0; i < cnt; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) gf[ch * hw + n.index[i]] += g.re.at(i, ch);
  buf.accumulate(t, n.inputs[0], gf);
}

void bw_local_attention(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  const Tensor& q = in(t, n, 0).re;
  const Tensor& k = in(t, n, 1).re;
  const Tensor& v = in(t, n, 2).re;
  const std::size_t cnt = q.dim(0), c = q.dim(1), heads = n.a, grp = n.b, dh = c / heads;
  const double s = n.scalar;
  Tensor gq(q.dims()), gk(k.dims()), gv(v.dims()), gbias({cnt * grp, heads});
  std::vector<double> gp(grp);
  for (std::size_t i = 0; i < cnt; ++i) {
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const std::size_t d0 = hd * dh, d1 = d0 + dh;
      double dot = 0.0;
      for (std::size_t j = 0; j < grp; ++j) {
        const std::size_t row = i * grp + j;
        const double p = n.saved.at(i, hd, j);
        double acc = 0.0;
        for (std::size_t d = d0; d < d1; ++d) {
          acc += g.re.at(i, d) * v.at(row, d);
          gv.at(row, d) += p * g.re.at(i, d);
        }
        gp[j] = acc;
        dot += p * acc;
      }
      for (std::size_t j = 0; j < grp; ++j) {
        const std::size_t row = i * grp + j;
        const double gl = n.saved.at(i, hd, j) * (gp[j] - dot);
        gbias.at(row, hd) = gl;
        for (std::size_t d = d0; d < d1; ++d) {
          gq.at(i, d) += s * gl * k.at(row, d);
          gk.at(row, d) += s * gl * q.at(i, d);
        }
      }
    }
  }
  buf.accumulate(t, n.inputs[0], gq);
  buf.accumulate(t, n.inputs[1], gk);
  buf.accumulate(t, n.inputs[2], gv);
  buf.accumulate(t, n.inputs[3], gbias);
}

void bw_sum(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  buf.accumulate(t, n.inputs[0], Tensor(in(t, n, 0).re.dims(), g.re[0]));
}

void bw_l1(const Tape& t, const Node& n, const CTensor& g, GradBuffer& buf) {
  const Tensor& p = in(t, n, 0).re;
  const double f = g.re[0] / static_cast<double>(p.size());
  Tensor gx(p.dims());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - n.saved[i];
    gx[i] = d > 0.0 ? f : (d < 0.0 ? -f : 0.0);
  }
  buf.accumulate(t, n.inputs[0], gx);
}

std::array<BackwardFn, kOpCount> build_rules() {
  std::array<BackwardFn, kOpCount> r{};
  auto set = [&r](Op op, BF fn) { r[static_cast<std::size_t>(op)] = fn; };
  set(Op::Add, bw_add);
  set(Op::Sub, bw_sub);
  set(Op::Mul, bw_mul);
  set(Op::Scale, bw_scale);
  set(Op::AddRowBias, bw_add_row_bias);
  set(Op::Relu, bw_relu);
  set(Op::Matmul, bw_matmul);
  set(Op::Transpose, bw_transpose);
  set(Op::Reshape, bw_reshape);
  set(Op::Concat0, bw_concat0);
  set(Op::Slice0, bw_slice0);
  set(Op::Conv2d, bw_conv2d);
  set(Op::Pconv, bw_pconv);
  set(Op::SoftmaxRows, bw_softmax_rows);
  set(Op::Comp, bw_comp);
  set(Op::RealPart, bw_real_part);
  set(Op::ImagPart, bw_imag_part);
  set(Op::Fft2, bw_fft2);
  set(Op::Ifft2, bw_ifft2);
  set(Op::CMatmul, bw_cmatmul);
  set(Op::BilinearSample, bw_bilinear);
  set(Op::NearestSample, bw_nearest);
  set(Op::LocalAttention, bw_local_attention);
  set(Op::Sum, bw_sum);
  set(Op::L1Loss, bw_l1);
  return r;
}

}  // namespace

const std::array<BackwardFn, kOpCount>& backward_rules() {
  static const std::array<BackwardFn, kOpCount> rules = build_rules();
  return rules;
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const LossFn& loss_fn, const ParamStore& params, double h,
                           std::size_t max_coords, std::uint64_t seed) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw UsageError("grad_check step must lie in [1e-7, 1e-3]");
  Gradients analytic;
  {
    Tape tape;
    Var loss = loss_fn(tape, params);
    analytic = tape.backward(loss, params);
  }
  auto eval = [&](const ParamStore& p) {
    Tape tape;
    return loss_fn(tape, p).value().item();
  };

  GradCheckResult res;
  std::mt19937_64 rng(seed);
  ParamStore work = params;
  for (const auto& [name, value] : params) {
    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), 0);
    const std::size_t budget = std::max<std::size_t>(max_coords, 32);
    if (coords.size() > budget) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(budget);
      std::sort(coords.begin(), coords.end());
    }
    Tensor& slot = work.at(name);
    const Tensor& grad = analytic.at(name);
    for (std::size_t idx : coords) {
      const double orig = slot[idx];
      slot[idx] = orig + h;
      const double up = eval(work);
      slot[idx] = orig - h;
      const double down = eval(work);
      slot[idx] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = grad[idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++res.probes;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = name;
        res.worst_index = idx;
      }
    }
  }
  return res;
}

}  // namespace ad
}  // namespace fit
