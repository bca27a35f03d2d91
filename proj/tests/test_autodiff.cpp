#include <doctest.h>

#include <cmath>

#include "fit/autodiff.hpp"
#include "fit/errors.hpp"
#include "fit/fim.hpp"
#include "fit/testing/oracles.hpp"

using namespace fit;
using fit::testing::random_tensor;

namespace {

// Independent central differences over every coordinate.
Gradients numeric_grad(const ad::LossFn& fn, const ParamStore& params, double h) {
  Gradients out;
  ParamStore work = params;
  for (const auto& [name, value] : params) {
    Tensor g(value.dims());
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = work.at(name)[i];
      work.at(name)[i] = orig + h;
      ad::Tape up;
      const double fu = fn(up, work).value().item();
      work.at(name)[i] = orig - h;
      ad::Tape down;
      const double fd = fn(down, work).value().item();
      work.at(name)[i] = orig;
      g[i] = (fu - fd) / (2.0 * h);
    }
    out[name] = g;
  }
  return out;
}

double worst_rel(const Gradients& a, const Gradients& b) {
  double worst = 0.0;
  for (const auto& [name, ga] : a) {
    const Tensor& gb = b.at(name);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double d = std::max({std::abs(ga[i]), std::abs(gb[i]), 1e-8});
      worst = std::max(worst, std::abs(ga[i] - gb[i]) / d);
    }
  }
  return worst;
}

Gradients analytic(const ad::LossFn& fn, const ParamStore& params) {
  ad::Tape t;
  return t.backward(fn(t, params), params);
}

// Smooth scalar readout of a real node: sum(out * r) for a fixed random r.
ad::Var readout(ad::Var out, std::uint64_t seed) {
  return ad::sum(ad::mul(out, out.tape->constant(random_tensor(out.dims(), seed))));
}

ad::Var creadout(ad::Var z, std::uint64_t seed) {
  return ad::add(readout(ad::real_part(z), seed), readout(ad::imag_part(z), seed + 1));
}

}  // namespace

TEST_CASE("x squared at 3") {
  ParamStore p;
  p.set("x", Tensor({1}, {3.0}));
  ad::Tape t;
  ad::Var x = t.param("x", p.at("x"));
  const Gradients g = t.backward(ad::sum(ad::mul(x, x)));
  CHECK(g.at("x")[0] == 6.0);
}

TEST_CASE("sum of a matrix product against central differences") {
  ParamStore p;
  p.set("A", random_tensor({3, 4}, 1));
  p.set("B", random_tensor({4, 2}, 2));
  const ad::LossFn fn = [](ad::Tape& t, const ParamStore& s) {
    return ad::sum(ad::matmul(t.param("A", s.at("A")), t.param("B", s.at("B"))));
  };
  CHECK(worst_rel(analytic(fn, p), numeric_grad(fn, p, 1e-5)) < 1e-6);
}

TEST_CASE("squared spectrum norm has gradient 2x") {
  ParamStore p;
  p.set("x", random_tensor({2, 5, 6}, 3));
  ad::Tape t;
  ad::Var f = ad::fft2(t.param("x", p.at("x")));
  ad::Var re = ad::real_part(f), im = ad::imag_part(f);
  const Gradients g = t.backward(ad::add(ad::sum(ad::mul(re, re)), ad::sum(ad::mul(im, im))));
  CHECK(max_abs_diff(g.at("x"), scale(p.at("x"), 2.0)) < 1e-8);
}

TEST_CASE("grad_check on a quadratic form") {
  ParamStore p;
  p.set("x", random_tensor({5, 1}, 4));
  const Tensor a = random_tensor({5, 5}, 5);
  const ad::LossFn fn = [&](ad::Tape& t, const ParamStore& s) {
    ad::Var x = t.param("x", s.at("x"));
    return ad::sum(ad::mul(x, ad::matmul(t.constant(a), x)));
  };
  CHECK(ad::grad_check(fn, p, 1e-5).max_rel_error < 1e-8);
  CHECK_THROWS_AS(ad::grad_check(fn, p, 1e-2), UsageError);
  CHECK_THROWS_AS(ad::grad_check(fn, p, 1e-8), UsageError);
}

TEST_CASE("grad_check probes a subset of large parameters") {
  ParamStore p;
  p.set("big", random_tensor({400}, 6));
  const ad::LossFn fn = [](ad::Tape& t, const ParamStore& s) {
    ad::Var x = t.param("big", s.at("big"));
    return ad::sum(ad::mul(x, x));
  };
  const ad::GradCheckResult r = ad::grad_check(fn, p, 1e-5, 40);
  CHECK(r.probes == 40);
  CHECK(r.max_rel_error < 1e-8);
  CHECK(ad::grad_check(fn, p, 1e-5, 8).probes == 32);
}

TEST_CASE("full FIM block on a 4-channel 6x6 input") {
  Rng rng(7);
  ParamStore p;
  init_fim(p, "", 4, rng);
  for (auto& [name, t] : p)
    if (name.size() > 2 && name.substr(name.size() - 2) == ".b") t = random_tensor(t.dims(), 8, -0.1, 0.1);
  const Tensor x = random_tensor({4, 6, 6}, 9);
  const ad::LossFn fn = [&](ad::Tape& t, const ParamStore& s) {
    ad::Var y = fim_forward(t.constant(x), Scope{&t, &s, ""});
    return ad::sum(ad::mul(y, y));
  };
  // conv_im.b only reaches the discarded imaginary plane.
  ParamStore probed, inert;
  for (const auto& [n, t] : p) (n == "conv_im.b" ? inert : probed).set(n, t);
  const ad::LossFn merged = [&](ad::Tape& t, const ParamStore& s) {
    ParamStore all = inert;
    for (const auto& [n, v] : s) all.set(n, v);
    return fn(t, all);
  };
  CHECK(ad::grad_check(merged, probed, 1e-5).max_rel_error < 1e-4);
  CHECK(max_abs(analytic(fn, p).at("conv_im.b")) < 1e-12);
}

TEST_CASE("every forward op has a backward rule") {
  const auto& rules = ad::backward_rules();
  for (std::size_t i = 0; i < ad::kOpCount; ++i) {
    const auto op = static_cast<ad::Op>(i);
    CAPTURE(ad::op_name(op));
    if (op == ad::Op::Leaf || op == ad::Op::Constant) continue;
    CHECK(rules[i] != nullptr);
  }
}

TEST_CASE("each op's backward rule against central differences") {
  const Tensor img = random_tensor({2, 4, 5}, 10);
  const Tensor coords({4, 2}, {-0.9, 0.3, 0.12, -0.47, 0.61, 0.88, 1.2, -1.3});
  struct Case {
    const char* name;
    std::vector<std::pair<std::string, Tensor>> params;
    std::function<ad::Var(ad::Tape&, const Scope&)> body;
  };
  const std::vector<Case> cases = {
      {"add_sub_mul_scale",
       {{"a", random_tensor({3, 4}, 11)}, {"b", random_tensor({3, 4}, 12)}},
       [](ad::Tape&, const Scope& s) {
         return readout(ad::scale(ad::mul(ad::add(s("a"), s("b")), ad::sub(s("a"), s("b"))), 0.7), 1);
       }},
      {"add_row_bias_relu",
       {{"x", random_tensor({4, 3}, 13)}, {"b", random_tensor({3}, 14)}},
       [](ad::Tape&, const Scope& s) { return readout(ad::relu(ad::add_row_bias(s("x"), s("b"))), 2); }},
      {"matmul_transpose_reshape",
       {{"a", random_tensor({3, 4}, 15)}, {"b", random_tensor({3, 2}, 16)}},
       [](ad::Tape&, const Scope& s) {
         return readout(ad::reshape(ad::matmul(ad::transpose(s("a")), s("b")), {2, 4}), 3);
       }},
      {"concat_slice",
       {{"a", random_tensor({2, 3}, 17)}, {"b", random_tensor({3, 3}, 18)}},
       [](ad::Tape&, const Scope& s) { return readout(ad::slice0(ad::concat0({s("a"), s("b")}), 1, 3), 4); }},
      {"conv2d",
       {{"x", random_tensor({2, 5, 4}, 19)}, {"k", random_tensor({3, 2, 3, 3}, 20)}, {"b", random_tensor({3}, 21)}},
       [](ad::Tape&, const Scope& s) { return readout(ad::conv2d(s("x"), s("k"), s("b")), 5); }},
      {"pconv",
       {{"x", random_tensor({2, 3, 4}, 22)}, {"w", random_tensor({3, 2}, 23)}, {"b", random_tensor({3}, 24)}},
       [](ad::Tape&, const Scope& s) { return readout(ad::pconv(s("x"), s("w"), s("b")), 6); }},
      {"softmax_rows",
       {{"x", random_tensor({3, 5}, 25, -2.0, 2.0)}},
       [](ad::Tape&, const Scope& s) { return readout(ad::softmax_rows(s("x")), 7); }},
      {"comp_fft_ifft",
       {{"re", random_tensor({1, 3, 5}, 26)}, {"im", random_tensor({1, 3, 5}, 27)}},
       [](ad::Tape&, const Scope& s) { return creadout(ad::ifft2(ad::fft2(ad::comp(s("re"), s("im")))), 8); }},
      {"fft_real_input",
       {{"x", random_tensor({2, 4, 3}, 28)}},
       [](ad::Tape&, const Scope& s) { return creadout(ad::fft2(s("x")), 10); }},
      {"cmatmul",
       {{"ar", random_tensor({2, 3}, 29)}, {"ai", random_tensor({2, 3}, 30)}, {"br", random_tensor({3, 2}, 31)},
        {"bi", random_tensor({3, 2}, 32)}},
       [](ad::Tape&, const Scope& s) {
         return creadout(ad::cmatmul(ad::comp(s("ar"), s("ai")), ad::comp(s("br"), s("bi"))), 12);
       }},
      {"bilinear_nearest",
       {{"f", img}},
       [&](ad::Tape&, const Scope& s) {
         return ad::add(readout(ad::bilinear_sample(s("f"), coords), 14), readout(ad::nearest_sample(s("f"), coords), 15));
       }},
      {"local_attention",
       {{"q", random_tensor({2, 4}, 33)}, {"k", random_tensor({6, 4}, 34)}, {"v", random_tensor({6, 4}, 35)},
        {"bias", random_tensor({6, 2}, 36)}},
       [](ad::Tape&, const Scope& s) { return readout(ad::local_attention(s("q"), s("k"), s("v"), s("bias"), 2, 0.6), 16); }},
      {"linear_l1",
       {{"x", random_tensor({4, 3}, 37)}, {"w", random_tensor({2, 3}, 38)}, {"b", random_tensor({2}, 39)}},
       [](ad::Tape&, const Scope& s) {
         // Targets far from the outputs keep every residual away from the kink.
         return ad::l1_loss(ad::linear(s("x"), s("w"), s("b")), Tensor({4, 2}, 10.0));
       }},
  };
  for (const Case& c : cases) {
    CAPTURE(c.name);
    ParamStore p;
    for (const auto& [n, t] : c.params) p.set(n, t);
    const ad::LossFn fn = [&](ad::Tape& t, const ParamStore& s) { return c.body(t, Scope{&t, &s, ""}); };
    CHECK(worst_rel(analytic(fn, p), numeric_grad(fn, p, 1e-6)) < 1e-6);
  }
}

TEST_CASE("a tied weight receives the sum of both path gradients") {
  ParamStore p;
  p.set("w", random_tensor({3, 3}, 40));
  const Tensor a = random_tensor({3, 2}, 41), b = random_tensor({3, 2}, 42);
  const ad::LossFn fn = [&](ad::Tape& t, const ParamStore& s) {
    ad::Var w = t.param("w", s.at("w"));
    ad::Var w2 = t.param("w", s.at("w"));  // same leaf
    return ad::sum(ad::mul(ad::matmul(w, t.constant(a)), ad::matmul(w2, t.constant(b))));
  };
  {
    ad::Tape t;
    CHECK(t.param("w", p.at("w")).id == t.param("w", p.at("w")).id);
  }
  CHECK(worst_rel(analytic(fn, p), numeric_grad(fn, p, 1e-6)) < 1e-7);
  // Closed form: d/dW sum((W a) * (W b)) = W (b a^T + a b^T).
  const Tensor& w = p.at("w");
  const Tensor expect = matmul(w, add(matmul(b, transpose(a)), matmul(a, transpose(b))));
  CHECK(max_abs_diff(analytic(fn, p).at("w"), expect) < 1e-12);
}

TEST_CASE("unused parameters get zero gradients; non-scalar losses are rejected") {
  ParamStore p;
  p.set("used", random_tensor({2}, 43));
  p.set("unused", random_tensor({2, 3}, 44));
  ad::Tape t;
  ad::Var u = t.param("used", p.at("used"));
  const Gradients g = t.backward(ad::sum(u), p);
  CHECK(g.at("unused") == Tensor({2, 3}));
  CHECK(g.at("used") == Tensor({2}, 1.0));
  CHECK_THROWS_AS(t.backward(u), UsageError);
}

TEST_CASE("sampling backward routes cotangents") {
  ParamStore p;
  p.set("f", Tensor({1, 1, 4}));
  ad::Tape t;
  // x = 0: midway between the centers of pixels 1 and 2.
  const Tensor mid({1, 2}, {0.0, 0.0});
  ad::Var f = t.param("f", p.at("f"));
  const Gradients gn = t.backward(ad::sum(ad::nearest_sample(f, mid)));
  CHECK(gn.at("f") == Tensor({1, 1, 4}, {0.0, 1.0, 0.0, 0.0}));
  ad::Tape t2;
  ad::Var f2 = t2.param("f", p.at("f"));
  const Tensor q({1, 2}, {0.0, -0.125});  // continuous index 1.25
  const Gradients gb = t2.backward(ad::sum(ad::bilinear_sample(f2, q)));
  CHECK(max_abs_diff(gb.at("f"), Tensor({1, 1, 4}, {0.0, 0.75, 0.25, 0.0})) < 1e-12);
}
