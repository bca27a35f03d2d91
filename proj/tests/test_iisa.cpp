#include <doctest.h>

#include <cmath>

#include "fit/fft.hpp"
#include "fit/iisa.hpp"
#include "fit/testing/oracles.hpp"

using namespace fit;
using fit::testing::random_tensor;

namespace {

ModelConfig small(std::size_t c, std::size_t s, std::size_t heads) {
  ModelConfig cfg;
  cfg.channels = c;
  cfg.subspaces = s;
  cfg.heads = heads;
  cfg.pe_length = 3;
  cfg.pe_hidden = 8;
  return cfg;
}

Tensor identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

}  // namespace

TEST_CASE("zero projections give a zero query map") {
  const ModelConfig cfg = small(4, 2, 2);
  Rng rng(1);
  IisaParams p = IisaParams::init(cfg, rng);
  p.store.set("sub0.w", Tensor({2, 4}));
  p.store.set("sub1.w", Tensor({2, 8}));
  p.store.set("fuse.w", identity(4));
  p.store.set("fuse.b", Tensor({4}));
  CHECK(max_abs(project_subspaces(random_tensor({4, 5, 5}, 2), p, cfg)) == 0.0);
}

TEST_CASE("spatial identity embedding passes the first half of the channels") {
  const ModelConfig cfg = small(4, 2, 2);
  Rng rng(3);
  IisaParams p = IisaParams::init(cfg, rng);
  Tensor embed({2, 4});
  embed.at(0, 0) = embed.at(1, 1) = 1.0;
  p.store.set("sub0.w", embed);
  p.store.set("sub1.w", Tensor({2, 8}));
  p.store.set("fuse.w", identity(4));
  p.store.set("fuse.b", Tensor({4}));
  const Tensor z = random_tensor({4, 3, 6}, 4);
  const Tensor q = project_subspaces(z, p, cfg);
  for (std::size_t i = 0; i < 18; ++i) {
    CHECK(q[i] == z[i]);
    CHECK(q[18 + i] == z[18 + i]);
    CHECK(q[36 + i] == 0.0);
    CHECK(q[54 + i] == 0.0);
  }
}

TEST_CASE("frequency subspaces of a constant image see only the DC bin") {
  const ModelConfig cfg = small(4, 4, 2);
  Rng rng(5);
  const IisaParams p = IisaParams::init(cfg, rng);
  const std::size_t h = 5, w = 6, n = h * w;
  Tensor z({4, h, w});
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < n; ++i) z[c * n + i] = 0.3 * static_cast<double>(c) - 0.4;

  // Spectrum written down directly: value c * sqrt(HW) at bin 0, zero elsewhere.
  Tensor spectrum({8, h, w});
  for (std::size_t c = 0; c < 4; ++c) spectrum[c * n] = z[c * n] * std::sqrt(static_cast<double>(n));
  std::vector<Tensor> parts;
  for (std::size_t k = 0; k < 4; ++k) {
    const Tensor& wk = p.store.at("sub" + std::to_string(k) + ".w");
    parts.push_back(pconv(is_frequency_subspace(cfg, k) ? spectrum : z, wk, Tensor({1})));
  }
  Tensor cat({4, h, w});
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < n; ++i) cat[k * n + i] = parts[k][i];
  const Tensor expect = pconv(cat, p.store.at("fuse.w"), p.store.at("fuse.b"));
  CHECK(max_abs_diff(project_subspaces(z, p, cfg), expect) < 1e-10);
}

TEST_CASE("uniform logits average the grid values") {
  const ModelConfig cfg = small(4, 2, 2);
  Rng rng(6);
  IisaParams p = IisaParams::init(cfg, rng);
  p.store.set("pe2.w", Tensor(p.store.at("pe2.w").dims()));
  const Tensor v = random_tensor({4, 6, 6}, 7);
  const double qy = 0.05, qx = -0.2;
  const Tensor out = iisa_attend(Tensor({4, 6, 6}), v, qy, qx, 0.1, 0.1, p, cfg);
  const QueryGrid g = make_query_grid(qy, qx, 6, 6, 3, 3);
  const Tensor vs = nearest_sample(v, g.coords);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 9; ++j) mean += vs.at(j, c) / 9.0;
    CHECK(std::abs(out.at(0, c) - mean) < 1e-12);
  }
}

TEST_CASE("a single key returns its value") {
  ModelConfig cfg = small(4, 2, 2);
  cfg.grid_h = cfg.grid_w = 1;
  Rng rng(8);
  const IisaParams p = IisaParams::init(cfg, rng);
  const Tensor q = random_tensor({4, 5, 5}, 9), v = random_tensor({4, 5, 5}, 10);
  const Tensor out = iisa_attend(q, v, 0.33, -0.71, 0.05, 0.05, p, cfg);
  const Tensor expect = nearest_sample(v, Tensor({1, 2}, {0.33, -0.71}));
  CHECK(max_abs_diff(out, expect) == 0.0);
}

TEST_CASE("random tiny instances match the scalar-loop oracle") {
  ModelConfig cfg = small(8, 2, 2);
  cfg.pe_length = 10;
  Rng rng(11);
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    IisaParams p = IisaParams::init(cfg, rng);
    for (auto& [name, tensor] : p.store) tensor = random_tensor(tensor.dims(), 100 + t, -0.8, 0.8);
    const Tensor q = random_tensor({8, 4, 4}, 200 + t), v = random_tensor({8, 4, 4}, 300 + t);
    const double qy = rng.uniform(-1.0, 1.0), qx = rng.uniform(-1.0, 1.0);
    const Tensor got = iisa_attend(q, v, qy, qx, 0.125, 0.25, p, cfg);
    const auto expect = fit::testing::iisa_attend_oracle(q, v, qy, qx, 0.125, 0.25, p.store, cfg);
    for (std::size_t c = 0; c < 8; ++c) worst = std::max(worst, std::abs(got.at(0, c) - expect[c]));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("attention weights form distributions and ignore per-head logit shifts") {
  // With one-hot values the output row is the weight vector itself.
  const std::size_t group = 9;
  ad::Tape t;
  const Tensor q = random_tensor({1, group}, 12, -3.0, 3.0), k = random_tensor({group, group}, 13, -3.0, 3.0);
  const Tensor bias = random_tensor({group, 1}, 14, -3.0, 3.0);
  Tensor eye({group, group});
  for (std::size_t i = 0; i < group; ++i) eye.at(i, i) = 1.0;
  const Tensor wts =
      ad::local_attention(t.constant(q), t.constant(k), t.constant(eye), t.constant(bias), 1, 0.5).value();
  double s = 0.0;
  for (double e : wts.data()) {
    CHECK(e >= 0.0);
    s += e;
  }
  CHECK(std::abs(s - 1.0) < 1e-9);

  Tensor shifted = bias;
  for (double& e : shifted.data()) e += 4.2;
  const Tensor again =
      ad::local_attention(t.constant(q), t.constant(k), t.constant(eye), t.constant(shifted), 1, 0.5).value();
  CHECK(max_abs_diff(wts, again) < 1e-12);
}

TEST_CASE("temperature equals the square root of the head width") {
  for (const auto& [c, h] : {std::pair<std::size_t, std::size_t>{16, 8}, {8, 2}, {12, 3}, {64, 8}}) {
    ModelConfig cfg = small(c, 2, h);
    CHECK(std::abs(cfg.attention_temperature() - std::sqrt(static_cast<double>(cfg.head_dim()))) < 1e-12);
    CHECK_NOTHROW(cfg.validate());
  }
}

TEST_CASE("all-spatial subspaces differ from the mixed layout") {
  ModelConfig mixed = small(8, 4, 2);
  ModelConfig spatial = mixed;
  spatial.subspace_mode = SubspaceMode::Spatial;
  Rng ra(15), rb(15);
  const IisaParams pm = IisaParams::init(mixed, ra), ps = IisaParams::init(spatial, rb);
  CHECK(ps.store.at("sub1.w").dims() == Shape{2, 8});
  CHECK(pm.store.at("sub1.w").dims() == Shape{2, 16});
  const Tensor z = random_tensor({8, 5, 5}, 16);
  CHECK(max_abs_diff(project_subspaces(z, pm, mixed), project_subspaces(z, ps, spatial)) > 1e-6);
}

TEST_CASE("invalid subspace layouts are rejected") {
  CHECK_THROWS_AS(small(8, 3, 2).validate(), ConfigError);
  CHECK_THROWS_AS(small(12, 8, 2).validate(), ConfigError);
  CHECK_THROWS_AS(small(8, 2, 3).validate(), ConfigError);
}
