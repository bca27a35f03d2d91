#include "fit/train.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace fit {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (epochs == 0) fail("epochs must be >= 1");
  if (steps_per_epoch == 0) fail("steps_per_epoch must be >= 1");
  if (warmup_epochs >= epochs) fail("warmup_epochs must be < epochs");
  if (!(scale_min >= 1.0) || !(scale_max >= scale_min)) fail("scale bounds must satisfy 1 <= scale_min <= scale_max");
  if (patch_size == 0) fail("patch_size must be >= 1");
  if (sample_pixels == 0) fail("sample_pixels must be >= 1");
  if (!(lr_start > 0.0) || !(lr_base > 0.0) || !(lr_floor >= 0.0)) fail("learning rates must be positive");
}

TrainConfig TrainConfig::paper_scale() {
  TrainConfig c;
  c.batch_size = 32;
  c.epochs = 1000;
  c.warmup_epochs = 50;
  c.patch_size = 48;
  c.sample_pixels = 48 * 48;
  return c;
}

Tensor hflip(const Tensor& img) {
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out(img.dims());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(ch, y, w - 1 - x) = img.at(ch, y, x);
  return out;
}

Tensor vflip(const Tensor& img) {
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out(img.dims());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(ch, h - 1 - y, x) = img.at(ch, y, x);
  return out;
}

Tensor rot90(const Tensor& img) {
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out({c, w, h});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(ch, w - 1 - x, y) = img.at(ch, y, x);
  return out;
}

Augmentation Augmentation::random(Rng& rng) {
  Augmentation a;
  a.hflip = rng.coin();
  a.vflip = rng.coin();
  a.rot90 = rng.coin();
  return a;
}

Tensor apply(const Augmentation& a, const Tensor& img) {
  Tensor out = img;
  if (a.hflip) out = hflip(out);
  if (a.vflip) out = vflip(out);
  if (a.rot90) out = rot90(out);
  return out;
}

SynthPair synth_pair(const Tensor& hr_patch, double eta, Rng& rng, std::size_t n_samples,
                     const Augmentation& aug) {
  if (hr_patch.rank() != 3) throw ShapeError("synth_pair expects (C, H, W), got " + shape_str(hr_patch.dims()));
  if (!(eta >= 1.0)) throw UsageError("synth_pair scale must be >= 1");
  const auto min_side = static_cast<std::size_t>(std::ceil(eta));
  if (hr_patch.dim(1) < min_side || hr_patch.dim(2) < min_side) {
    throw UsageError("patch " + shape_str(hr_patch.dims()) + " is smaller than scale " + std::to_string(eta));
  }
  const Tensor hr = apply(aug, hr_patch);
  const std::size_t c = hr.dim(0), sh = hr.dim(1), sw = hr.dim(2);
  const auto lh = static_cast<std::size_t>(std::floor(static_cast<double>(sh) / eta + 1e-9));
  const auto lw = static_cast<std::size_t>(std::floor(static_cast<double>(sw) / eta + 1e-9));

  SynthPair p;
  p.lr = transpose(bilinear_sample(hr, make_coord_grid(lh, lw).coords)).reshaped({c, lh, lw});

  const std::size_t total = sh * sw, n = std::min(n_samples, total);
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  if (n < total) {
    for (std::size_t i = 0; i < n; ++i) std::swap(order[i], order[i + rng.below(total - i)]);
  }
  p.coords = Tensor({n, 2});
  p.cells = Tensor({n, 2});
  p.targets = Tensor({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = order[i] / sw, x = order[i] % sw;
    p.coords.at(i, 0) = pixel_center(y, sh);
    p.coords.at(i, 1) = pixel_center(x, sw);
    p.cells.at(i, 0) = 2.0 / static_cast<double>(sh);
    p.cells.at(i, 1) = 2.0 / static_cast<double>(sw);
    for (std::size_t ch = 0; ch < c; ++ch) p.targets.at(i, ch) = hr.at(ch, y, x);
  }
  return p;
}

double l1_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "l1_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, double lr, const AdamHyper& hp) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    require_same_shape(p, g, "adam_step");
    Tensor& m = state.m[name];
    Tensor& v = state.v[name];
    if (m.empty()) m = Tensor(p.dims());
    if (v.empty()) v = Tensor(p.dims());
    require_same_shape(p, m, "adam_step state");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
  }
}

double lr_at(double epoch, const TrainConfig& cfg) {
  const double total = static_cast<double>(cfg.epochs);
  const double warm = static_cast<double>(cfg.warmup_epochs);
  if (epoch < 0.0 || epoch > total) throw UsageError("epoch outside [0, epochs]");
  if (epoch < warm) return cfg.lr_start + (cfg.lr_base - cfg.lr_start) * epoch / warm;
  const double progress = (epoch - warm) / (total - warm);
  return cfg.lr_floor + 0.5 * (cfg.lr_base - cfg.lr_floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

ad::Var batch_loss(ad::Tape& tape, const ParamStore& store, const ModelConfig& cfg,
                   const std::vector<SynthPair>& batch) {
  if (batch.empty()) throw UsageError("empty batch");
  const Scope scope{&tape, &store, ""};
  ad::Var total{};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const SynthPair& p = batch[i];
    ImageFeatures f = image_features(tape.constant(p.lr), scope, cfg);
    ad::Var loss = ad::l1_loss(predict_rgb(f, p.lr, p.coords, p.cells, scope, cfg), p.targets);
    total = i == 0 ? loss : ad::add(total, loss);
  }
  return ad::scale(total, 1.0 / static_cast<double>(batch.size()));
}

Trainer::Trainer(ModelParams& params, TrainConfig cfg, std::vector<Tensor> images)
    : params_(params), cfg_(cfg), images_(std::move(images)), rng_(cfg.seed) {
  cfg_.validate();
  params_.config.validate();
  if (images_.empty()) throw UsageError("no training images found");
  for (const Tensor& img : images_) {
    if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("training images must be (3, H, W)");
  }
}

std::vector<SynthPair> Trainer::draw_batch() {
  std::vector<SynthPair> batch;
  batch.reserve(cfg_.batch_size);
  for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
    const Tensor& img = images_[rng_.below(images_.size())];
    const double eta = cfg_.scale_max > cfg_.scale_min ? rng_.uniform(cfg_.scale_min, cfg_.scale_max) : cfg_.scale_min;
    const std::size_t h = img.dim(1), w = img.dim(2);
    std::size_t side = static_cast<std::size_t>(std::lround(static_cast<double>(cfg_.patch_size) * eta));
    side = std::min({side, h, w});
    const std::size_t y0 = rng_.below(h - side + 1), x0 = rng_.below(w - side + 1);
    Tensor patch({3, side, side});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) patch.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    const Augmentation aug = cfg_.augment ? Augmentation::random(rng_) : Augmentation{};
    batch.push_back(synth_pair(patch, eta, rng_, cfg_.sample_pixels, aug));
  }
  return batch;
}

StepRecord Trainer::step() {
  StepRecord rec;
  rec.step = step_;
  rec.epoch = std::min(step_ / cfg_.steps_per_epoch, cfg_.epochs);
  rec.lr = lr_at(static_cast<double>(rec.epoch), cfg_);
  const std::vector<SynthPair> batch = draw_batch();
  ad::Tape tape;
  ad::Var loss = batch_loss(tape, params_.store, params_.config, batch);
  rec.loss = loss.value().item();
  adam_step(params_.store, tape.backward(loss, params_.store), adam_, rec.lr);
  ++params_.iteration;
  ++step_;
  return rec;
}

std::vector<StepRecord> Trainer::run(const std::function<void(const StepRecord&)>& on_step) {
  std::vector<StepRecord> log;
  while (step_ < cfg_.total_steps()) {
    log.push_back(step());
    if (on_step) on_step(log.back());
  }
  return log;
}

}  // namespace fit
