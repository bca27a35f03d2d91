#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fit/model.hpp"
#include "fit/rng.hpp"

namespace fit {

struct TrainConfig {
  std::size_t batch_size = 4;
  std::size_t epochs = 200;
  std::size_t steps_per_epoch = 1;
  double lr_start = 1e-5;
  double lr_base = 1e-4;
  double lr_floor = 1e-6;
  std::size_t warmup_epochs = 10;
  std::size_t patch_size = 24;  // LR patch side; HR patch is round(patch_size * eta)
  double scale_min = 1.0;
  double scale_max = 4.0;
  std::size_t sample_pixels = 576;  // coordinate-RGB pairs per patch
  bool augment = true;
  std::uint64_t seed = 0;

  std::size_t total_steps() const { return epochs * steps_per_epoch; }
  void validate() const;

  // Full-scale recipe: batch 32, 1000 epochs, 50 warm-up epochs, 48 px patches.
  static TrainConfig paper_scale();

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Geometric augmentations applied to (C, H, W) images.
Tensor hflip(const Tensor& img);
Tensor vflip(const Tensor& img);
Tensor rot90(const Tensor& img);  // counter-clockwise

struct Augmentation {
  bool hflip = false;
  bool vflip = false;
  bool rot90 = false;
  static Augmentation random(Rng& rng);
};
Tensor apply(const Augmentation& a, const Tensor& img);

// One training example synthesized from an HR patch.
struct SynthPair {
  Tensor lr;       // (3, floor(s / eta), floor(s / eta))
  Tensor coords;   // (n, 2) HR pixel centers
  Tensor cells;    // (n, 2)
  Tensor targets;  // (n, 3) HR RGB at coords
};

// Augments the HR patch, derives the LR patch by bilinear resampling and draws
// n coordinate-RGB pairs without replacement from the HR pixel centers.
SynthPair synth_pair(const Tensor& hr_patch, double eta, Rng& rng, std::size_t n_samples,
                     const Augmentation& aug = {});

double l1_loss(const Tensor& pred, const Tensor& target);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t step = 0;
};

// Bias-corrected Adam update of every parameter that has a gradient.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, double lr,
               const AdamHyper& hyper = {});

// Linear warm-up lr_start -> lr_base, then cosine decay lr_base -> lr_floor.
double lr_at(double epoch, const TrainConfig& cfg);

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

// Mean L1 over a batch of synthesized pairs, on one tape.
ad::Var batch_loss(ad::Tape& tape, const ParamStore& store, const ModelConfig& cfg,
                   const std::vector<SynthPair>& batch);

class Trainer {
 public:
  Trainer(ModelParams& params, TrainConfig cfg, std::vector<Tensor> images);

  // Draws one batch, takes one optimizer step and returns its record.
  StepRecord step();
  std::vector<StepRecord> run(const std::function<void(const StepRecord&)>& on_step = {});

  std::size_t steps_done() const { return step_; }

 private:
  std::vector<SynthPair> draw_batch();

  ModelParams& params_;
  TrainConfig cfg_;
  std::vector<Tensor> images_;
  Rng rng_;
  AdamState adam_;
  std::size_t step_ = 0;
};

}  // namespace fit
