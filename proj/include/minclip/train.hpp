#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "minclip/augment.hpp"
#include "minclip/model.hpp"

namespace minclip {

struct DegenerateBatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct MissingNegatives : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Diverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int steps_main = 900;
  int steps_finetune = 150;
  int batch_main = 96;
  int batch_finetune = 48;
  int warmup_steps = 90;
  double peak_lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  int k_unfrozen = 1;
  double temperature_init = 2.6592600369327783;  // ln(1/0.07)
};

void validate_train_config(const TrainConfig& config);

// Linear warm-up, constant afterwards.
double lr_at(std::int64_t step, const TrainConfig& config);

// Symmetric InfoNCE over unit-norm embeddings. images: [N,d]; texts: [M,d]
// with rows 0..N-1 the aligned positives and rows N..M-1 extra negatives that
// participate only in the image->text direction.
template <typename S>
TensorT<S> contrastive_loss(const TensorT<S>& images, const TensorT<S>& texts,
                            const TensorT<S>& log_temperature);

// --- Adam ------------------------------------------------------------------

struct AdamSlot {
  std::vector<float> m, v;
};

// One bias-corrected Adam update on a raw parameter array; t is the 1-based
// step count.
void adam_step(std::vector<float>& param, const std::vector<float>& grad, AdamSlot& slot,
               std::int64_t t, double lr, double beta1, double beta2, double eps);

class AdamOptimizer {
 public:
  explicit AdamOptimizer(const TrainConfig& config) : config_(config) {}

  // Applies grads accumulated on the model parameters, skipping frozen ones,
  // then clears all grads.
  void step(TwoTowerModel& model, double lr);

  std::int64_t steps_taken() const { return t_; }

 private:
  TrainConfig config_;
  std::map<std::string, AdamSlot> slots_;
  std::int64_t t_ = 0;
};

// --- training loops ----------------------------------------------------------

// One training example: the rendered canvas (patched per batch) plus the
// caption and optional hard negatives used in phase 2.
struct TrainExample {
  Canvas canvas;
  std::string caption;
  std::vector<std::pair<NegativeKind, std::string>> negatives;
};

struct LossCurvePoint {
  int step;
  double lr;
  double loss;
};

struct TrainResult {
  std::vector<LossCurvePoint> curve;
};

// Main phase: InfoNCE over (image, caption) batches with optional sentence
// sampling. Checkpoints are written to checkpoint_path every
// checkpoint_every steps and at the end; on divergence the last good file is
// kept and Diverged is thrown.
TrainResult train_two_tower(TwoTowerModel& model, const std::vector<TrainExample>& dataset,
                            const Vocabulary& vocab, const TrainConfig& config,
                            bool sentence_sampling, const std::string& checkpoint_path,
                            int checkpoint_every = 500);

// Phase 2: batches of N positives plus one synthesized negative caption per
// positive (M = 2N).
TrainResult finetune_hard_negatives(TwoTowerModel& model, const std::vector<TrainExample>& dataset,
                                    const Vocabulary& vocab, const TrainConfig& config,
                                    const std::string& checkpoint_path);

// Causal next-token pretraining of the text tower (plus LM head).
struct PretrainConfig {
  int steps = 800;
  int batch = 48;
  int warmup_steps = 80;
  double peak_lr = 1e-3;
  std::uint64_t seed = 1;
};

struct PretrainResult {
  std::vector<LossCurvePoint> curve;
  double init_holdout_loss = 0.0;
  double final_holdout_loss = 0.0;
};

PretrainResult pretrain_text_tower(TwoTowerModel& model, const std::vector<std::string>& corpus,
                                   const std::vector<std::string>& holdout, const Vocabulary& vocab,
                                   const PretrainConfig& config);

void write_loss_curve_csv(const std::string& path, const std::vector<LossCurvePoint>& curve);

// Copies txt.* parameters (and lm head) from one model into another.
void copy_text_tower(const TwoTowerModel& from, TwoTowerModel& to);

}  // namespace minclip
