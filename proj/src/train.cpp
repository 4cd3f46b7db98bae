#include "minclip/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "minclip/checkpoint.hpp"

namespace minclip {

void validate_train_config(const TrainConfig& c) {
  if (c.steps_main <= 0 || c.steps_finetune < 0 || c.batch_main <= 1 || c.batch_finetune <= 1 ||
      c.warmup_steps < 0 || c.peak_lr <= 0 || c.adam_eps <= 0) {
    throw ConfigError("train config: all sizes must be positive");
  }
  if (c.warmup_steps > c.steps_main) {
    throw ConfigError("train config: warmup_steps must not exceed steps_main");
  }
}

double lr_at(std::int64_t step, const TrainConfig& config) {
  if (step < 0) throw ConfigError("lr_at: negative step");
  if (config.warmup_steps > 0 && step < config.warmup_steps) {
    return config.peak_lr * static_cast<double>(step) / config.warmup_steps;
  }
  return config.peak_lr;
}

template <typename S>
TensorT<S> contrastive_loss(const TensorT<S>& images, const TensorT<S>& texts,
                            const TensorT<S>& log_temperature) {
  if (images.shape().size() != 2 || texts.shape().size() != 2 ||
      images.shape()[1] != texts.shape()[1]) {
    throw ShapeMismatch("contrastive_loss: embeddings must be [N,d]/[M,d]");
  }
  const int N = images.shape()[0];
  const int M = texts.shape()[0];
  const int d = images.shape()[1];
  if (N < 2) throw DegenerateBatch("contrastive_loss: need at least 2 aligned pairs");
  if (M < N) throw ShapeMismatch("contrastive_loss: texts must cover all images");
  auto check_unit = [d](const TensorT<S>& t, const char* which) {
    for (int r = 0; r < t.shape()[0]; ++r) {
      S n2 = S(0);
      const S* row = t.data().data() + static_cast<size_t>(r) * d;
      for (int j = 0; j < d; ++j) n2 += row[j] * row[j];
      if (std::abs(static_cast<double>(n2) - 1.0) > 1e-3) {
        throw std::invalid_argument(std::string("contrastive_loss: ") + which +
                                    " rows must be unit-norm");
      }
    }
  };
  check_unit(images, "image");
  check_unit(texts, "text");

  auto temp = exp(log_temperature);
  std::vector<int> targets(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) targets[static_cast<size_t>(i)] = i;

  // image -> text over all M columns.
  auto logits_it = mul(matmul(images, texts, /*transpose_b=*/true), temp);
  auto loss_it = cross_entropy_rows(logits_it, targets);
  // text -> image over the N positives only.
  auto positives = slice_rows(texts, 0, N);
  auto logits_ti = mul(matmul(positives, images, /*transpose_b=*/true), temp);
  auto loss_ti = cross_entropy_rows(logits_ti, targets);
  return scale(add(loss_it, loss_ti), 0.5);
}

template TensorT<float> contrastive_loss<float>(const TensorT<float>&, const TensorT<float>&,
                                                const TensorT<float>&);
template TensorT<double> contrastive_loss<double>(const TensorT<double>&, const TensorT<double>&,
                                                  const TensorT<double>&);

void adam_step(std::vector<float>& param, const std::vector<float>& grad, AdamSlot& slot,
               std::int64_t t, double lr, double beta1, double beta2, double eps) {
  if (param.size() != grad.size()) throw ShapeMismatch("adam_step: param/grad size mismatch");
  if (slot.m.empty()) {
    slot.m.assign(param.size(), 0.0f);
    slot.v.assign(param.size(), 0.0f);
  }
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = beta1 * slot.m[i] + (1.0 - beta1) * g;
    const double v = beta2 * slot.v[i] + (1.0 - beta2) * g * g;
    slot.m[i] = static_cast<float>(m);
    slot.v[i] = static_cast<float>(v);
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    param[i] = static_cast<float>(param[i] - lr * mhat / (std::sqrt(vhat) + eps));
  }
}

void AdamOptimizer::step(TwoTowerModel& model, double lr) {
  ++t_;
  model.for_each_param([&](const std::string& name, Tensor& t) {
    if (t.data().empty()) return;
    if (model.is_frozen(name)) {
      t.zero_grad();
      return;
    }
    if (!t.has_grad()) return;  // parameter unused this step
    adam_step(t.data(), t.grad(), slots_[name], t_, lr, config_.adam_beta1, config_.adam_beta2,
              config_.adam_eps);
    t.zero_grad();
  });
}

namespace {

Tensor batch_patches(const std::vector<TrainExample>& dataset, const std::vector<int>& indices,
                     int patch_grid) {
  std::vector<PatchGrid> grids;
  grids.reserve(indices.size());
  std::vector<const PatchGrid*> ptrs;
  ptrs.reserve(indices.size());
  for (int i : indices) {
    grids.push_back(canvas_to_patches(dataset[static_cast<size_t>(i)].canvas, patch_grid));
    ptrs.push_back(&grids.back());
  }
  return patches_to_tensor(ptrs);
}

}  // namespace

TrainResult train_two_tower(TwoTowerModel& model, const std::vector<TrainExample>& dataset,
                            const Vocabulary& vocab, const TrainConfig& config,
                            bool sentence_sampling, const std::string& checkpoint_path,
                            int checkpoint_every) {
  validate_train_config(config);
  if (dataset.empty()) throw ConfigError("train: empty dataset");
  Rng rng_train = Rng(config.seed).substream("train");
  Rng rng_augment = Rng(config.seed).substream("augment");
  AdamOptimizer opt(config);
  TrainResult result;
  const int n = static_cast<int>(dataset.size());

  for (int step = 0; step < config.steps_main; ++step) {
    std::vector<int> indices(static_cast<size_t>(config.batch_main));
    for (auto& i : indices) i = rng_train.uniform_int(0, n - 1);

    std::vector<TokenSequence> seqs;
    seqs.reserve(indices.size());
    for (int i : indices) {
      const std::string& caption = dataset[static_cast<size_t>(i)].caption;
      const std::string target =
          sentence_sampling ? sample_sentences(caption, rng_augment) : caption;
      seqs.push_back(tokenize(target, vocab, model.config.max_seq_len));
    }

    auto img = encode_images_t(model, batch_patches(dataset, indices, model.config.patch_grid));
    auto txt = encode_texts_t(model, seqs);
    auto loss = contrastive_loss(img, txt, model.log_temperature);
    const double loss_value = loss.item();
    if (!std::isfinite(loss_value)) {
      throw Diverged("train: non-finite loss at step " + std::to_string(step));
    }
    loss.backward();
    const double lr = lr_at(step, config);
    opt.step(model, lr);
    result.curve.push_back({step, lr, loss_value});
    if (!checkpoint_path.empty() && checkpoint_every > 0 && (step + 1) % checkpoint_every == 0) {
      save_checkpoint(checkpoint_path, model);
    }
  }
  if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, model);
  return result;
}

TrainResult finetune_hard_negatives(TwoTowerModel& model, const std::vector<TrainExample>& dataset,
                                    const Vocabulary& vocab, const TrainConfig& config,
                                    const std::string& checkpoint_path) {
  validate_train_config(config);
  std::vector<int> eligible;
  for (size_t i = 0; i < dataset.size(); ++i) {
    if (!dataset[i].negatives.empty()) eligible.push_back(static_cast<int>(i));
  }
  if (eligible.empty()) {
    throw MissingNegatives("finetune: no record supplies a negative caption");
  }
  Rng rng_train = Rng(config.seed).substream("finetune");
  Rng rng_augment = Rng(config.seed).substream("finetune_augment");
  AdamOptimizer opt(config);
  TrainResult result;
  bool warned_duplicate = false;

  for (int step = 0; step < config.steps_finetune; ++step) {
    const int N = config.batch_finetune;
    std::vector<int> indices(static_cast<size_t>(N));
    for (auto& i : indices) {
      i = eligible[static_cast<size_t>(rng_train.uniform_int(0, static_cast<int>(eligible.size()) - 1))];
    }
    std::vector<TokenSequence> seqs;
    seqs.reserve(static_cast<size_t>(2 * N));
    std::vector<std::string> negs;
    negs.reserve(static_cast<size_t>(N));
    for (int i : indices) {
      const auto& ex = dataset[static_cast<size_t>(i)];
      seqs.push_back(tokenize(ex.caption, vocab, model.config.max_seq_len));
      const auto& chosen = ex.negatives[static_cast<size_t>(
          rng_augment.uniform_int(0, static_cast<int>(ex.negatives.size()) - 1))];
      negs.push_back(chosen.second);
      if (!warned_duplicate && chosen.second == ex.caption) {
        std::cerr << "warning: hard negative identical to its positive; image->text loss is "
                     "bounded below by ln 2 for such rows\n";
        warned_duplicate = true;
      }
    }
    for (const auto& neg : negs) seqs.push_back(tokenize(neg, vocab, model.config.max_seq_len));

    auto img = encode_images_t(model, batch_patches(dataset, indices, model.config.patch_grid));
    auto txt = encode_texts_t(model, seqs);
    auto loss = contrastive_loss(img, txt, model.log_temperature);
    const double loss_value = loss.item();
    if (!std::isfinite(loss_value)) {
      throw Diverged("finetune: non-finite loss at step " + std::to_string(step));
    }
    loss.backward();
    // Short fixed ramp; the phase is brief and starts from a trained model.
    const double lr = config.peak_lr * std::min(1.0, (step + 1) / 10.0);
    opt.step(model, lr);
    result.curve.push_back({step, lr, loss_value});
  }
  if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, model);
  return result;
}

PretrainResult pretrain_text_tower(TwoTowerModel& model, const std::vector<std::string>& corpus,
                                   const std::vector<std::string>& holdout, const Vocabulary& vocab,
                                   const PretrainConfig& config) {
  if (corpus.size() < 1000) {
    throw ConfigError("pretrain_text_tower: corpus must have at least 1000 captions");
  }
  // The pretrained base is a left-to-right model throughout.
  for (auto& kind : model.text_mask_kinds) kind = MaskKind::kCausal;

  auto holdout_loss = [&]() {
    NoGradGuard ng;
    double total = 0.0;
    int batches = 0;
    const int eval_batch = 64;
    for (size_t start = 0; start < holdout.size(); start += static_cast<size_t>(eval_batch)) {
      const size_t end = std::min(holdout.size(), start + static_cast<size_t>(eval_batch));
      std::vector<TokenSequence> seqs;
      for (size_t i = start; i < end; ++i) {
        seqs.push_back(tokenize(holdout[i], vocab, model.config.max_seq_len));
      }
      total += causal_lm_loss_t(model, seqs).item();
      ++batches;
    }
    return batches == 0 ? 0.0 : total / batches;
  };

  PretrainResult result;
  result.init_holdout_loss = holdout_loss();

  TrainConfig adam_cfg;
  adam_cfg.adam_beta1 = 0.9;
  adam_cfg.adam_beta2 = 0.999;
  adam_cfg.adam_eps = 1e-8;
  AdamOptimizer opt(adam_cfg);
  Rng rng = Rng(config.seed).substream("pretrain");
  const int n = static_cast<int>(corpus.size());

  for (int step = 0; step < config.steps; ++step) {
    std::vector<TokenSequence> seqs;
    seqs.reserve(static_cast<size_t>(config.batch));
    for (int b = 0; b < config.batch; ++b) {
      seqs.push_back(
          tokenize(corpus[static_cast<size_t>(rng.uniform_int(0, n - 1))], vocab,
                   model.config.max_seq_len));
    }
    auto loss = causal_lm_loss_t(model, seqs);
    const double loss_value = loss.item();
    if (!std::isfinite(loss_value)) {
      throw Diverged("pretrain: non-finite loss at step " + std::to_string(step));
    }
    loss.backward();
    double lr = config.peak_lr;
    if (config.warmup_steps > 0 && step < config.warmup_steps) {
      lr = config.peak_lr * static_cast<double>(step) / config.warmup_steps;
    }
    opt.step(model, lr);
    result.curve.push_back({step, lr, loss_value});
  }
  result.final_holdout_loss = holdout_loss();
  return result;
}

void write_loss_curve_csv(const std::string& path, const std::vector<LossCurvePoint>& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_loss_curve_csv: cannot open " + path);
  out << "step,lr,loss\n";
  char buf[96];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof(buf), "%d,%.8g,%.8g\n", p.step, p.lr, p.loss);
    out << buf;
  }
}

void copy_text_tower(const TwoTowerModel& from, TwoTowerModel& to) {
  std::map<std::string, const Tensor*> src;
  const_cast<TwoTowerModel&>(from).for_each_param(
      [&](const std::string& name, Tensor& t) { src[name] = &t; });
  to.for_each_param([&](const std::string& name, Tensor& t) {
    if (name.rfind("txt.", 0) != 0 && name.rfind("lm_head.", 0) != 0) return;
    auto it = src.find(name);
    if (it == src.end() || it->second->shape() != t.shape()) {
      throw ConfigError("copy_text_tower: incompatible source for " + name);
    }
    t.data() = it->second->data();
  });
}

}  // namespace minclip
