#pragma once

#include <set>
#include <string>
#include <vector>

#include "minclip/ops.hpp"
#include "minclip/rng.hpp"
#include "minclip/scene.hpp"
#include "minclip/vocab.hpp"

namespace minclip {

struct OutOfRange : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  int embed_dim = 48;
  int heads = 4;
  int hidden = 96;
  int img_layers = 2;
  int txt_layers = 2;
  int patch_grid = 4;    // P: image is a PxP grid of patches
  int patch_dim = 192;   // values per patch
  int max_seq_len = 64;
  int vocab_size = 512;  // actual size after vocabulary build
  double layernorm_eps = 1e-5;
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

enum class MaskKind { kCausal, kBidirectional };

template <typename S>
struct LayerParamsT {
  TensorT<S> ln1_g, ln1_b;
  TensorT<S> wq, bq, wk, bk, wv, bv, wo, bo;
  TensorT<S> ln2_g, ln2_b;
  TensorT<S> w1, b1, w2, b2;
};

template <typename S>
struct TowerParamsT {
  TensorT<S> input_w, input_b;  // image tower: patch projection
  TensorT<S> token_table;       // text tower: token embeddings
  TensorT<S> pos;
  std::vector<LayerParamsT<S>> layers;
  TensorT<S> lnf_g, lnf_b;
};

template <typename S>
struct TwoTowerModelT {
  ModelConfig config;
  TowerParamsT<S> image;
  TowerParamsT<S> text;
  TensorT<S> img_head, txt_head;  // [d, d]
  TensorT<S> log_temperature;     // [1]
  TensorT<S> lm_head_w, lm_head_b;  // next-token head, used by pretraining/scoring
  std::vector<MaskKind> text_mask_kinds;
  std::set<std::string> frozen;

  // Visits every parameter with a stable name; the visit order defines the
  // checkpoint manifest order.
  template <typename F>
  void for_each_param(F&& f) {
    auto tower = [&](const std::string& prefix, TowerParamsT<S>& t, bool image_tower) {
      if (image_tower) {
        f(prefix + ".proj.w", t.input_w);
        f(prefix + ".proj.b", t.input_b);
      } else {
        f(prefix + ".emb", t.token_table);
      }
      f(prefix + ".pos", t.pos);
      for (size_t l = 0; l < t.layers.size(); ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l) + ".";
        auto& L = t.layers[l];
        f(lp + "ln1.g", L.ln1_g);
        f(lp + "ln1.b", L.ln1_b);
        f(lp + "wq", L.wq);
        f(lp + "bq", L.bq);
        f(lp + "wk", L.wk);
        f(lp + "bk", L.bk);
        f(lp + "wv", L.wv);
        f(lp + "bv", L.bv);
        f(lp + "wo", L.wo);
        f(lp + "bo", L.bo);
        f(lp + "ln2.g", L.ln2_g);
        f(lp + "ln2.b", L.ln2_b);
        f(lp + "w1", L.w1);
        f(lp + "b1", L.b1);
        f(lp + "w2", L.w2);
        f(lp + "b2", L.b2);
      }
      f(prefix + ".lnf.g", t.lnf_g);
      f(prefix + ".lnf.b", t.lnf_b);
    };
    tower("img", image, true);
    tower("txt", text, false);
    f("img_head", img_head);
    f("txt_head", txt_head);
    f("log_temperature", log_temperature);
    f("lm_head.w", lm_head_w);
    f("lm_head.b", lm_head_b);
  }

  bool is_frozen(const std::string& name) const { return frozen.count(name) > 0; }

  // requires_grad mirrors the freeze mask.
  void refresh_requires_grad() {
    for_each_param([this](const std::string& name, TensorT<S>& t) {
      t.set_requires_grad(!is_frozen(name));
    });
  }
};

using TwoTowerModel = TwoTowerModelT<float>;

// Fresh model with name-keyed deterministic init. All text layers start
// bidirectional (scratch configuration); pretraining flips them causal.
TwoTowerModel init_model(const ModelConfig& config, std::uint64_t seed, double log_temperature_init);

// Double-precision copy for the 64-bit reference path.
TwoTowerModelT<double> to_double(const TwoTowerModel& model);

// Freeze policy: everything in the text tower except the top k layers, the
// projection head, and the temperature; unfrozen layers switch to
// bidirectional context. k == txt_layers unfreezes the whole tower.
void apply_freeze_policy(TwoTowerModel& model, int k_unfrozen);

// --- forward passes (graph-building) ---------------------------------------

// patches: [B, P*P, patch_dim]  ->  unit-norm embeddings [B, d]
template <typename S>
TensorT<S> encode_images_t(TwoTowerModelT<S>& model, const TensorT<S>& patches);

// token sequences -> unit-norm embeddings [B, d]
template <typename S>
TensorT<S> encode_texts_t(TwoTowerModelT<S>& model, const std::vector<TokenSequence>& seqs);

// Hidden states of the text tower under an all-causal mask: [B, T, d] with
// T = max true_len. Used by LM pretraining and scoring.
template <typename S>
TensorT<S> text_hidden_causal_t(TwoTowerModelT<S>& model, const std::vector<TokenSequence>& seqs,
                                int* out_T);

// Mean next-token cross-entropy over real positions.
template <typename S>
TensorT<S> causal_lm_loss_t(TwoTowerModelT<S>& model, const std::vector<TokenSequence>& seqs);

// --- evaluation conveniences (no graph) -------------------------------------

std::vector<float> encode_image(TwoTowerModel& model, const PatchGrid& grid);
std::vector<float> encode_text(TwoTowerModel& model, const TokenSequence& seq);

// Batched, graph-free embedding of many inputs; rows are unit-norm.
std::vector<std::vector<float>> encode_images_batched(TwoTowerModel& model,
                                                      const std::vector<const PatchGrid*>& grids,
                                                      int batch = 256);
std::vector<std::vector<float>> encode_texts_batched(TwoTowerModel& model,
                                                     const std::vector<TokenSequence>& seqs,
                                                     int batch = 256);

Tensor patches_to_tensor(const std::vector<const PatchGrid*>& grids);

}  // namespace minclip
