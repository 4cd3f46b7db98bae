#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "minclip/checkpoint.hpp"
#include "minclip/model.hpp"
#include "minclip/train.hpp"

using namespace minclip;

namespace {

ModelConfig tiny_config(int vocab_size) {
  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.hidden = 32;
  cfg.img_layers = 2;
  cfg.txt_layers = 2;
  cfg.patch_grid = 4;
  cfg.patch_dim = 192;
  cfg.max_seq_len = 16;
  cfg.vocab_size = vocab_size;
  return cfg;
}

double norm(const std::vector<float>& v) {
  double n2 = 0;
  for (float x : v) n2 += static_cast<double>(x) * x;
  return std::sqrt(n2);
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double dot = 0;
  for (size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
  return dot;
}

TokenSequence seq_of(std::vector<int> ids, int max_len) {
  TokenSequence s;
  s.ids = std::move(ids);
  s.true_len = static_cast<int>(s.ids.size());
  s.ids.resize(static_cast<size_t>(max_len), Vocabulary::kPad);
  return s;
}

}  // namespace

TEST_CASE("encode_image returns a deterministic unit vector") {
  TwoTowerModel model = init_model(tiny_config(16), 3, 0.0);
  Rng rng(5);
  const PatchGrid grid = render_scene_image(generate_scene(rng), 4);
  const auto a = encode_image(model, grid);
  const auto b = encode_image(model, grid);
  CHECK(a == b);  // bitwise determinism
  CHECK(std::abs(norm(a) - 1.0) < 1e-5);
}

TEST_CASE("images differing in one object color embed differently") {
  TwoTowerModel model = init_model(tiny_config(16), 3, 0.0);
  Scene scene;
  scene.objects.push_back({noun_index("cube"), {{AttrKind::kColor, 0}}});
  scene.background = 0;
  Scene other = scene;
  other.objects[0].attrs[0].second = 1;
  const auto a = encode_image(model, render_scene_image(scene, 4));
  const auto b = encode_image(model, render_scene_image(other, 4));
  CHECK(cosine(a, b) < 1.0 - 1e-6);
}

TEST_CASE("encode_text is unit-norm and PAD-invariant") {
  TwoTowerModel model = init_model(tiny_config(16), 7, 0.0);
  const TokenSequence short_seq = seq_of({2, 5, 6, 3}, 8);
  const TokenSequence padded = seq_of({2, 5, 6, 3}, 16);
  const auto a = encode_text(model, short_seq);
  const auto b = encode_text(model, padded);
  CHECK(std::abs(norm(a) - 1.0) < 1e-5);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-5));
  }
}

TEST_CASE("word order changes the embedding") {
  TwoTowerModel model = init_model(tiny_config(16), 7, 0.0);
  const auto a = encode_text(model, seq_of({2, 5, 6, 7, 3}, 8));
  const auto b = encode_text(model, seq_of({2, 7, 6, 5, 3}, 8));
  CHECK(cosine(a, b) < 1.0 - 1e-6);
}

TEST_CASE("causal layers ignore future tokens; bidirectional layers see them") {
  TwoTowerModel model = init_model(tiny_config(16), 9, 0.0);
  for (auto& kind : model.text_mask_kinds) kind = MaskKind::kCausal;
  NoGradGuard ng;
  int T = 0;
  // Hidden state at position 1 must not change when a later token changes.
  auto h1 = text_hidden_causal_t(model, {seq_of({2, 5, 6, 7, 3}, 8)}, &T);
  auto h2 = text_hidden_causal_t(model, {seq_of({2, 5, 8, 7, 3}, 8)}, &T);
  const int d = model.config.embed_dim;
  for (int j = 0; j < d; ++j) {
    CHECK(h1.data()[static_cast<size_t>(d + j)] ==
          doctest::Approx(h2.data()[static_cast<size_t>(d + j)]).epsilon(1e-5));
  }
  for (auto& kind : model.text_mask_kinds) kind = MaskKind::kBidirectional;
  std::vector<TokenSequence> seqs1 = {seq_of({2, 5, 6, 7, 3}, 8)};
  std::vector<TokenSequence> seqs2 = {seq_of({2, 5, 8, 7, 3}, 8)};
  auto e1 = encode_texts_t(model, seqs1);
  auto e2 = encode_texts_t(model, seqs2);
  double diff = 0;
  for (int j = 0; j < d; ++j) {
    diff += std::abs(e1.data()[static_cast<size_t>(j)] - e2.data()[static_cast<size_t>(j)]);
  }
  CHECK(diff > 1e-6);
}

TEST_CASE("apply_freeze_policy boundary cases") {
  TwoTowerModel model = init_model(tiny_config(16), 11, 0.0);

  apply_freeze_policy(model, 0);
  CHECK(model.is_frozen("txt.emb"));
  CHECK(model.is_frozen("txt.l0.wq"));
  CHECK(model.is_frozen("txt.l1.wq"));
  CHECK_FALSE(model.is_frozen("txt_head"));
  CHECK_FALSE(model.is_frozen("log_temperature"));
  CHECK_FALSE(model.is_frozen("img.l0.wq"));
  CHECK(model.text_mask_kinds == std::vector<MaskKind>{MaskKind::kCausal, MaskKind::kCausal});

  apply_freeze_policy(model, 2);  // == txt_layers: whole tower trainable
  CHECK(model.frozen.empty());
  CHECK(model.text_mask_kinds ==
        std::vector<MaskKind>{MaskKind::kBidirectional, MaskKind::kBidirectional});

  apply_freeze_policy(model, 1);
  CHECK(model.is_frozen("txt.l0.wq"));
  CHECK_FALSE(model.is_frozen("txt.l1.wq"));
  CHECK(model.text_mask_kinds ==
        std::vector<MaskKind>{MaskKind::kCausal, MaskKind::kBidirectional});

  CHECK_THROWS_AS(apply_freeze_policy(model, 3), OutOfRange);
  CHECK_THROWS_AS(apply_freeze_policy(model, -1), OutOfRange);
}

TEST_CASE("unfrozen mask kinds on a 6-layer tower, k=2") {
  ModelConfig cfg = tiny_config(16);
  cfg.txt_layers = 6;
  TwoTowerModel model = init_model(cfg, 13, 0.0);
  apply_freeze_policy(model, 2);
  for (int l = 0; l < 6; ++l) {
    const bool bidir = model.text_mask_kinds[static_cast<size_t>(l)] == MaskKind::kBidirectional;
    CHECK(bidir == (l >= 4));
  }
}

TEST_CASE("frozen parameters are bit-identical after an optimizer step") {
  TwoTowerModel model = init_model(tiny_config(16), 17, 0.0);
  apply_freeze_policy(model, 1);
  const auto frozen_before = model.text.layers[0].wq.data();
  const auto unfrozen_before = model.text.layers[1].wq.data();

  Rng rng(5);
  const Scene scene = generate_scene(rng);
  const Scene scene2 = generate_scene(rng);
  std::vector<PatchGrid> grids = {render_scene_image(scene, 4), render_scene_image(scene2, 4)};
  auto patches = patches_to_tensor({&grids[0], &grids[1]});
  std::vector<TokenSequence> seqs = {seq_of({2, 5, 6, 3}, 8), seq_of({2, 7, 8, 3}, 8)};

  auto img = encode_images_t(model, patches);
  auto txt = encode_texts_t(model, seqs);
  auto loss = contrastive_loss(img, txt, model.log_temperature);
  loss.backward();
  TrainConfig tc;
  AdamOptimizer opt(tc);
  opt.step(model, 1e-2);

  CHECK(model.text.layers[0].wq.data() == frozen_before);  // bitwise
  CHECK(model.text.layers[1].wq.data() != unfrozen_before);
}

TEST_CASE("checkpoint save/load round trip is bit-exact") {
  const std::string path = "/tmp/minclip_test_ckpt.bin";
  TwoTowerModel model = init_model(tiny_config(23), 19, 0.123);
  apply_freeze_policy(model, 1);
  save_checkpoint(path, model);

  TwoTowerModel loaded = load_checkpoint_model(path);
  bool all_equal = true;
  model.for_each_param([&](const std::string& name, Tensor& t) {
    Tensor* other = nullptr;
    loaded.for_each_param([&](const std::string& name2, Tensor& t2) {
      if (name == name2) other = &t2;
    });
    if (!other || other->data() != t.data()) all_equal = false;
  });
  CHECK(all_equal);
  CHECK(loaded.frozen == model.frozen);
  CHECK(loaded.text_mask_kinds == model.text_mask_kinds);

  // Saving the loaded model reproduces the file byte for byte.
  const std::string path2 = "/tmp/minclip_test_ckpt2.bin";
  save_checkpoint(path2, loaded);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}

TEST_CASE("pretraining starts near ln(vocab) and reduces held-out loss") {
  Rng rng(23);
  std::vector<std::string> corpus, holdout;
  for (int i = 0; i < 1200; ++i) {
    corpus.push_back(scene_to_caption(generate_scene(rng), CaptionStyle::kDefault));
  }
  for (int i = 0; i < 100; ++i) {
    holdout.push_back(scene_to_caption(generate_scene(rng), CaptionStyle::kDefault));
  }
  const Vocabulary vocab = build_vocabulary(corpus, 256);

  ModelConfig cfg = tiny_config(vocab.size());
  cfg.max_seq_len = 64;
  TwoTowerModel model = init_model(cfg, 29, 0.0);
  PretrainConfig pc;
  pc.steps = 60;
  pc.batch = 16;
  pc.warmup_steps = 10;
  const PretrainResult result = pretrain_text_tower(model, corpus, holdout, vocab, pc);

  // Uniform predictive distribution at init.
  CHECK(result.init_holdout_loss ==
        doctest::Approx(std::log(static_cast<double>(vocab.size()))).epsilon(0.05));
  CHECK(result.final_holdout_loss < result.init_holdout_loss);

  // A corpus below the contract's minimum size is rejected.
  std::vector<std::string> small(corpus.begin(), corpus.begin() + 100);
  CHECK_THROWS_AS(pretrain_text_tower(model, small, holdout, vocab, pc), ConfigError);
}
