#include "minclip/model.hpp"

#include <algorithm>

namespace minclip {

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.embed_dim == b.embed_dim && a.heads == b.heads && a.hidden == b.hidden &&
         a.img_layers == b.img_layers && a.txt_layers == b.txt_layers &&
         a.patch_grid == b.patch_grid && a.patch_dim == b.patch_dim &&
         a.max_seq_len == b.max_seq_len && a.vocab_size == b.vocab_size &&
         a.layernorm_eps == b.layernorm_eps;
}

namespace {

Tensor init_param(const std::string& name, Shape shape, std::uint64_t seed) {
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  const size_t dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  if (leaf == "g") {
    std::fill(t.data().begin(), t.data().end(), 1.0f);
    return t;
  }
  const bool is_bias = leaf == "b" || (leaf.size() == 2 && leaf[0] == 'b');
  if (is_bias) return t;  // zeros
  const double std_dev = leaf == "pos" ? 0.01 : 0.02;
  Rng rng(splitmix64(seed ^ fnv1a(name)));
  for (auto& v : t.data()) v = static_cast<float>(rng.gaussian() * std_dev);
  return t;
}

LayerParamsT<float> init_layer(const std::string& prefix, int d, int hidden, std::uint64_t seed) {
  LayerParamsT<float> L;
  L.ln1_g = init_param(prefix + "ln1.g", {d}, seed);
  L.ln1_b = init_param(prefix + "ln1.b", {d}, seed);
  L.wq = init_param(prefix + "wq", {d, d}, seed);
  L.bq = init_param(prefix + "bq", {d}, seed);
  L.wk = init_param(prefix + "wk", {d, d}, seed);
  L.bk = init_param(prefix + "bk", {d}, seed);
  L.wv = init_param(prefix + "wv", {d, d}, seed);
  L.bv = init_param(prefix + "bv", {d}, seed);
  L.wo = init_param(prefix + "wo", {d, d}, seed);
  L.bo = init_param(prefix + "bo", {d}, seed);
  L.ln2_g = init_param(prefix + "ln2.g", {d}, seed);
  L.ln2_b = init_param(prefix + "ln2.b", {d}, seed);
  L.w1 = init_param(prefix + "w1", {d, hidden}, seed);
  L.b1 = init_param(prefix + "b1", {hidden}, seed);
  L.w2 = init_param(prefix + "w2", {hidden, d}, seed);
  L.b2 = init_param(prefix + "b2", {d}, seed);
  return L;
}

}  // namespace

TwoTowerModel init_model(const ModelConfig& config, std::uint64_t seed,
                         double log_temperature_init) {
  TwoTowerModel m;
  m.config = config;
  const int d = config.embed_dim;
  const int T_img = config.patch_grid * config.patch_grid;

  m.image.input_w = init_param("img.proj.w", {config.patch_dim, d}, seed);
  m.image.input_b = init_param("img.proj.b", {d}, seed);
  m.image.pos = init_param("img.pos", {T_img, d}, seed);
  for (int l = 0; l < config.img_layers; ++l) {
    m.image.layers.push_back(init_layer("img.l" + std::to_string(l) + ".", d, config.hidden, seed));
  }
  m.image.lnf_g = init_param("img.lnf.g", {d}, seed);
  m.image.lnf_b = init_param("img.lnf.b", {d}, seed);

  m.text.token_table = init_param("txt.emb", {config.vocab_size, d}, seed);
  m.text.pos = init_param("txt.pos", {config.max_seq_len, d}, seed);
  for (int l = 0; l < config.txt_layers; ++l) {
    m.text.layers.push_back(init_layer("txt.l" + std::to_string(l) + ".", d, config.hidden, seed));
  }
  m.text.lnf_g = init_param("txt.lnf.g", {d}, seed);
  m.text.lnf_b = init_param("txt.lnf.b", {d}, seed);

  m.img_head = init_param("img_head", {d, d}, seed);
  m.txt_head = init_param("txt_head", {d, d}, seed);
  m.log_temperature = Tensor::scalar(static_cast<float>(log_temperature_init), true);
  m.lm_head_w = init_param("lm_head.w", {d, config.vocab_size}, seed);
  m.lm_head_b = init_param("lm_head.b", {config.vocab_size}, seed);

  m.text_mask_kinds.assign(static_cast<size_t>(config.txt_layers), MaskKind::kBidirectional);
  return m;
}

TwoTowerModelT<double> to_double(const TwoTowerModel& model) {
  TwoTowerModelT<double> out;
  out.config = model.config;
  out.text_mask_kinds = model.text_mask_kinds;
  out.frozen = model.frozen;
  auto convert = [](const Tensor& src) {
    if (src.data().empty()) return DTensor();
    std::vector<double> d(src.data().begin(), src.data().end());
    return DTensor::from_data(src.shape(), std::move(d), src.requires_grad());
  };
  auto convert_layer = [&](const LayerParamsT<float>& L) {
    LayerParamsT<double> D;
    D.ln1_g = convert(L.ln1_g);
    D.ln1_b = convert(L.ln1_b);
    D.wq = convert(L.wq);
    D.bq = convert(L.bq);
    D.wk = convert(L.wk);
    D.bk = convert(L.bk);
    D.wv = convert(L.wv);
    D.bv = convert(L.bv);
    D.wo = convert(L.wo);
    D.bo = convert(L.bo);
    D.ln2_g = convert(L.ln2_g);
    D.ln2_b = convert(L.ln2_b);
    D.w1 = convert(L.w1);
    D.b1 = convert(L.b1);
    D.w2 = convert(L.w2);
    D.b2 = convert(L.b2);
    return D;
  };
  auto convert_tower = [&](const TowerParamsT<float>& s, TowerParamsT<double>& t) {
    t.input_w = convert(s.input_w);
    t.input_b = convert(s.input_b);
    t.token_table = convert(s.token_table);
    t.pos = convert(s.pos);
    for (const auto& L : s.layers) t.layers.push_back(convert_layer(L));
    t.lnf_g = convert(s.lnf_g);
    t.lnf_b = convert(s.lnf_b);
  };
  convert_tower(model.image, out.image);
  convert_tower(model.text, out.text);
  out.img_head = convert(model.img_head);
  out.txt_head = convert(model.txt_head);
  out.log_temperature = convert(model.log_temperature);
  out.lm_head_w = convert(model.lm_head_w);
  out.lm_head_b = convert(model.lm_head_b);
  return out;
}

void apply_freeze_policy(TwoTowerModel& model, int k_unfrozen) {
  const int L = model.config.txt_layers;
  if (k_unfrozen < 0 || k_unfrozen > L) {
    throw OutOfRange("apply_freeze_policy: k_unfrozen out of [0, txt_layers]");
  }
  model.frozen.clear();
  if (k_unfrozen < L) {
    model.frozen.insert("txt.emb");
    model.frozen.insert("txt.pos");
    model.frozen.insert("txt.lnf.g");
    model.frozen.insert("txt.lnf.b");
    for (int l = 0; l < L - k_unfrozen; ++l) {
      const std::string lp = "txt.l" + std::to_string(l) + ".";
      for (const char* p : {"ln1.g", "ln1.b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                            "ln2.g", "ln2.b", "w1", "b1", "w2", "b2"}) {
        model.frozen.insert(lp + p);
      }
    }
  }
  for (int l = 0; l < L; ++l) {
    model.text_mask_kinds[static_cast<size_t>(l)] =
        l >= L - k_unfrozen ? MaskKind::kBidirectional : MaskKind::kCausal;
  }
  model.refresh_requires_grad();
}

namespace {

template <typename S>
TensorT<S> transformer_block(const LayerParamsT<S>& L, const TensorT<S>& x, const TensorT<S>& mask,
                             int heads, double eps) {
  const int B = x.shape()[0], T = x.shape()[1], D = x.shape()[2];
  auto norm1 = add(mul(layernorm(x, eps), L.ln1_g), L.ln1_b);
  auto h2 = reshape(norm1, {B * T, D});
  auto q = reshape(add(matmul(h2, L.wq), L.bq), {B, T, D});
  auto k = reshape(add(matmul(h2, L.wk), L.bk), {B, T, D});
  auto v = reshape(add(matmul(h2, L.wv), L.bv), {B, T, D});
  auto att = masked_attention(q, k, v, mask, heads);
  auto o = add(matmul(reshape(att, {B * T, D}), L.wo), L.bo);
  auto x1 = add(x, reshape(o, {B, T, D}));
  auto norm2 = add(mul(layernorm(x1, eps), L.ln2_g), L.ln2_b);
  auto m = add(matmul(reshape(norm2, {B * T, D}), L.w1), L.b1);
  m = gelu(m);
  m = add(matmul(m, L.w2), L.b2);
  return add(x1, reshape(m, {B, T, D}));
}

template <typename S>
TensorT<S> all_ones(Shape shape) {
  return TensorT<S>::full(std::move(shape), S(1));
}

// Attention mask combining directionality and key-side padding.
template <typename S>
TensorT<S> build_mask(const std::vector<TokenSequence>& seqs, int T, MaskKind kind) {
  const int B = static_cast<int>(seqs.size());
  TensorT<S> mask = TensorT<S>::zeros({B, T, T});
  for (int b = 0; b < B; ++b) {
    const int len = std::min(T, seqs[static_cast<size_t>(b)].true_len);
    for (int i = 0; i < T; ++i) {
      const int jmax = kind == MaskKind::kCausal ? std::min(i + 1, len) : len;
      S* row = mask.data().data() + (static_cast<size_t>(b) * T + i) * T;
      for (int j = 0; j < jmax; ++j) row[j] = S(1);
    }
  }
  return mask;
}

template <typename S>
TensorT<S> pad_mask(const std::vector<TokenSequence>& seqs, int T) {
  const int B = static_cast<int>(seqs.size());
  TensorT<S> mask = TensorT<S>::zeros({B, T});
  for (int b = 0; b < B; ++b) {
    const int len = std::min(T, seqs[static_cast<size_t>(b)].true_len);
    for (int j = 0; j < len; ++j) mask.data()[static_cast<size_t>(b) * T + j] = S(1);
  }
  return mask;
}

template <typename S>
int batch_seq_len(const std::vector<TokenSequence>& seqs) {
  int T = 2;
  for (const auto& s : seqs) T = std::max(T, s.true_len);
  return T;
}

template <typename S>
TensorT<S> text_embedding(TwoTowerModelT<S>& model, const std::vector<TokenSequence>& seqs, int T) {
  const int B = static_cast<int>(seqs.size());
  std::vector<int> ids;
  ids.reserve(static_cast<size_t>(B) * T);
  for (const auto& s : seqs) {
    for (int j = 0; j < T; ++j) ids.push_back(s.ids[static_cast<size_t>(j)]);
  }
  auto x = embedding_lookup(model.text.token_table, ids, {B, T});
  auto pos = slice_rows(model.text.pos, 0, T);
  return add(x, pos);
}

}  // namespace

template <typename S>
TensorT<S> encode_images_t(TwoTowerModelT<S>& model, const TensorT<S>& patches) {
  const auto& cfg = model.config;
  const int T = cfg.patch_grid * cfg.patch_grid;
  if (patches.shape().size() != 3 || patches.shape()[1] != T ||
      patches.shape()[2] != cfg.patch_dim) {
    throw ShapeMismatch("encode_images: want [B," + std::to_string(T) + "," +
                        std::to_string(cfg.patch_dim) + "], got " + shape_str(patches.shape()));
  }
  const int B = patches.shape()[0];
  const int D = cfg.embed_dim;
  auto x = reshape(patches, {B * T, cfg.patch_dim});
  x = add(matmul(x, model.image.input_w), model.image.input_b);
  x = reshape(x, {B, T, D});
  x = add(x, model.image.pos);
  auto mask = all_ones<S>({B, T, T});
  for (const auto& L : model.image.layers) {
    x = transformer_block(L, x, mask, cfg.heads, cfg.layernorm_eps);
  }
  x = add(mul(layernorm(x, cfg.layernorm_eps), model.image.lnf_g), model.image.lnf_b);
  auto pooled = masked_mean(x, all_ones<S>({B, T}));
  return l2_normalize(matmul(pooled, model.img_head));
}

template <typename S>
TensorT<S> encode_texts_t(TwoTowerModelT<S>& model, const std::vector<TokenSequence>& seqs) {
  const auto& cfg = model.config;
  const int B = static_cast<int>(seqs.size());
  const int T = batch_seq_len<S>(seqs);
  auto x = text_embedding(model, seqs, T);
  TensorT<S> causal, bidir;
  bool have_causal = false, have_bidir = false;
  for (int l = 0; l < cfg.txt_layers; ++l) {
    const MaskKind kind = model.text_mask_kinds[static_cast<size_t>(l)];
    if (kind == MaskKind::kCausal && !have_causal) {
      causal = build_mask<S>(seqs, T, MaskKind::kCausal);
      have_causal = true;
    }
    if (kind == MaskKind::kBidirectional && !have_bidir) {
      bidir = build_mask<S>(seqs, T, MaskKind::kBidirectional);
      have_bidir = true;
    }
    x = transformer_block(model.text.layers[static_cast<size_t>(l)], x,
                          kind == MaskKind::kCausal ? causal : bidir, cfg.heads,
                          cfg.layernorm_eps);
  }
  x = add(mul(layernorm(x, cfg.layernorm_eps), model.text.lnf_g), model.text.lnf_b);
  auto pooled = masked_mean(x, pad_mask<S>(seqs, T));
  (void)B;
  return l2_normalize(matmul(pooled, model.txt_head));
}

template <typename S>
TensorT<S> text_hidden_causal_t(TwoTowerModelT<S>& model, const std::vector<TokenSequence>& seqs,
                                int* out_T) {
  const auto& cfg = model.config;
  const int T = batch_seq_len<S>(seqs);
  if (out_T) *out_T = T;
  auto x = text_embedding(model, seqs, T);
  auto mask = build_mask<S>(seqs, T, MaskKind::kCausal);
  for (const auto& L : model.text.layers) {
    x = transformer_block(L, x, mask, cfg.heads, cfg.layernorm_eps);
  }
  return add(mul(layernorm(x, cfg.layernorm_eps), model.text.lnf_g), model.text.lnf_b);
}

template <typename S>
TensorT<S> causal_lm_loss_t(TwoTowerModelT<S>& model, const std::vector<TokenSequence>& seqs) {
  const int B = static_cast<int>(seqs.size());
  int T = 0;
  auto hidden = text_hidden_causal_t(model, seqs, &T);
  const int D = model.config.embed_dim;
  auto logits = add(matmul(reshape(hidden, {B * T, D}), model.lm_head_w), model.lm_head_b);
  std::vector<int> targets(static_cast<size_t>(B) * T, 0);
  std::vector<S> weights(static_cast<size_t>(B) * T, S(0));
  for (int b = 0; b < B; ++b) {
    const auto& s = seqs[static_cast<size_t>(b)];
    for (int j = 0; j + 1 < std::min(T, s.true_len); ++j) {
      targets[static_cast<size_t>(b) * T + j] = s.ids[static_cast<size_t>(j) + 1];
      weights[static_cast<size_t>(b) * T + j] = S(1);
    }
  }
  return cross_entropy_rows(logits, targets, weights);
}

// Explicit instantiations.
template TensorT<float> encode_images_t<float>(TwoTowerModelT<float>&, const TensorT<float>&);
template TensorT<double> encode_images_t<double>(TwoTowerModelT<double>&, const TensorT<double>&);
template TensorT<float> encode_texts_t<float>(TwoTowerModelT<float>&,
                                              const std::vector<TokenSequence>&);
template TensorT<double> encode_texts_t<double>(TwoTowerModelT<double>&,
                                                const std::vector<TokenSequence>&);
template TensorT<float> text_hidden_causal_t<float>(TwoTowerModelT<float>&,
                                                    const std::vector<TokenSequence>&, int*);
template TensorT<double> text_hidden_causal_t<double>(TwoTowerModelT<double>&,
                                                      const std::vector<TokenSequence>&, int*);
template TensorT<float> causal_lm_loss_t<float>(TwoTowerModelT<float>&,
                                                const std::vector<TokenSequence>&);
template TensorT<double> causal_lm_loss_t<double>(TwoTowerModelT<double>&,
                                                  const std::vector<TokenSequence>&);

Tensor patches_to_tensor(const std::vector<const PatchGrid*>& grids) {
  if (grids.empty()) throw ShapeMismatch("patches_to_tensor: empty batch");
  const int T = grids[0]->grid * grids[0]->grid;
  const int D = grids[0]->patch_dim;
  Tensor out = Tensor::zeros({static_cast<int>(grids.size()), T, D});
  for (size_t b = 0; b < grids.size(); ++b) {
    if (grids[b]->grid != grids[0]->grid || grids[b]->patch_dim != D) {
      throw ShapeMismatch("patches_to_tensor: inconsistent grids");
    }
    std::copy(grids[b]->values.begin(), grids[b]->values.end(),
              out.data().begin() + static_cast<std::int64_t>(b) * T * D);
  }
  return out;
}

std::vector<float> encode_image(TwoTowerModel& model, const PatchGrid& grid) {
  NoGradGuard ng;
  auto emb = encode_images_t(model, patches_to_tensor({&grid}));
  return emb.data();
}

std::vector<float> encode_text(TwoTowerModel& model, const TokenSequence& seq) {
  NoGradGuard ng;
  auto emb = encode_texts_t(model, {seq});
  return emb.data();
}

std::vector<std::vector<float>> encode_images_batched(TwoTowerModel& model,
                                                      const std::vector<const PatchGrid*>& grids,
                                                      int batch) {
  NoGradGuard ng;
  std::vector<std::vector<float>> out;
  out.reserve(grids.size());
  const int d = model.config.embed_dim;
  for (size_t start = 0; start < grids.size(); start += static_cast<size_t>(batch)) {
    const size_t end = std::min(grids.size(), start + static_cast<size_t>(batch));
    std::vector<const PatchGrid*> chunk(grids.begin() + static_cast<std::ptrdiff_t>(start),
                                        grids.begin() + static_cast<std::ptrdiff_t>(end));
    auto emb = encode_images_t(model, patches_to_tensor(chunk));
    for (size_t i = 0; i < chunk.size(); ++i) {
      out.emplace_back(emb.data().begin() + static_cast<std::int64_t>(i) * d,
                       emb.data().begin() + static_cast<std::int64_t>(i + 1) * d);
    }
  }
  return out;
}

std::vector<std::vector<float>> encode_texts_batched(TwoTowerModel& model,
                                                     const std::vector<TokenSequence>& seqs,
                                                     int batch) {
  NoGradGuard ng;
  std::vector<std::vector<float>> out;
  out.reserve(seqs.size());
  const int d = model.config.embed_dim;
  for (size_t start = 0; start < seqs.size(); start += static_cast<size_t>(batch)) {
    const size_t end = std::min(seqs.size(), start + static_cast<size_t>(batch));
    std::vector<TokenSequence> chunk(seqs.begin() + static_cast<std::ptrdiff_t>(start),
                                     seqs.begin() + static_cast<std::ptrdiff_t>(end));
    auto emb = encode_texts_t(model, chunk);
    for (size_t i = 0; i < chunk.size(); ++i) {
      out.emplace_back(emb.data().begin() + static_cast<std::int64_t>(i) * d,
                       emb.data().begin() + static_cast<std::int64_t>(i + 1) * d);
    }
  }
  return out;
}

}  // namespace minclip
