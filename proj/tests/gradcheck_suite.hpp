#pragma once

// Shared grad-check battery over every op kind, run by both the unit tests
// and the acceptance suite. Everything here runs in 64-bit.

#include <functional>
#include <string>
#include <vector>

#include "minclip/gradcheck.hpp"
#include "minclip/model.hpp"
#include "minclip/ops.hpp"
#include "minclip/rng.hpp"
#include "minclip/train.hpp"

namespace gradcheck_suite {

using minclip::DTensor;
using minclip::Rng;

inline DTensor random_dtensor(Rng& rng, minclip::Shape shape, double scale = 1.0) {
  DTensor t = DTensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = rng.gaussian() * scale;
  return t;
}

struct OpCheck {
  std::string name;
  double worst = 0.0;
};

// Runs `points` random checks per op kind; returns worst relative error per op.
inline std::vector<OpCheck> run_op_checks(int points, std::uint64_t seed) {
  std::vector<OpCheck> results;
  Rng rng(seed);
  const double eps = 1e-5;

  auto record = [&](const std::string& name,
                    const std::function<double(Rng&)>& one_point) {
    OpCheck check{name, 0.0};
    for (int p = 0; p < points; ++p) check.worst = std::max(check.worst, one_point(rng));
    results.push_back(check);
  };

  record("matmul", [&](Rng& r) {
    DTensor a = random_dtensor(r, {3, 4});
    DTensor b = random_dtensor(r, {4, 2});
    return minclip::grad_check(
        [&](const DTensor& x) { return minclip::mean(minclip::matmul(x, b)); }, a, eps);
  });
  record("matmul_transpose_b", [&](Rng& r) {
    DTensor a = random_dtensor(r, {3, 4});
    DTensor b = random_dtensor(r, {2, 4});
    return minclip::grad_check(
        [&](const DTensor& x) { return minclip::mean(minclip::matmul(a, x, true)); }, b, eps);
  });
  record("add", [&](Rng& r) {
    DTensor a = random_dtensor(r, {2, 3});
    DTensor b = random_dtensor(r, {3});
    return minclip::grad_check(
        [&](const DTensor& x) {
          return minclip::mean(minclip::mul(minclip::add(a, x), minclip::add(a, x)));
        },
        b, eps);
  });
  record("mul", [&](Rng& r) {
    DTensor a = random_dtensor(r, {2, 3});
    DTensor b = random_dtensor(r, {2, 3});
    return minclip::grad_check(
        [&](const DTensor& x) { return minclip::mean(minclip::mul(x, b)); }, a, eps);
  });
  record("mul_scalar_operand", [&](Rng& r) {
    DTensor a = random_dtensor(r, {2, 3});
    DTensor s = random_dtensor(r, {1});
    return minclip::grad_check(
        [&](const DTensor& x) { return minclip::mean(minclip::mul(a, x)); }, s, eps);
  });
  record("scale", [&](Rng& r) {
    DTensor a = random_dtensor(r, {5});
    return minclip::grad_check(
        [&](const DTensor& x) { return minclip::mean(minclip::scale(x, 2.5)); }, a, eps);
  });
  record("softmax", [&](Rng& r) {
    DTensor a = random_dtensor(r, {2, 5});
    DTensor w = random_dtensor(r, {2, 5});
    return minclip::grad_check(
        [&](const DTensor& x) { return minclip::mean(minclip::mul(minclip::softmax(x), w)); }, a,
        eps);
  });
  record("layernorm", [&](Rng& r) {
    DTensor a = random_dtensor(r, {2, 6});
    DTensor w = random_dtensor(r, {2, 6});
    return minclip::grad_check(
        [&](const DTensor& x) { return minclip::mean(minclip::mul(minclip::layernorm(x), w)); },
        a, eps);
  });
  record("gelu", [&](Rng& r) {
    DTensor a = random_dtensor(r, {7});
    return minclip::grad_check(
        [&](const DTensor& x) { return minclip::mean(minclip::gelu(x)); }, a, eps);
  });
  record("log", [&](Rng& r) {
    DTensor a = random_dtensor(r, {6});
    for (auto& v : a.data()) v = std::abs(v) + 0.5;
    return minclip::grad_check(
        [&](const DTensor& x) { return minclip::mean(minclip::log(x)); }, a, eps);
  });
  record("exp", [&](Rng& r) {
    DTensor a = random_dtensor(r, {6}, 0.5);
    return minclip::grad_check(
        [&](const DTensor& x) { return minclip::mean(minclip::exp(x)); }, a, eps);
  });
  record("embedding_lookup", [&](Rng& r) {
    DTensor table = random_dtensor(r, {5, 3});
    const std::vector<int> ids = {1, 4, 1};  // repeated id exercises accumulation
    DTensor w = random_dtensor(r, {3, 3});
    return minclip::grad_check(
        [&](const DTensor& x) {
          return minclip::mean(minclip::mul(minclip::embedding_lookup(x, ids, {3}), w));
        },
        table, eps);
  });
  record("masked_attention", [&](Rng& r) {
    const int B = 2, T = 3, D = 4;
    DTensor q = random_dtensor(r, {B, T, D});
    DTensor k = random_dtensor(r, {B, T, D});
    DTensor v = random_dtensor(r, {B, T, D});
    DTensor mask = DTensor::zeros({B, T, T});
    for (int b = 0; b < B; ++b) {
      for (int i = 0; i < T; ++i) {
        for (int j = 0; j <= i; ++j) {
          mask.data()[static_cast<size_t>((b * T + i) * T + j)] = 1.0;
        }
      }
    }
    DTensor w = random_dtensor(r, {B, T, D});
    auto f_q = minclip::grad_check(
        [&](const DTensor& x) {
          return minclip::mean(minclip::mul(minclip::masked_attention(x, k, v, mask, 2), w));
        },
        q, eps);
    auto f_k = minclip::grad_check(
        [&](const DTensor& x) {
          return minclip::mean(minclip::mul(minclip::masked_attention(q, x, v, mask, 2), w));
        },
        k, eps);
    auto f_v = minclip::grad_check(
        [&](const DTensor& x) {
          return minclip::mean(minclip::mul(minclip::masked_attention(q, k, x, mask, 2), w));
        },
        v, eps);
    return std::max({f_q, f_k, f_v});
  });
  record("mean", [&](Rng& r) {
    DTensor a = random_dtensor(r, {3, 4});
    return minclip::grad_check([&](const DTensor& x) { return minclip::mean(x); }, a, eps);
  });
  record("masked_mean", [&](Rng& r) {
    DTensor a = random_dtensor(r, {2, 3, 4});
    DTensor mask = DTensor::from_data({2, 3}, {1, 1, 0, 1, 0, 0});
    DTensor w = random_dtensor(r, {2, 4});
    return minclip::grad_check(
        [&](const DTensor& x) {
          return minclip::mean(minclip::mul(minclip::masked_mean(x, mask), w));
        },
        a, eps);
  });
  record("l2_normalize", [&](Rng& r) {
    DTensor a = random_dtensor(r, {3, 5});
    DTensor w = random_dtensor(r, {3, 5});
    return minclip::grad_check(
        [&](const DTensor& x) { return minclip::mean(minclip::mul(minclip::l2_normalize(x), w)); },
        a, eps);
  });
  record("reshape_slice", [&](Rng& r) {
    DTensor a = random_dtensor(r, {4, 3});
    DTensor w = random_dtensor(r, {2, 3});
    return minclip::grad_check(
        [&](const DTensor& x) {
          auto s = minclip::slice_rows(minclip::reshape(x, {4, 3}), 1, 2);
          return minclip::mean(minclip::mul(s, w));
        },
        a, eps);
  });
  record("cross_entropy_rows", [&](Rng& r) {
    DTensor logits = random_dtensor(r, {4, 6});
    const std::vector<int> targets = {1, 0, 5, 2};
    return minclip::grad_check(
        [&](const DTensor& x) { return minclip::cross_entropy_rows(x, targets); }, logits, eps);
  });
  record("softmax_cross_entropy_chain", [&](Rng& r) {
    DTensor logits = random_dtensor(r, {3, 5});
    const std::vector<int> targets = {0, 3, 2};
    return minclip::grad_check(
        [&](const DTensor& x) { return minclip::cross_entropy_rows(minclip::scale(x, 1.7), targets); },
        logits, eps);
  });

  return results;
}

// Grad check of the full two-tower loss on a tiny double-precision model,
// differentiating through a chosen parameter tensor per point.
inline double full_loss_check(int points, std::uint64_t seed) {
  using namespace minclip;
  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.hidden = 24;
  cfg.img_layers = 2;
  cfg.txt_layers = 2;
  cfg.patch_grid = 2;
  cfg.patch_dim = 12;
  cfg.max_seq_len = 8;
  cfg.vocab_size = 12;

  Rng rng(seed);
  double worst = 0.0;
  const std::vector<std::string> targets = {"img.proj.w", "txt.emb",      "img.l0.wq",
                                            "txt.l1.w2",  "img_head",     "txt_head",
                                            "txt.pos",    "log_temperature"};
  for (int p = 0; p < points; ++p) {
    TwoTowerModel fm = init_model(cfg, seed + static_cast<std::uint64_t>(p), 0.3);
    TwoTowerModelT<double> dm = to_double(fm);

    const int B = 4;
    DTensor patches = random_dtensor(rng, {B, 4, 12}, 0.5);
    for (auto& v : patches.data()) v = std::abs(v) < 1 ? std::abs(v) : 0.9;
    std::vector<TokenSequence> seqs;
    for (int b = 0; b < B; ++b) {
      TokenSequence s;
      s.ids = {2, 4 + b, 5, 6 + b, 3, 0, 0, 0};
      s.true_len = 5;
      seqs.push_back(s);
    }

    const std::string& target = targets[static_cast<size_t>(p) % targets.size()];
    DTensor* param = nullptr;
    dm.for_each_param([&](const std::string& name, DTensor& t) {
      if (name == target) param = &t;
    });
    const DTensor original = param->detach_copy();

    // Rebinding the parameter handle routes gradients to grad_check's copy.
    auto loss_fn = [&](const DTensor& x) {
      *param = x;
      auto img = encode_images_t(dm, patches);
      auto txt = encode_texts_t(dm, seqs);
      return contrastive_loss(img, txt, dm.log_temperature);
    };
    worst = std::max(worst, grad_check(loss_fn, original, 1e-5));
  }
  return worst;
}

}  // namespace gradcheck_suite
