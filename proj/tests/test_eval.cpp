#include "doctest.h"

#include <cmath>
#include <map>

#include "minclip/eval.hpp"
#include "oracles.hpp"

using namespace minclip;

namespace {

std::vector<float> to_f(const std::vector<double>& v) {
  return std::vector<float>(v.begin(), v.end());
}

// Fixed toy bigram distribution over a 4-token vocabulary (ids 4..7 free).
class BigramScorer : public LanguageModelScorer {
 public:
  explicit BigramScorer(std::map<std::pair<int, int>, double> probs) : probs_(std::move(probs)) {}
  std::vector<double> token_logprobs(const TokenSequence& seq) const override {
    std::vector<double> out;
    for (int i = 0; i + 1 < seq.true_len; ++i) {
      const auto it = probs_.find({seq.ids[static_cast<size_t>(i)],
                                   seq.ids[static_cast<size_t>(i) + 1]});
      out.push_back(std::log(it == probs_.end() ? 1e-9 : it->second));
    }
    return out;
  }

 private:
  std::map<std::pair<int, int>, double> probs_;
};

// Context resets at every segment boundary token (id 9).
class SegmentScorer : public LanguageModelScorer {
 public:
  std::vector<double> token_logprobs(const TokenSequence& seq) const override {
    std::vector<double> out;
    int context = 0;
    for (int i = 0; i + 1 < seq.true_len; ++i) {
      const int tok = seq.ids[static_cast<size_t>(i) + 1];
      out.push_back(-0.1 * (context + 1));
      context = tok == 9 ? 0 : context + 1;
    }
    return out;
  }
};

TokenSequence seq_of(std::vector<int> ids) {
  TokenSequence s;
  s.ids = std::move(ids);
  s.true_len = static_cast<int>(s.ids.size());
  return s;
}

}  // namespace

TEST_CASE("top_k ranks an exact match first and breaks ties by id") {
  EmbeddingIndex index(2);
  index.add(7, {1, 0});
  index.add(3, {0, 1});
  index.add(5, {0, 1});  // duplicate row of id 3
  CHECK(top_k(index, {1, 0}, 1) == std::vector<std::int64_t>{7});
  const auto ranked = top_k(index, {0, 1}, 2);
  CHECK(ranked == std::vector<std::int64_t>{3, 5});  // ascending id on ties
  CHECK_THROWS_AS(top_k(EmbeddingIndex(2), {1, 0}, 1), EmptyIndex);
  CHECK_THROWS(top_k(index, {1, 0}, 4));
}

TEST_CASE("top_k matches brute force on 100 random instances") {
  Rng rng(101);
  for (int inst = 0; inst < 100; ++inst) {
    const int n = rng.uniform_int(2, 500);
    const int d = rng.uniform_int(2, 24);
    const int k = rng.uniform_int(1, std::min(n, 10));
    EmbeddingIndex index(d);
    std::vector<std::vector<float>> rows;
    std::vector<std::int64_t> ids;
    for (int i = 0; i < n; ++i) {
      rows.push_back(to_f(oracles::random_unit_vector(rng, d)));
      ids.push_back(i * 3 + 1);
      index.add(ids.back(), rows.back());
    }
    const auto query = to_f(oracles::random_unit_vector(rng, d));
    CHECK(top_k(index, query, k) == oracles::brute_force_top_k(rows, ids, query, k));
  }
}

TEST_CASE("recall_at_k on hand-built fixtures") {
  EmbeddingIndex index(2);
  index.add(0, {1, 0});
  index.add(1, {0, 1});

  // queries identical to their targets
  std::vector<std::vector<float>> queries = {{1, 0}, {0, 1}};
  std::vector<std::vector<std::int64_t>> truth = {{0}, {1}};
  CHECK(recall_at_k(queries, index, truth, 1) == 1.0);

  // ground truth never in the index
  std::vector<std::vector<std::int64_t>> missing = {{9}, {9}};
  CHECK(recall_at_k(queries, index, missing, 1) == 0.0);

  CHECK_THROWS_AS(recall_at_k(queries, index, {{0}}, 1), MissingGroundTruth);
  CHECK_THROWS_AS(recall_at_k(queries, index, {{0}, {}}, 1), MissingGroundTruth);
}

TEST_CASE("recall 3 of 10 at k=1, by hand enumeration") {
  const int d = 4;
  EmbeddingIndex index(d);
  std::vector<std::vector<float>> base(10, std::vector<float>(d, 0.0f));
  for (int i = 0; i < 10; ++i) {
    base[static_cast<size_t>(i)][static_cast<size_t>(i % d)] = 1.0f;
    // Make rows distinct.
    base[static_cast<size_t>(i)][static_cast<size_t>((i + 1) % d)] = 0.01f * static_cast<float>(i);
    index.add(i, base[static_cast<size_t>(i)]);
  }
  // Exactly queries 0, 1, 2 point at their own rows; the rest at a wrong row.
  std::vector<std::vector<float>> queries;
  std::vector<std::vector<std::int64_t>> truth;
  for (int i = 0; i < 10; ++i) {
    queries.push_back(base[static_cast<size_t>(i < 3 ? i : (i + 1) % 10)]);
    truth.push_back({i});
  }
  CHECK(recall_at_k(queries, index, truth, 1) == doctest::Approx(0.3));
}

TEST_CASE("recall_at_k accepts id sets and is monotone in k") {
  Rng rng(55);
  const int d = 8, n = 40;
  EmbeddingIndex index(d);
  std::vector<std::vector<float>> rows;
  for (int i = 0; i < n; ++i) {
    rows.push_back(to_f(oracles::random_unit_vector(rng, d)));
    index.add(i, rows.back());
  }
  std::vector<std::vector<float>> queries;
  std::vector<std::vector<std::int64_t>> truth;
  for (int q = 0; q < 20; ++q) {
    queries.push_back(to_f(oracles::random_unit_vector(rng, d)));
    truth.push_back({rng.uniform_int(0, n - 1), rng.uniform_int(0, n - 1)});
  }
  double prev = 0.0;
  for (int k = 1; k <= n; k += 3) {
    const double r = recall_at_k(queries, index, truth, k);
    CHECK(r >= prev);
    prev = r;
  }
  CHECK(prev == 1.0);
}

TEST_CASE("log_likelihood: single token with p=0.5") {
  BigramScorer scorer({{{2, 4}, 0.5}});
  CHECK(log_likelihood(seq_of({2, 4}), scorer) == doctest::Approx(std::log(0.5)));
  CHECK(std::log(0.5) == doctest::Approx(-0.6931).epsilon(1e-3));
}

TEST_CASE("log_likelihood under a uniform scorer is -n ln V") {
  UniformScorer scorer(50);
  const auto seq = seq_of({2, 4, 5, 6, 3});
  CHECK(log_likelihood(seq, scorer) == doctest::Approx(-4 * std::log(50.0)));
}

TEST_CASE("log_likelihood sums a toy bigram table by hand") {
  BigramScorer scorer({{{2, 4}, 0.5}, {{4, 5}, 0.25}, {{5, 6}, 0.125}, {{6, 3}, 0.0625}});
  const double expected =
      std::log(0.5) + std::log(0.25) + std::log(0.125) + std::log(0.0625);
  CHECK(log_likelihood(seq_of({2, 4, 5, 6, 3}), scorer) == doctest::Approx(expected));
}

TEST_CASE("log_likelihood is additive over concatenation for a resetting scorer") {
  SegmentScorer scorer;
  // Segment a then boundary token 9, then segment b: context resets, so the
  // concatenation scores the same as the parts.
  const auto a = seq_of({2, 4, 5, 9});
  const auto b = seq_of({9, 6, 7, 8});  // prefix position is the boundary
  const auto ab = seq_of({2, 4, 5, 9, 6, 7, 8});
  const double la = log_likelihood(a, scorer);
  // Skip b's BOS-position duplicate: score only its continuation tokens.
  TokenSequence b_cont = b;
  const double lb = log_likelihood(b_cont, scorer);
  CHECK(log_likelihood(ab, scorer) == doctest::Approx(la + lb));
}

TEST_CASE("caption_stats on the paper-ratio fixture") {
  UniformScorer scorer(10);
  const Vocabulary vocab = build_vocabulary({"w"}, 8);
  auto words = [](int n) {
    std::string s;
    for (int i = 0; i < n; ++i) s += "w ";
    return s;
  };
  const std::vector<std::string> alt = {words(7), words(7), words(7)};
  const std::vector<std::string> recap = {words(56), words(56), words(56)};
  const CaptionStats stats = caption_stats(alt, recap, scorer, vocab, 128);
  CHECK(stats.median_words_a == 7);
  CHECK(stats.median_words_b == 56);
  CHECK(stats.median_length_ratio == doctest::Approx(8.0));

  const CaptionStats same = caption_stats(alt, alt, scorer, vocab, 128);
  CHECK(same.median_length_ratio == doctest::Approx(1.0));
  CHECK(same.median_loglik_a == same.median_loglik_b);
  CHECK_THROWS(caption_stats({}, alt, scorer, vocab, 128));
}

TEST_CASE("histogram has 50 bins covering the value range") {
  std::vector<double> values;
  for (int i = 0; i <= 100; ++i) values.push_back(i);
  const Histogram h = histogram50(values);
  CHECK(h.counts.size() == 50);
  CHECK(h.lo == 0.0);
  CHECK(h.hi == 100.0);
  std::int64_t total = 0;
  for (auto c : h.counts) total += c;
  CHECK(total == 101);
  const std::string csv = histogram_csv(h);
  CHECK(csv.rfind("bin_left,count\n", 0) == 0);
}

TEST_CASE("majority_vote") {
  const auto r = majority_vote({{true, true, false}, {false, false, false}});
  CHECK(r.verdicts == std::vector<bool>{true, false});
  CHECK(r.acceptable_fraction == doctest::Approx(0.5));
  CHECK_THROWS_AS(majority_vote({{true, true}}), WrongRaterCount);
}

TEST_CASE("majority_vote: 351 of 500 items accepted gives 0.702") {
  std::vector<std::vector<bool>> ratings;
  for (int i = 0; i < 500; ++i) {
    if (i < 351) {
      ratings.push_back({true, true, i % 2 == 0});
    } else {
      ratings.push_back({false, false, i % 2 == 0});
    }
  }
  CHECK(majority_vote(ratings).acceptable_fraction == doctest::Approx(0.702));
}

TEST_CASE("two_proportion_z trivial and degenerate cases") {
  const auto equal = two_proportion_z(50, 100, 50, 100);
  CHECK(equal.z == 0.0);
  CHECK(equal.p_value == doctest::Approx(1.0));
  CHECK_THROWS_AS(two_proportion_z(0, 100, 0, 100), DegenerateInput);
  CHECK_THROWS_AS(two_proportion_z(100, 100, 100, 100), DegenerateInput);
  CHECK_THROWS_AS(two_proportion_z(5, 0, 1, 10), DegenerateInput);
  CHECK_THROWS_AS(two_proportion_z(11, 10, 1, 10), DegenerateInput);
}

TEST_CASE("two_proportion_z matches the independent long-double oracle") {
  // Accuracy-gap inputs at ImageNet-like sizes: p1 ~= 0.775 of 1,281,167 vs
  // p2 = 0.762 of 50,000.
  const std::int64_t s1 = 992904, n1 = 1281167, s2 = 38100, n2 = 50000;
  const auto r = two_proportion_z(s1, n1, s2, n2);
  const double want = static_cast<double>(oracles::pooled_z(s1, n1, s2, n2));
  CHECK(r.z == doctest::Approx(want).epsilon(1e-9));
  // Frozen from the oracle: the pooled formula gives ~6.824 here.
  CHECK(r.z == doctest::Approx(6.8238).epsilon(1e-3));
  CHECK(r.p_value < 1e-9);

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const std::int64_t m1 = rng.uniform_int(2, 100000);
    const std::int64_t m2 = rng.uniform_int(2, 100000);
    const std::int64_t k1 = rng.uniform_int(1, static_cast<int>(m1) - 1);
    const std::int64_t k2 = rng.uniform_int(1, static_cast<int>(m2) - 1);
    const auto got = two_proportion_z(k1, m1, k2, m2);
    CHECK(got.z ==
          doctest::Approx(static_cast<double>(oracles::pooled_z(k1, m1, k2, m2))).epsilon(1e-9));
  }
}

TEST_CASE("blind_baseline: identical captions tie and ties are incorrect") {
  UniformScorer scorer(10);
  const Vocabulary vocab = build_vocabulary({"red cube"}, 16);
  std::vector<ProbeItem> probes;
  ProbeItem p;
  p.positive = "red cube";
  p.negative = "red cube";
  p.category = "color";
  probes.push_back(p);
  const auto report = blind_baseline(probes, scorer, vocab, 16);
  CHECK(report.accuracy == 0.0);
  CHECK(report.ties == 1);
}

TEST_CASE("blind_baseline under an exactly uniform scorer prefers shorter captions") {
  UniformScorer scorer(10);
  const Vocabulary vocab = build_vocabulary({"red cube big"}, 16);
  ProbeItem longer_neg;
  longer_neg.positive = "red cube";
  longer_neg.negative = "red cube big";
  ProbeItem longer_pos;
  longer_pos.positive = "red cube big";
  longer_pos.negative = "red cube";
  const auto r1 = blind_baseline({longer_neg}, scorer, vocab, 16);
  const auto r2 = blind_baseline({longer_pos}, scorer, vocab, 16);
  CHECK(r1.accuracy == 1.0);  // -2 ln V > -3 ln V
  CHECK(r2.accuracy == 0.0);
}

TEST_CASE("macro_accuracy: ties count as incorrect and are flagged") {
  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.hidden = 32;
  cfg.img_layers = 1;
  cfg.txt_layers = 1;
  cfg.patch_grid = 4;
  cfg.patch_dim = 192;
  cfg.max_seq_len = 16;
  cfg.vocab_size = 32;
  TwoTowerModel model = init_model(cfg, 5, 0.0);
  const Vocabulary vocab = build_vocabulary({"red blue cube sphere"}, 32);

  std::vector<ProbeItem> probes;
  ProbeItem tie;
  tie.image_embedding = std::vector<float>(16, 0.25f);
  tie.positive = "red cube";
  tie.negative = "red cube";
  tie.category = "color";
  tie.kind = NegativeKind::kReplaceAttribute;
  probes.push_back(tie);
  const auto report = macro_accuracy(probes, model, vocab);
  CHECK(report.ties == 1);
  CHECK(report.macro_accuracy == 0.0);
}

TEST_CASE("macro accuracy averages categories unweighted") {
  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.hidden = 32;
  cfg.img_layers = 1;
  cfg.txt_layers = 1;
  cfg.patch_grid = 4;
  cfg.patch_dim = 192;
  cfg.max_seq_len = 16;
  cfg.vocab_size = 32;
  TwoTowerModel model = init_model(cfg, 7, 0.0);
  const Vocabulary vocab = build_vocabulary({"red blue green cube sphere ball"}, 32);

  // Category "win": image embedding equals the positive's text embedding, so
  // sim(pos) = 1 > sim(neg). Category "tie": positive == negative.
  std::vector<ProbeItem> probes;
  for (int i = 0; i < 3; ++i) {
    ProbeItem p;
    p.positive = "red cube";
    p.negative = "blue sphere";
    p.image_embedding = encode_text(model, tokenize(p.positive, vocab, cfg.max_seq_len));
    p.category = "win";
    p.kind = NegativeKind::kReplaceObject;
    probes.push_back(p);
  }
  for (int i = 0; i < 9; ++i) {
    ProbeItem p;
    p.positive = "green ball";
    p.negative = "green ball";
    p.image_embedding = std::vector<float>(16, 0.25f);
    p.category = "tie";
    p.kind = NegativeKind::kReplaceObject;
    probes.push_back(p);
  }
  const auto report = macro_accuracy(probes, model, vocab);
  CHECK(report.macro_accuracy == doctest::Approx(0.5));  // (1.0 + 0.0) / 2, unweighted
  CHECK(report.micro_accuracy == doctest::Approx(3.0 / 12.0));
  double macro_from_rows = 0;
  for (const auto& row : report.rows) macro_from_rows += row.accuracy();
  macro_from_rows /= static_cast<double>(report.rows.size());
  CHECK(report.macro_accuracy == doctest::Approx(macro_from_rows));
}

TEST_CASE("an untrained model scores at chance over 2000 probes") {
  ModelConfig cfg;
  cfg.embed_dim = 24;
  cfg.heads = 2;
  cfg.hidden = 32;
  cfg.img_layers = 1;
  cfg.txt_layers = 1;
  cfg.patch_grid = 4;
  cfg.patch_dim = 192;
  cfg.max_seq_len = 24;
  cfg.vocab_size = 128;
  TwoTowerModel model = init_model(cfg, 11, 0.0);

  Rng gen(17);
  std::vector<std::string> corpus;
  for (int i = 0; i < 500; ++i) {
    corpus.push_back(scene_to_caption(generate_scene(gen), CaptionStyle::kDefault));
  }
  const Vocabulary vocab = build_vocabulary(corpus, 128);

  // Probe pairs: a relation sentence vs its argument swap, with random unit
  // image embeddings. Nothing is trained, so correctness is a coin flip.
  Rng rng(19);
  std::vector<ProbeItem> probes;
  while (probes.size() < 2000) {
    const Scene scene = generate_scene(rng);
    if (scene.relations.empty()) continue;
    const auto& rel = scene.relations[0];
    ProbeItem p;
    p.image_embedding = to_f(oracles::random_unit_vector(rng, cfg.embed_dim));
    p.positive =
        "the " +
        std::string(
            nouns()[static_cast<size_t>(scene.objects[static_cast<size_t>(rel.subject)].noun)]
                .word) +
        " is " + predicates()[static_cast<size_t>(rel.predicate)].phrase + " the " +
        nouns()[static_cast<size_t>(scene.objects[static_cast<size_t>(rel.object)].noun)].word +
        ".";
    auto swap_rng = Rng(probes.size());
    p.negative = generate_negative(p.positive, NegativeKind::kSwapRelationArgs, swap_rng).negative;
    p.category = predicates()[static_cast<size_t>(rel.predicate)].phrase;
    p.kind = NegativeKind::kSwapRelationArgs;
    probes.push_back(std::move(p));
  }
  const auto report = macro_accuracy(probes, model, vocab);
  CHECK(report.micro_accuracy > 0.45);
  CHECK(report.micro_accuracy < 0.55);
  CHECK(report.ties == 0);
}
