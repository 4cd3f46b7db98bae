#include "doctest.h"

#include "minclip/caption.hpp"
#include "minclip/scene.hpp"
#include "minclip/vocab.hpp"

using namespace minclip;

TEST_CASE("build_vocabulary lowercases and splits punctuation") {
  const Vocabulary v = build_vocabulary({"A red cube."}, 64);
  CHECK(v.contains("a"));
  CHECK(v.contains("red"));
  CHECK(v.contains("cube"));
  CHECK(v.contains("."));
  CHECK_FALSE(v.contains("A"));
}

TEST_CASE("build_vocabulary rejects an empty corpus") {
  CHECK_THROWS_AS(build_vocabulary({}, 64), EmptyCorpus);
}

TEST_CASE("frequency ties break lexicographically") {
  // "zfirst" and "afirst" both appear once; with room for only one, the
  // lexicographically smaller survives.
  const Vocabulary v = build_vocabulary({"zlast afirst"}, 5);
  CHECK(v.contains("afirst"));
  CHECK_FALSE(v.contains("zlast"));
}

TEST_CASE("synthetic corpus coverage is at least 0.99 at max_size 512") {
  Rng rng(17);
  std::vector<std::string> corpus;
  for (int i = 0; i < 10000; ++i) {
    const Scene scene = generate_scene(rng);
    corpus.push_back(scene_to_caption(scene, CaptionStyle::kDefault));
    corpus.push_back(scene_to_caption(scene, CaptionStyle::kAltText));
  }
  const Vocabulary v = build_vocabulary(corpus, 512);
  CHECK(vocab_coverage(v, corpus) >= 0.99);
}

TEST_CASE("tokenize empty text") {
  const Vocabulary v = build_vocabulary({"red cube"}, 16);
  const TokenSequence seq = tokenize("", v, 6);
  CHECK(seq.ids[0] == Vocabulary::kBos);
  CHECK(seq.ids[1] == Vocabulary::kEos);
  CHECK(seq.ids[2] == Vocabulary::kPad);
  CHECK(seq.true_len == 2);
}

TEST_CASE("tokenize known words") {
  const Vocabulary v = build_vocabulary({"red cube"}, 16);
  const TokenSequence seq = tokenize("red cube", v, 8);
  CHECK(seq.ids[0] == Vocabulary::kBos);
  CHECK(seq.ids[1] == v.id("red"));
  CHECK(seq.ids[2] == v.id("cube"));
  CHECK(seq.ids[3] == Vocabulary::kEos);
  CHECK(seq.true_len == 4);
}

TEST_CASE("tokenize truncates to max_seq_len with EOS kept") {
  const Vocabulary v = build_vocabulary({"word"}, 16);
  std::string text;
  for (int i = 0; i < 200; ++i) text += "word ";
  const TokenSequence seq = tokenize(text, v, 64);
  CHECK(seq.ids.size() == 64);
  CHECK(seq.true_len == 64);
  CHECK(seq.ids[0] == Vocabulary::kBos);
  CHECK(seq.ids[63] == Vocabulary::kEos);
}

TEST_CASE("unknown words map to UNK") {
  const Vocabulary v = build_vocabulary({"red cube"}, 16);
  const TokenSequence seq = tokenize("red dragon", v, 8);
  CHECK(seq.ids[2] == Vocabulary::kUnk);
}

TEST_CASE("vocab text round trip") {
  const Vocabulary v = build_vocabulary({"the quick brown fox."}, 32);
  const Vocabulary w = vocab_from_text(vocab_to_text(v));
  CHECK(w.size() == v.size());
  for (int i = 0; i < v.size(); ++i) CHECK(w.token(i) == v.token(i));
}
