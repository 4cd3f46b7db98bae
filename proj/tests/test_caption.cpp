#include "doctest.h"

#include <algorithm>
#include <set>

#include "minclip/caption.hpp"
#include "minclip/vocab.hpp"

using namespace minclip;

namespace {

double mean_words(const std::vector<std::string>& captions) {
  double total = 0;
  for (const auto& c : captions) {
    for (const auto& w : split_words(c)) {
      if (w != ".") total += 1;
    }
  }
  return total / static_cast<double>(captions.size());
}

}  // namespace

TEST_CASE("default caption puts attributes and noun in one sentence") {
  Scene scene;
  scene.objects.push_back({noun_index("cube"), {{AttrKind::kColor, color_index("red")}}});
  scene.background = 0;
  const std::string caption = scene_to_caption(scene, CaptionStyle::kDefault);
  CHECK(caption.find("red cube") != std::string::npos);
  CHECK(caption.find("there is a red cube.") != std::string::npos);
}

TEST_CASE("relation sentence uses the expected phrasing") {
  Scene scene;
  scene.objects.push_back({noun_index("horse"), {{AttrKind::kColor, 0}}});
  scene.objects.push_back({noun_index("grass"), {{AttrKind::kColor, 2}}});
  scene.relations.push_back({0, kEating, 1});
  scene.background = 0;
  const std::string caption = scene_to_caption(scene, CaptionStyle::kDefault);
  CHECK(caption.find("the horse is eating the grass.") != std::string::npos);
}

TEST_CASE("caption styles order by length: alt < short < default") {
  Rng rng(5);
  std::vector<std::string> alt, sh, def;
  for (int i = 0; i < 500; ++i) {
    const Scene scene = generate_scene(rng);
    alt.push_back(scene_to_caption(scene, CaptionStyle::kAltText));
    sh.push_back(scene_to_caption(scene, CaptionStyle::kShort));
    def.push_back(scene_to_caption(scene, CaptionStyle::kDefault));
  }
  const double m_alt = mean_words(alt), m_sh = mean_words(sh), m_def = mean_words(def);
  CHECK(m_alt < m_sh);
  CHECK(m_sh < m_def);
  CHECK(m_def / m_alt >= 5.0);
}

TEST_CASE("alt-text stays within 8 words and drops attributes/relations") {
  Rng rng(19);
  for (int i = 0; i < 300; ++i) {
    const Scene scene = generate_scene(rng);
    const std::string alt = scene_to_caption(scene, CaptionStyle::kAltText);
    CHECK(split_words(alt).size() <= 8);
    for (const auto& [kind, value] : scene.objects[0].attrs) {
      CHECK(alt.find(attr_value_word(kind, value)) == std::string::npos);
    }
  }
}

TEST_CASE("parse recovers the paper-style relation triple") {
  const auto result = parse_caption("the horse is eating the grass.");
  REQUIRE(result.triples.size() == 1);
  CHECK(result.triples[0][0] == "horse");
  CHECK(result.triples[0][1] == "eating");
  CHECK(result.triples[0][2] == "grass");
}

TEST_CASE("parse recovers attribute pairs from a conjunction") {
  // Attribute-perturbation phrasing: two attributed nouns joined by 'and'.
  const auto result = parse_caption("the wooden table and the white cup.");
  REQUIRE(result.pairs.size() == 2);
  CHECK(result.pairs[0] == std::make_pair(std::string("wooden"), std::string("table")));
  CHECK(result.pairs[1] == std::make_pair(std::string("white"), std::string("cup")));
}

TEST_CASE("free text outside the grammar is Unparseable") {
  CHECK_THROWS_AS(parse_caption("colorless green ideas sleep."), Unparseable);
  CHECK_THROWS_AS(parse_caption("the horse is eating the grass"), Unparseable);  // no period
  CHECK_THROWS_AS(parse_caption(""), Unparseable);
}

TEST_CASE("round trip: parse(default caption) recovers relations and attribute pairs") {
  Rng rng(41);
  for (int i = 0; i < 10000; ++i) {
    const Scene scene = generate_scene(rng);
    const std::string caption = scene_to_caption(scene, CaptionStyle::kDefault);
    const ParseResult result = parse_caption(caption);

    std::multiset<std::array<std::string, 3>> want_triples;
    for (const auto& rel : scene.relations) {
      want_triples.insert(
          {nouns()[static_cast<size_t>(scene.objects[static_cast<size_t>(rel.subject)].noun)].word,
           predicates()[static_cast<size_t>(rel.predicate)].phrase,
           nouns()[static_cast<size_t>(scene.objects[static_cast<size_t>(rel.object)].noun)].word});
    }
    std::multiset<std::pair<std::string, std::string>> want_pairs;
    for (const auto& obj : scene.objects) {
      for (const auto& [kind, value] : obj.attrs) {
        want_pairs.insert(
            {attr_value_word(kind, value), nouns()[static_cast<size_t>(obj.noun)].word});
      }
    }
    CHECK(std::multiset<std::array<std::string, 3>>(result.triples.begin(),
                                                    result.triples.end()) == want_triples);
    CHECK(std::multiset<std::pair<std::string, std::string>>(result.pairs.begin(),
                                                             result.pairs.end()) == want_pairs);
  }
}

TEST_CASE("render/parse are mutually inverse on canonical text") {
  Rng rng(43);
  for (int i = 0; i < 2000; ++i) {
    const Scene scene = generate_scene(rng);
    const std::string caption = scene_to_caption(scene, CaptionStyle::kDefault);
    CHECK(parse_caption_full(caption).render() == caption);
    const std::string sh = scene_to_caption(scene, CaptionStyle::kShort);
    CHECK(parse_caption_full(sh).render() == sh);
  }
}

TEST_CASE("sample_sentences returns a 1-sentence caption unchanged") {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    CHECK(sample_sentences("the horse is eating the grass.", rng) ==
          "the horse is eating the grass.");
  }
}

TEST_CASE("sample_sentences keeps verbatim sentences in order, 1..10 of them") {
  std::string caption;
  std::vector<std::string> sentences;
  for (int i = 0; i < 12; ++i) {
    sentences.push_back("sentence number " + std::to_string(i) + ".");
    if (i) caption += ' ';
    caption += sentences.back();
  }
  Rng rng(77);
  for (int draw = 0; draw < 200; ++draw) {
    const std::string out = sample_sentences(caption, rng);
    const auto parts = split_sentences(out);
    CHECK(parts.size() >= 1);
    CHECK(parts.size() <= 10);
    // verbatim + order preserved
    size_t cursor = 0;
    for (const auto& part : parts) {
      auto it = std::find(sentences.begin() + static_cast<std::ptrdiff_t>(cursor),
                          sentences.end(), part);
      CHECK(it != sentences.end());
      cursor = static_cast<size_t>(it - sentences.begin()) + 1;
    }
  }
}

TEST_CASE("sample_sentences covers each sentence at a fair rate") {
  // 5 sentences: k ~ U{1..5}, each sentence kept with probability E[k]/5 = 0.6.
  std::string caption;
  for (int i = 0; i < 5; ++i) caption += "sentence number " + std::to_string(i) + ". ";
  caption.pop_back();
  Rng rng(99);
  std::vector<int> counts(5, 0);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    const std::string out = sample_sentences(caption, rng);
    for (int i = 0; i < 5; ++i) {
      if (out.find("sentence number " + std::to_string(i) + ".") != std::string::npos) {
        ++counts[static_cast<size_t>(i)];
      }
    }
  }
  for (int i = 0; i < 5; ++i) {
    CHECK(counts[static_cast<size_t>(i)] >= static_cast<int>(0.15 * draws));
  }
}

TEST_CASE("sampled sentences are a subset of the input (multiset inclusion)") {
  Rng gen(7), rng(13);
  for (int i = 0; i < 200; ++i) {
    const Scene scene = generate_scene(gen);
    const std::string caption = scene_to_caption(scene, CaptionStyle::kDefault);
    const auto input = split_sentences(caption);
    std::multiset<std::string> input_set(input.begin(), input.end());
    for (const auto& part : split_sentences(sample_sentences(caption, rng))) {
      auto it = input_set.find(part);
      REQUIRE(it != input_set.end());
      input_set.erase(it);
    }
  }
}
