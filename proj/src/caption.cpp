#include "minclip/caption.hpp"

#include <algorithm>
#include <numeric>

#include "minclip/common.hpp"
#include "minclip/vocab.hpp"

namespace minclip {

const char* caption_style_name(CaptionStyle style) {
  switch (style) {
    case CaptionStyle::kAltText: return "alt_text";
    case CaptionStyle::kDefault: return "default";
    case CaptionStyle::kShort: return "short";
  }
  return "";
}

CaptionStyle caption_style_from_name(const std::string& name) {
  if (name == "alt_text") return CaptionStyle::kAltText;
  if (name == "default") return CaptionStyle::kDefault;
  if (name == "short") return CaptionStyle::kShort;
  throw ConfigError("unknown caption style: " + name);
}

namespace {

bool starts_with_vowel(const std::string& word) {
  if (word.empty()) return false;
  switch (word[0]) {
    case 'a':
    case 'e':
    case 'i':
    case 'o':
    case 'u':
      return true;
    default:
      return false;
  }
}

std::string attr_words(const ParsedItem& item) {
  std::string out;
  for (const auto& [kind, value] : item.attrs) {
    out += attr_value_word(kind, value);
    out += ' ';
  }
  return out;
}

ParsedItem item_from_object(const SceneObject& obj, bool colors_only) {
  ParsedItem item;
  for (const auto& [kind, value] : obj.attrs) {
    if (colors_only && kind != AttrKind::kColor) continue;
    item.attrs.emplace_back(kind, value);
  }
  item.noun = obj.noun;
  return item;
}

std::string object_sentence(const SceneObject& obj) {
  const ParsedItem item = item_from_object(obj, false);
  const std::string rest = render_item(item);
  const std::string article = starts_with_vowel(rest) ? "an" : "a";
  return "there is " + article + " " + rest + ".";
}

std::string relation_sentence(const Scene& scene, const SceneRelation& rel) {
  const char* s = nouns()[static_cast<size_t>(scene.objects[static_cast<size_t>(rel.subject)].noun)].word;
  const char* o = nouns()[static_cast<size_t>(scene.objects[static_cast<size_t>(rel.object)].noun)].word;
  return std::string("the ") + s + " is " + predicates()[static_cast<size_t>(rel.predicate)].phrase +
         " the " + o + ".";
}

const char* kFillers[6] = {"photo", "img", "picture", "stock", "image", "file"};

}  // namespace

std::string render_item(const ParsedItem& item) {
  return attr_words(item) + nouns()[static_cast<size_t>(item.noun)].word;
}

std::string scene_to_caption(const Scene& scene, CaptionStyle style) {
  validate_scene(scene);
  switch (style) {
    case CaptionStyle::kDefault: {
      std::string out;
      for (const auto& obj : scene.objects) {
        if (!out.empty()) out += ' ';
        out += object_sentence(obj);
      }
      for (const auto& rel : scene.relations) {
        out += ' ';
        out += relation_sentence(scene, rel);
      }
      out += " the background is ";
      out += backgrounds()[static_cast<size_t>(scene.background)].word;
      out += '.';
      return out;
    }
    case CaptionStyle::kShort: {
      std::string out;
      for (size_t i = 0; i < scene.objects.size(); ++i) {
        out += i == 0 ? "the " : " and the ";
        out += render_item(item_from_object(scene.objects[i], true));
      }
      out += '.';
      if (!scene.relations.empty()) {
        out += ' ';
        out += relation_sentence(scene, scene.relations[0]);
      }
      return out;
    }
    case CaptionStyle::kAltText: {
      // Deterministic per scene: a web-ish fragment, nouns only, no grammar.
      std::uint64_t h = fnv1a(&scene.background, sizeof(scene.background));
      for (const auto& obj : scene.objects) h = fnv1a(&obj.noun, sizeof(obj.noun), h);
      std::string out = kFillers[h % 6];
      for (const auto& obj : scene.objects) {
        out += ' ';
        out += nouns()[static_cast<size_t>(obj.noun)].word;
      }
      if ((h >> 8) % 3 == 0) {
        out += ' ';
        out += kFillers[(h >> 16) % 6];
      }
      return out;
    }
  }
  throw ConfigError("scene_to_caption: bad style");
}

std::string render_sentence(const ParsedSentence& sentence) {
  if (const auto* s = std::get_if<SentObject>(&sentence)) {
    const std::string rest = render_item(s->item);
    const std::string article = starts_with_vowel(rest) ? "an" : "a";
    return "there is " + article + " " + rest + ".";
  }
  if (const auto* s = std::get_if<SentRelation>(&sentence)) {
    return "the " + render_item(s->subject) + " is " +
           predicates()[static_cast<size_t>(s->predicate)].phrase + " the " +
           render_item(s->object) + ".";
  }
  if (const auto* s = std::get_if<SentConjunction>(&sentence)) {
    std::string out;
    for (size_t i = 0; i < s->items.size(); ++i) {
      out += i == 0 ? "the " : " and the ";
      out += render_item(s->items[i]);
    }
    out += '.';
    return out;
  }
  const auto& b = std::get<SentBackground>(sentence);
  return std::string("the background is ") +
         backgrounds()[static_cast<size_t>(b.background)].word + ".";
}

std::string ParsedCaption::render() const {
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty()) out += ' ';
    out += render_sentence(s);
  }
  return out;
}

namespace {

// Parses "[size|color|material]* noun" starting at pos; advances pos past the
// noun. Throws when no noun follows.
ParsedItem parse_item(const std::vector<std::string>& w, size_t& pos) {
  ParsedItem item;
  while (pos < w.size()) {
    int v;
    if ((v = size_index(w[pos])) >= 0) {
      item.attrs.emplace_back(AttrKind::kSize, v);
    } else if ((v = color_index(w[pos])) >= 0) {
      item.attrs.emplace_back(AttrKind::kColor, v);
    } else if ((v = material_index(w[pos])) >= 0) {
      item.attrs.emplace_back(AttrKind::kMaterial, v);
    } else {
      break;
    }
    ++pos;
  }
  if (pos >= w.size()) throw Unparseable("expected a noun");
  const int noun = noun_index(w[pos]);
  if (noun < 0) throw Unparseable("unknown noun: " + w[pos]);
  item.noun = noun;
  ++pos;
  return item;
}

ParsedSentence parse_sentence(const std::vector<std::string>& w) {
  if (w.empty()) throw Unparseable("empty sentence");
  size_t pos = 0;
  if (w[0] == "there") {
    if (w.size() < 4 || w[1] != "is" || (w[2] != "a" && w[2] != "an")) {
      throw Unparseable("bad object sentence");
    }
    pos = 3;
    SentObject s{parse_item(w, pos)};
    if (pos != w.size()) throw Unparseable("trailing words in object sentence");
    return s;
  }
  if (w[0] != "the") throw Unparseable("sentence must start with 'there' or 'the'");
  if (w.size() >= 3 && w[1] == "background" && w[2] == "is") {
    if (w.size() != 4) throw Unparseable("bad background sentence");
    const int bg = background_index(w[3]);
    if (bg < 0) throw Unparseable("unknown background: " + w[3]);
    return SentBackground{bg};
  }
  pos = 1;
  ParsedItem first = parse_item(w, pos);
  if (pos < w.size() && w[pos] == "is") {
    ++pos;
    size_t consumed = 0;
    const int pred = match_predicate(w, pos, &consumed);
    if (pred < 0) throw Unparseable("unknown predicate phrase");
    pos += consumed;
    if (pos >= w.size() || w[pos] != "the") throw Unparseable("expected 'the' before object");
    ++pos;
    ParsedItem second = parse_item(w, pos);
    if (pos != w.size()) throw Unparseable("trailing words in relation sentence");
    return SentRelation{first, pred, second};
  }
  SentConjunction conj;
  conj.items.push_back(first);
  while (pos < w.size()) {
    if (w[pos] != "and") throw Unparseable("expected 'and' in conjunction");
    ++pos;
    if (pos >= w.size() || w[pos] != "the") throw Unparseable("expected 'the' after 'and'");
    ++pos;
    conj.items.push_back(parse_item(w, pos));
  }
  return conj;
}

}  // namespace

ParsedCaption parse_caption_full(const std::string& caption) {
  const auto words = split_words(caption);
  if (words.empty()) throw Unparseable("empty caption");
  ParsedCaption out;
  std::vector<std::string> sentence;
  for (const auto& w : words) {
    if (w == ".") {
      out.sentences.push_back(parse_sentence(sentence));
      sentence.clear();
    } else if (w == "," || w == "!" || w == "?" || w == ";" || w == ":") {
      throw Unparseable("punctuation outside grammar: " + w);
    } else {
      sentence.push_back(w);
    }
  }
  if (!sentence.empty()) throw Unparseable("caption must end with '.'");
  if (out.sentences.empty()) throw Unparseable("no sentences");
  return out;
}

ParseResult parse_caption(const std::string& caption) {
  const ParsedCaption full = parse_caption_full(caption);
  ParseResult res;
  auto add_pairs = [&res](const ParsedItem& item) {
    for (const auto& [kind, value] : item.attrs) {
      res.pairs.emplace_back(attr_value_word(kind, value),
                             nouns()[static_cast<size_t>(item.noun)].word);
    }
  };
  for (const auto& s : full.sentences) {
    if (const auto* o = std::get_if<SentObject>(&s)) {
      add_pairs(o->item);
    } else if (const auto* r = std::get_if<SentRelation>(&s)) {
      add_pairs(r->subject);
      add_pairs(r->object);
      res.triples.push_back({nouns()[static_cast<size_t>(r->subject.noun)].word,
                             predicates()[static_cast<size_t>(r->predicate)].phrase,
                             nouns()[static_cast<size_t>(r->object.noun)].word});
    } else if (const auto* c = std::get_if<SentConjunction>(&s)) {
      for (const auto& item : c->items) add_pairs(item);
    }
  }
  return res;
}

std::vector<std::string> split_sentences(const std::string& caption) {
  std::vector<std::string> out;
  std::string cur;
  for (size_t i = 0; i < caption.size(); ++i) {
    cur.push_back(caption[i]);
    const char c = caption[i];
    if (c == '.' || c == '!' || c == '?') {
      const bool boundary = i + 1 >= caption.size() || caption[i + 1] == ' ';
      if (boundary) {
        // Trim leading spaces.
        size_t start = cur.find_first_not_of(' ');
        out.push_back(start == std::string::npos ? cur : cur.substr(start));
        cur.clear();
      }
    }
  }
  size_t start = cur.find_first_not_of(' ');
  if (start != std::string::npos) out.push_back(cur.substr(start));
  return out;
}

std::string sample_sentences(const std::string& caption, Rng& rng) {
  if (caption.empty()) throw std::invalid_argument("sample_sentences: empty caption");
  const auto sentences = split_sentences(caption);
  const int n = static_cast<int>(sentences.size());
  if (n <= 1) return caption;
  const int k = rng.uniform_int(1, std::min(10, n));
  // Partial Fisher-Yates over the index array, then restore original order.
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = rng.uniform_int(i, n - 1);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  idx.resize(static_cast<size_t>(k));
  std::sort(idx.begin(), idx.end());
  std::string out;
  for (int i : idx) {
    if (!out.empty()) out += ' ';
    out += sentences[static_cast<size_t>(i)];
  }
  return out;
}

}  // namespace minclip
