#include "minclip/lexicon.hpp"

#include "minclip/vocab.hpp"

namespace minclip {

namespace {
constexpr int kAnyClass = 0;
constexpr int cls_bit(NounClass c) { return 1 << static_cast<int>(c); }
}  // namespace

const std::vector<NounEntry>& nouns() {
  static const std::vector<NounEntry> table = {
      {"horse", NounClass::kAnimate},  {"dog", NounClass::kAnimate},
      {"cat", NounClass::kAnimate},    {"bird", NounClass::kAnimate},
      {"cow", NounClass::kAnimate},    {"monkey", NounClass::kAnimate},
      {"rabbit", NounClass::kAnimate}, {"child", NounClass::kAnimate},
      {"woman", NounClass::kAnimate},  {"man", NounClass::kAnimate},
      {"grass", NounClass::kFood},     {"apple", NounClass::kFood},
      {"banana", NounClass::kFood},    {"cake", NounClass::kFood},
      {"bread", NounClass::kFood},     {"carrot", NounClass::kFood},
      {"hat", NounClass::kClothing},   {"scarf", NounClass::kClothing},
      {"jacket", NounClass::kClothing},{"boot", NounClass::kClothing},
      {"cube", NounClass::kThing},     {"sphere", NounClass::kThing},
      {"book", NounClass::kThing},     {"cup", NounClass::kThing},
      {"chair", NounClass::kThing},    {"table", NounClass::kThing},
      {"car", NounClass::kThing},      {"ball", NounClass::kThing},
      {"lamp", NounClass::kThing},     {"box", NounClass::kThing},
  };
  return table;
}

const std::vector<ColorEntry>& colors() {
  static const std::vector<ColorEntry> table = {
      {"red", {220, 40, 40}},    {"blue", {40, 40, 220}},   {"green", {40, 200, 40}},
      {"yellow", {230, 230, 40}},{"orange", {240, 150, 40}},{"purple", {160, 40, 220}},
      {"white", {240, 240, 240}},{"black", {70, 70, 70}},
  };
  return table;
}

const std::vector<SizeEntry>& sizes() {
  static const std::vector<SizeEntry> table = {
      {"tiny", 3}, {"small", 4}, {"large", 8},  // default (no size attribute) is 6
  };
  return table;
}

const std::vector<MaterialEntry>& materials() {
  static const std::vector<MaterialEntry> table = {
      {"wooden", 40}, {"metal", 80}, {"plastic", 120}, {"glass", 160}, {"stone", 200},
  };
  return table;
}

const std::vector<PredicateEntry>& predicates() {
  static const std::vector<PredicateEntry> table = {
      {"to the left of", true, false, kAnyClass},
      {"to the right of", true, false, kAnyClass},
      {"above", true, false, kAnyClass},
      {"below", true, false, kAnyClass},
      {"on", true, false, kAnyClass},
      {"in", true, false, kAnyClass},
      {"holding", false, true,
       cls_bit(NounClass::kThing) | cls_bit(NounClass::kFood) | cls_bit(NounClass::kClothing)},
      {"eating", false, true, cls_bit(NounClass::kFood)},
      {"watching", false, true, kAnyClass},
      {"wearing", false, true, cls_bit(NounClass::kClothing)},
  };
  return table;
}

const std::vector<BackgroundEntry>& backgrounds() {
  static const std::vector<BackgroundEntry> table = {
      {"plain", {12, 12, 12}},
      {"dark", {0, 0, 0}},
      {"bright", {60, 60, 60}},
      {"misty", {30, 30, 45}},
  };
  return table;
}

namespace {
template <typename T>
int find_word(const std::vector<T>& table, const std::string& word) {
  for (size_t i = 0; i < table.size(); ++i) {
    if (word == table[i].word) return static_cast<int>(i);
  }
  return -1;
}
}  // namespace

int noun_index(const std::string& w) { return find_word(nouns(), w); }
int color_index(const std::string& w) { return find_word(colors(), w); }
int size_index(const std::string& w) { return find_word(sizes(), w); }
int material_index(const std::string& w) { return find_word(materials(), w); }
int background_index(const std::string& w) { return find_word(backgrounds(), w); }

int match_predicate(const std::vector<std::string>& words, size_t pos, size_t* consumed) {
  int best = -1;
  size_t best_len = 0;
  for (size_t p = 0; p < predicates().size(); ++p) {
    const auto phrase_words = split_words(predicates()[p].phrase);
    if (pos + phrase_words.size() > words.size()) continue;
    bool ok = true;
    for (size_t i = 0; i < phrase_words.size(); ++i) {
      if (words[pos + i] != phrase_words[i]) {
        ok = false;
        break;
      }
    }
    if (ok && phrase_words.size() > best_len) {
      best = static_cast<int>(p);
      best_len = phrase_words.size();
    }
  }
  if (best >= 0 && consumed) *consumed = best_len;
  return best;
}

int attr_value_count(AttrKind kind) {
  switch (kind) {
    case AttrKind::kSize: return static_cast<int>(sizes().size());
    case AttrKind::kColor: return static_cast<int>(colors().size());
    case AttrKind::kMaterial: return static_cast<int>(materials().size());
  }
  return 0;
}

const char* attr_value_word(AttrKind kind, int value) {
  switch (kind) {
    case AttrKind::kSize: return sizes()[static_cast<size_t>(value)].word;
    case AttrKind::kColor: return colors()[static_cast<size_t>(value)].word;
    case AttrKind::kMaterial: return materials()[static_cast<size_t>(value)].word;
  }
  return "";
}

const char* attr_kind_name(AttrKind kind) {
  switch (kind) {
    case AttrKind::kSize: return "size";
    case AttrKind::kColor: return "color";
    case AttrKind::kMaterial: return "material";
  }
  return "";
}

int attr_value_index(AttrKind kind, const std::string& word) {
  switch (kind) {
    case AttrKind::kSize: return size_index(word);
    case AttrKind::kColor: return color_index(word);
    case AttrKind::kMaterial: return material_index(word);
  }
  return -1;
}

bool predicate_allows(int predicate, NounClass subject, NounClass object) {
  const auto& p = predicates()[static_cast<size_t>(predicate)];
  if (p.subject_animate && subject != NounClass::kAnimate) return false;
  if (p.object_classes != kAnyClass && !(p.object_classes & cls_bit(object))) return false;
  return true;
}

bool triple_respects_restrictions(const std::string& subject, int predicate,
                                  const std::string& object) {
  const int s = noun_index(subject);
  const int o = noun_index(object);
  if (s < 0 || o < 0) return false;
  return predicate_allows(predicate, nouns()[static_cast<size_t>(s)].cls,
                          nouns()[static_cast<size_t>(o)].cls);
}

}  // namespace minclip
