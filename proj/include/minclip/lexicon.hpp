#pragma once

// Closed lexicon behind the synthetic scenes: nouns with coarse classes,
// attribute tables, relation predicates with class-level selection
// restrictions, and background names. All caption grammar and rendering is
// defined over these tables.

#include <array>
#include <string>
#include <vector>

namespace minclip {

enum class NounClass { kAnimate, kFood, kClothing, kThing };

struct NounEntry {
  const char* word;
  NounClass cls;
};

enum class AttrKind { kSize = 0, kColor = 1, kMaterial = 2 };

struct ColorEntry {
  const char* word;
  std::array<std::uint8_t, 3> rgb;
};

struct SizeEntry {
  const char* word;
  int extent;  // body extent in pixels within an 8x8 cell
};

struct MaterialEntry {
  const char* word;
  std::uint8_t level;
};

// Predicate ids; order matters for rendering offsets and reports.
enum Predicate {
  kLeftOf = 0,
  kRightOf,
  kAbove,
  kBelow,
  kOn,
  kIn,
  kHolding,
  kEating,
  kWatching,
  kWearing,
  kNumPredicates
};

struct PredicateEntry {
  const char* phrase;      // as it appears in captions, e.g. "to the left of"
  bool spatial;            // placement-encoded (no junction glyph)
  bool subject_animate;    // selection restriction on the subject
  int object_classes;      // bitmask over NounClass values; 0 = any
};

struct BackgroundEntry {
  const char* word;
  std::array<std::uint8_t, 3> rgb;
};

const std::vector<NounEntry>& nouns();
const std::vector<ColorEntry>& colors();
const std::vector<SizeEntry>& sizes();
const std::vector<MaterialEntry>& materials();
const std::vector<PredicateEntry>& predicates();
const std::vector<BackgroundEntry>& backgrounds();

int noun_index(const std::string& word);        // -1 if unknown
int color_index(const std::string& word);
int size_index(const std::string& word);
int material_index(const std::string& word);
int background_index(const std::string& word);

// Longest predicate phrase matching `words` starting at `pos`; returns the
// predicate id and advances via *consumed, or -1.
int match_predicate(const std::vector<std::string>& words, size_t pos, size_t* consumed);

int attr_value_count(AttrKind kind);
const char* attr_value_word(AttrKind kind, int value);
const char* attr_kind_name(AttrKind kind);
int attr_value_index(AttrKind kind, const std::string& word);

// True when (subject_class, object_class) satisfies the predicate's
// selection restrictions.
bool predicate_allows(int predicate, NounClass subject, NounClass object);

// Does the relation word triple satisfy the lexicon restrictions? Used by the
// blind-baseline probe split ("violates selection restrictions").
bool triple_respects_restrictions(const std::string& subject, int predicate,
                                  const std::string& object);

}  // namespace minclip
