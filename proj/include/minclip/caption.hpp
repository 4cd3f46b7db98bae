#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

#include "minclip/scene.hpp"

namespace minclip {

struct Unparseable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class CaptionStyle { kAltText, kDefault, kShort };

const char* caption_style_name(CaptionStyle style);
CaptionStyle caption_style_from_name(const std::string& name);

std::string scene_to_caption(const Scene& scene, CaptionStyle style);

// One noun mention with optional attribute words, e.g. "small red wooden cube".
struct ParsedItem {
  std::vector<std::pair<AttrKind, int>> attrs;  // in surface order: size, color, material
  int noun = 0;
};

struct SentObject {
  ParsedItem item;
};  // "there is a small red cube."

struct SentRelation {
  ParsedItem subject;
  int predicate = 0;
  ParsedItem object;
};  // "the horse is eating the grass."

struct SentConjunction {
  std::vector<ParsedItem> items;
};  // "the paved road and the white house."

struct SentBackground {
  int background = 0;
};  // "the background is dark."

using ParsedSentence = std::variant<SentObject, SentRelation, SentConjunction, SentBackground>;

// Structured form of a caption in the synthetic grammar. render() is the
// exact inverse of parsing on canonical text.
struct ParsedCaption {
  std::vector<ParsedSentence> sentences;
  std::string render() const;
};

ParsedCaption parse_caption_full(const std::string& caption);  // throws Unparseable

std::string render_item(const ParsedItem& item);
std::string render_sentence(const ParsedSentence& sentence);

// Flat view used by callers that only need the asserted facts.
struct ParseResult {
  std::vector<std::array<std::string, 3>> triples;             // subject, predicate, object
  std::vector<std::pair<std::string, std::string>> pairs;      // attribute word, noun word
};

ParseResult parse_caption(const std::string& caption);  // throws Unparseable

// k ~ Uniform{1..min(10,n)} sentences chosen without replacement, original
// order preserved.
std::string sample_sentences(const std::string& caption, Rng& rng);

std::vector<std::string> split_sentences(const std::string& caption);

}  // namespace minclip
