#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "minclip/caption.hpp"

namespace minclip {

struct KindInapplicable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class NegativeKind {
  kSwapRelationArgs = 0,
  kSwapAttributes,
  kReplaceObject,
  kReplaceAttribute,
  kReplaceRelation,
  kSwapObjects,
  kAddObject,
  kAddAttribute,
  kNumKinds
};

const char* negative_kind_name(NegativeKind kind);
NegativeKind negative_kind_from_name(const std::string& name);
std::vector<NegativeKind> all_negative_kinds();

struct NegativePair {
  std::string positive;
  std::string negative;
  NegativeKind kind;
  std::string category;  // predicate phrase, attribute kind, or "object"
};

// Grammar-level perturbation of a parseable caption. Throws KindInapplicable
// when the caption offers no target for the kind, Unparseable for free text.
NegativePair generate_negative(const std::string& caption, NegativeKind kind, Rng& rng);

struct NegativeCorpusReport {
  int processed = 0;
  int skipped_unparseable = 0;
  std::map<std::string, int> per_kind;
};

struct NegativeCorpusEntry {
  std::vector<std::pair<NegativeKind, std::string>> negatives;
};

NegativeCorpusReport build_negative_corpus(const std::vector<std::string>& captions,
                                           const std::vector<NegativeKind>& kinds, int per_record,
                                           Rng& rng, std::vector<NegativeCorpusEntry>* out);

}  // namespace minclip
