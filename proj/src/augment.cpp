#include "minclip/augment.hpp"

#include <algorithm>
#include <set>

#include "minclip/vocab.hpp"

namespace minclip {

namespace {
const char* kKindNames[] = {
    "swap_relation_args", "swap_attributes", "replace_object", "replace_attribute",
    "replace_relation",   "swap_objects",    "add_object",     "add_attribute",
};
}

const char* negative_kind_name(NegativeKind kind) {
  return kKindNames[static_cast<int>(kind)];
}

NegativeKind negative_kind_from_name(const std::string& name) {
  for (int i = 0; i < static_cast<int>(NegativeKind::kNumKinds); ++i) {
    if (name == kKindNames[i]) return static_cast<NegativeKind>(i);
  }
  throw ConfigError("unknown negative kind: " + name);
}

std::vector<NegativeKind> all_negative_kinds() {
  std::vector<NegativeKind> out;
  for (int i = 0; i < static_cast<int>(NegativeKind::kNumKinds); ++i) {
    out.push_back(static_cast<NegativeKind>(i));
  }
  return out;
}

namespace {

// All noun mention slots in a parsed caption, as (sentence, slot) where slot
// 0 = object/first conjunct chain position, relation subject; 1 = relation
// object; >=2 further conjuncts.
struct ItemRef {
  size_t sentence;
  size_t slot;
};

ParsedItem* item_at(ParsedCaption& cap, const ItemRef& ref) {
  auto& s = cap.sentences[ref.sentence];
  if (auto* o = std::get_if<SentObject>(&s)) return &o->item;
  if (auto* r = std::get_if<SentRelation>(&s)) return ref.slot == 0 ? &r->subject : &r->object;
  if (auto* c = std::get_if<SentConjunction>(&s)) return &c->items[ref.slot];
  return nullptr;
}

std::vector<ItemRef> collect_items(ParsedCaption& cap) {
  std::vector<ItemRef> refs;
  for (size_t i = 0; i < cap.sentences.size(); ++i) {
    auto& s = cap.sentences[i];
    if (std::holds_alternative<SentObject>(s)) {
      refs.push_back({i, 0});
    } else if (std::holds_alternative<SentRelation>(s)) {
      refs.push_back({i, 0});
      refs.push_back({i, 1});
    } else if (auto* c = std::get_if<SentConjunction>(&s)) {
      for (size_t j = 0; j < c->items.size(); ++j) refs.push_back({i, j});
    }
  }
  return refs;
}

std::set<int> nouns_in(ParsedCaption& cap) {
  std::set<int> out;
  for (const auto& ref : collect_items(cap)) out.insert(item_at(cap, ref)->noun);
  return out;
}

std::set<std::string> words_in(const std::string& caption) {
  const auto words = split_words(caption);
  return {words.begin(), words.end()};
}

std::vector<size_t> relation_sentences(const ParsedCaption& cap) {
  std::vector<size_t> out;
  for (size_t i = 0; i < cap.sentences.size(); ++i) {
    if (std::holds_alternative<SentRelation>(cap.sentences[i])) out.push_back(i);
  }
  return out;
}

void insert_attr_sorted(ParsedItem& item, AttrKind kind, int value) {
  auto it = item.attrs.begin();
  while (it != item.attrs.end() && static_cast<int>(it->first) < static_cast<int>(kind)) ++it;
  item.attrs.insert(it, {kind, value});
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(v.size()) - 1))];
}

}  // namespace

NegativePair generate_negative(const std::string& caption, NegativeKind kind, Rng& rng) {
  ParsedCaption cap = parse_caption_full(caption);
  std::string category;

  switch (kind) {
    case NegativeKind::kSwapRelationArgs: {
      const auto rels = relation_sentences(cap);
      if (rels.empty()) throw KindInapplicable("no relation to swap");
      auto& r = std::get<SentRelation>(cap.sentences[pick(rng, rels)]);
      std::swap(r.subject, r.object);
      category = predicates()[static_cast<size_t>(r.predicate)].phrase;
      break;
    }
    case NegativeKind::kSwapAttributes: {
      auto refs = collect_items(cap);
      // Candidate pairs whose attribute lists differ.
      std::vector<std::pair<ItemRef, ItemRef>> cands;
      for (size_t a = 0; a < refs.size(); ++a) {
        for (size_t b = a + 1; b < refs.size(); ++b) {
          const auto* ia = item_at(cap, refs[a]);
          const auto* ib = item_at(cap, refs[b]);
          if (ia->noun != ib->noun && ia->attrs != ib->attrs &&
              (!ia->attrs.empty() || !ib->attrs.empty())) {
            cands.emplace_back(refs[a], refs[b]);
          }
        }
      }
      if (cands.empty()) throw KindInapplicable("no attribute pair to swap");
      const auto& [ra, rb] = pick(rng, cands);
      std::swap(item_at(cap, ra)->attrs, item_at(cap, rb)->attrs);
      category = "attribute";
      break;
    }
    case NegativeKind::kReplaceObject: {
      auto present = nouns_in(cap);
      if (present.empty()) throw KindInapplicable("no nouns");
      std::vector<int> present_v(present.begin(), present.end());
      const int victim = pick(rng, present_v);
      std::vector<int> pool;
      for (size_t i = 0; i < nouns().size(); ++i) {
        if (!present.count(static_cast<int>(i))) pool.push_back(static_cast<int>(i));
      }
      if (pool.empty()) throw KindInapplicable("noun lexicon exhausted");
      const int replacement = pick(rng, pool);
      for (const auto& ref : collect_items(cap)) {
        auto* item = item_at(cap, ref);
        if (item->noun == victim) item->noun = replacement;
      }
      category = "object";
      break;
    }
    case NegativeKind::kReplaceAttribute: {
      auto refs = collect_items(cap);
      std::vector<std::pair<ItemRef, size_t>> slots;
      for (const auto& ref : refs) {
        const auto* item = item_at(cap, ref);
        for (size_t k = 0; k < item->attrs.size(); ++k) slots.emplace_back(ref, k);
      }
      if (slots.empty()) throw KindInapplicable("no attribute to replace");
      const auto& [ref, k] = pick(rng, slots);
      auto* item = item_at(cap, ref);
      auto& [akind, avalue] = item->attrs[k];
      int nv = rng.uniform_int(0, attr_value_count(akind) - 2);
      if (nv >= avalue) ++nv;
      avalue = nv;
      category = attr_kind_name(akind);
      break;
    }
    case NegativeKind::kReplaceRelation: {
      const auto rels = relation_sentences(cap);
      if (rels.empty()) throw KindInapplicable("no relation to replace");
      auto& r = std::get<SentRelation>(cap.sentences[pick(rng, rels)]);
      category = predicates()[static_cast<size_t>(r.predicate)].phrase;
      int np = rng.uniform_int(0, kNumPredicates - 2);
      if (np >= r.predicate) ++np;
      r.predicate = np;
      break;
    }
    case NegativeKind::kSwapObjects: {
      auto present = nouns_in(cap);
      if (present.size() < 2) throw KindInapplicable("need two nouns to swap");
      std::vector<int> v(present.begin(), present.end());
      const int ai = rng.uniform_int(0, static_cast<int>(v.size()) - 1);
      int bi = rng.uniform_int(0, static_cast<int>(v.size()) - 2);
      if (bi >= ai) ++bi;
      const int a = v[static_cast<size_t>(ai)], b = v[static_cast<size_t>(bi)];
      for (const auto& ref : collect_items(cap)) {
        auto* item = item_at(cap, ref);
        if (item->noun == a) {
          item->noun = b;
        } else if (item->noun == b) {
          item->noun = a;
        }
      }
      category = "object";
      break;
    }
    case NegativeKind::kAddObject: {
      auto present = nouns_in(cap);
      std::vector<int> pool;
      for (size_t i = 0; i < nouns().size(); ++i) {
        if (!present.count(static_cast<int>(i))) pool.push_back(static_cast<int>(i));
      }
      if (pool.empty()) throw KindInapplicable("noun lexicon exhausted");
      ParsedItem fresh;
      fresh.noun = pick(rng, pool);
      // The fresh mention carries a color so the negative asserts a new
      // attribute pair, not just a bare noun.
      const auto caption_words = words_in(caption);
      std::vector<int> color_pool;
      for (int v = 0; v < attr_value_count(AttrKind::kColor); ++v) {
        if (!caption_words.count(attr_value_word(AttrKind::kColor, v))) color_pool.push_back(v);
      }
      if (color_pool.empty()) {
        for (int v = 0; v < attr_value_count(AttrKind::kColor); ++v) color_pool.push_back(v);
      }
      fresh.attrs.emplace_back(AttrKind::kColor, pick(rng, color_pool));
      bool appended = false;
      for (auto& s : cap.sentences) {
        if (auto* c = std::get_if<SentConjunction>(&s)) {
          c->items.push_back(fresh);
          appended = true;
          break;
        }
      }
      if (!appended) {
        // Insert after the last object sentence, or append a fresh mention.
        size_t at = 0;
        bool found = false;
        for (size_t i = 0; i < cap.sentences.size(); ++i) {
          if (std::holds_alternative<SentObject>(cap.sentences[i])) {
            at = i + 1;
            found = true;
          }
        }
        if (found) {
          cap.sentences.insert(cap.sentences.begin() + static_cast<std::ptrdiff_t>(at),
                               SentObject{fresh});
        } else {
          cap.sentences.push_back(SentConjunction{{fresh}});
        }
      }
      category = "object";
      break;
    }
    case NegativeKind::kAddAttribute: {
      const auto caption_words = words_in(caption);
      auto refs = collect_items(cap);
      struct Slot {
        ItemRef ref;
        AttrKind kind;
        std::vector<int> values;
      };
      std::vector<Slot> slots;
      for (const auto& ref : refs) {
        const auto* item = item_at(cap, ref);
        for (AttrKind kind : {AttrKind::kSize, AttrKind::kColor, AttrKind::kMaterial}) {
          bool has = false;
          for (const auto& a : item->attrs) {
            if (a.first == kind) has = true;
          }
          if (has) continue;
          std::vector<int> values;
          for (int v = 0; v < attr_value_count(kind); ++v) {
            if (!caption_words.count(attr_value_word(kind, v))) values.push_back(v);
          }
          if (!values.empty()) slots.push_back({ref, kind, values});
        }
      }
      if (slots.empty()) throw KindInapplicable("no attribute slot to fill");
      const auto& slot = pick(rng, slots);
      insert_attr_sorted(*item_at(cap, slot.ref), slot.kind, pick(rng, slot.values));
      category = attr_kind_name(slot.kind);
      break;
    }
    default:
      throw ConfigError("generate_negative: bad kind");
  }

  NegativePair pair;
  pair.positive = caption;
  pair.negative = cap.render();
  pair.kind = kind;
  pair.category = category;
  if (pair.negative == pair.positive) {
    throw KindInapplicable("perturbation produced an identical caption");
  }
  return pair;
}

NegativeCorpusReport build_negative_corpus(const std::vector<std::string>& captions,
                                           const std::vector<NegativeKind>& kinds, int per_record,
                                           Rng& rng, std::vector<NegativeCorpusEntry>* out) {
  NegativeCorpusReport report;
  if (out) out->assign(captions.size(), {});
  size_t cursor = 0;
  for (size_t i = 0; i < captions.size(); ++i) {
    try {
      parse_caption_full(captions[i]);
    } catch (const Unparseable&) {
      ++report.skipped_unparseable;
      continue;
    }
    ++report.processed;
    for (int n = 0; n < per_record; ++n) {
      // Cycle kinds; fall through to the next applicable one.
      for (size_t attempt = 0; attempt < kinds.size(); ++attempt) {
        const NegativeKind kind = kinds[(cursor + attempt) % kinds.size()];
        try {
          NegativePair pair = generate_negative(captions[i], kind, rng);
          if (out) (*out)[i].negatives.emplace_back(kind, pair.negative);
          ++report.per_kind[negative_kind_name(kind)];
          cursor = (cursor + attempt + 1) % kinds.size();
          break;
        } catch (const KindInapplicable&) {
          if (attempt + 1 == kinds.size()) cursor = (cursor + 1) % kinds.size();
        }
      }
    }
  }
  return report;
}

}  // namespace minclip
