#include "minclip/dataset.hpp"

#include <fstream>
#include <set>

#include "minclip/common.hpp"

namespace minclip {

ordered_json scene_to_json(const Scene& scene) {
  ordered_json j;
  ordered_json objs = ordered_json::array();
  for (const auto& obj : scene.objects) {
    ordered_json attrs = ordered_json::array();
    for (const auto& [kind, value] : obj.attrs) {
      attrs.push_back({attr_kind_name(kind), attr_value_word(kind, value)});
    }
    objs.push_back({{"noun", nouns()[static_cast<size_t>(obj.noun)].word}, {"attrs", attrs}});
  }
  j["objects"] = objs;
  ordered_json rels = ordered_json::array();
  for (const auto& rel : scene.relations) {
    rels.push_back({rel.subject, predicates()[static_cast<size_t>(rel.predicate)].phrase,
                    rel.object});
  }
  j["relations"] = rels;
  j["background"] = backgrounds()[static_cast<size_t>(scene.background)].word;
  return j;
}

namespace {

AttrKind attr_kind_from_name(const std::string& name) {
  if (name == "size") return AttrKind::kSize;
  if (name == "color") return AttrKind::kColor;
  if (name == "material") return AttrKind::kMaterial;
  throw IoError("bad attribute kind: " + name);
}

int predicate_from_phrase(const std::string& phrase) {
  for (size_t i = 0; i < predicates().size(); ++i) {
    if (phrase == predicates()[i].phrase) return static_cast<int>(i);
  }
  throw IoError("bad predicate phrase: " + phrase);
}

}  // namespace

Scene scene_from_json(const ordered_json& j) {
  Scene scene;
  for (const auto& obj : j.at("objects")) {
    SceneObject o;
    o.noun = noun_index(obj.at("noun").get<std::string>());
    if (o.noun < 0) throw IoError("bad noun in scene json");
    for (const auto& attr : obj.at("attrs")) {
      const AttrKind kind = attr_kind_from_name(attr.at(0).get<std::string>());
      const int value = attr_value_index(kind, attr.at(1).get<std::string>());
      if (value < 0) throw IoError("bad attribute value in scene json");
      o.attrs.emplace_back(kind, value);
    }
    scene.objects.push_back(std::move(o));
  }
  for (const auto& rel : j.at("relations")) {
    scene.relations.push_back({rel.at(0).get<int>(),
                               predicate_from_phrase(rel.at(1).get<std::string>()),
                               rel.at(2).get<int>()});
  }
  scene.background = background_index(j.at("background").get<std::string>());
  if (scene.background < 0) throw IoError("bad background in scene json");
  validate_scene(scene);
  return scene;
}

ordered_json record_to_json(const CaptionRecord& record) {
  ordered_json j;
  j["id"] = record.id;
  j["image_ref"] = record.image_ref;
  j["alt_text"] = record.alt_text;
  j["page_title"] = record.page_title;
  j["caption"] = record.caption;
  j["caption_style"] = record.caption_style;
  ordered_json negs = ordered_json::array();
  for (const auto& [kind, text] : record.negatives) negs.push_back({kind, text});
  j["negatives"] = negs;
  if (record.scene) j["scene"] = scene_to_json(*record.scene);
  return j;
}

CaptionRecord record_from_json(const ordered_json& j) {
  CaptionRecord r;
  r.id = j.at("id").get<std::string>();
  r.image_ref = j.at("image_ref").get<std::string>();
  r.alt_text = j.at("alt_text").get<std::string>();
  r.page_title = j.at("page_title").get<std::string>();
  r.caption = j.at("caption").get<std::string>();
  r.caption_style = j.at("caption_style").get<std::string>();
  if (r.caption_style == "alt_text" && r.caption != r.alt_text) {
    throw IoError("record " + r.id + ": alt_text style requires caption == alt_text");
  }
  for (const auto& neg : j.at("negatives")) {
    r.negatives.emplace_back(neg.at(0).get<std::string>(), neg.at(1).get<std::string>());
  }
  if (j.contains("scene")) r.scene = scene_from_json(j.at("scene"));
  return r;
}

void write_records_jsonl(const std::string& path, const std::vector<CaptionRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_records_jsonl: cannot open " + path);
  for (const auto& r : records) {
    out << record_to_json(r).dump() << '\n';
  }
  if (!out) throw IoError("write_records_jsonl: write failed: " + path);
}

std::vector<CaptionRecord> read_records_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_records_jsonl: cannot open " + path);
  std::vector<CaptionRecord> out;
  std::string line;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json(ordered_json::parse(line)));
    if (!ids.insert(out.back().id).second) {
      throw IoError("read_records_jsonl: duplicate record id " + out.back().id);
    }
  }
  return out;
}

void write_patch_file(const std::string& path, const std::vector<Canvas>& canvases) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_patch_file: cannot open " + path);
  const int side = canvases.empty() ? 32 : canvases[0].side;
  ordered_json header;
  header["count"] = canvases.size();
  header["side"] = side;
  header["channels"] = 3;
  header["encoding"] = "u8";
  out << header.dump() << '\n';
  for (const auto& canvas : canvases) {
    if (canvas.side != side) throw IoError("write_patch_file: inconsistent canvas sides");
    out.write(reinterpret_cast<const char*>(canvas.rgb.data()),
              static_cast<std::streamsize>(canvas.rgb.size()));
  }
  if (!out) throw IoError("write_patch_file: write failed: " + path);
}

std::vector<Canvas> read_patch_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_patch_file: cannot open " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) throw IoError("read_patch_file: missing header");
  const auto header = ordered_json::parse(header_line);
  const size_t count = header.at("count").get<size_t>();
  const int side = header.at("side").get<int>();
  const size_t bytes = static_cast<size_t>(side) * side * 3;
  std::vector<Canvas> out(count);
  for (auto& canvas : out) {
    canvas.side = side;
    canvas.rgb.resize(bytes);
    in.read(reinterpret_cast<char*>(canvas.rgb.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("read_patch_file: truncated: " + path);
  }
  return out;
}

std::pair<std::string, int> parse_image_ref(const std::string& image_ref) {
  const size_t hash = image_ref.rfind('#');
  if (hash == std::string::npos) throw IoError("parse_image_ref: missing #index: " + image_ref);
  return {image_ref.substr(0, hash), std::stoi(image_ref.substr(hash + 1))};
}

void write_probes_jsonl(const std::string& path, const std::vector<ProbeSpec>& probes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_probes_jsonl: cannot open " + path);
  for (const auto& p : probes) {
    ordered_json j;
    j["id"] = p.id;
    j["image_index"] = p.image_index;
    j["kind"] = negative_kind_name(p.kind);
    j["category"] = p.category;
    j["positive"] = p.positive;
    j["negative"] = p.negative;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write_probes_jsonl: write failed: " + path);
}

std::vector<ProbeSpec> read_probes_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_probes_jsonl: cannot open " + path);
  std::vector<ProbeSpec> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = ordered_json::parse(line);
    ProbeSpec p;
    p.id = j.at("id").get<std::string>();
    p.image_index = j.at("image_index").get<int>();
    p.kind = negative_kind_from_name(j.at("kind").get<std::string>());
    p.category = j.at("category").get<std::string>();
    p.positive = j.at("positive").get<std::string>();
    p.negative = j.at("negative").get<std::string>();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace minclip
