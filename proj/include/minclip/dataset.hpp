#pragma once

#include <optional>
#include <string>
#include <vector>

#include "minclip/augment.hpp"
#include "minclip/caption.hpp"
#include "minclip/scene.hpp"

#include "json.hpp"

namespace minclip {

using ordered_json = nlohmann::ordered_json;

// One training example as persisted: JSONL, one record per line.
struct CaptionRecord {
  std::string id;
  std::string image_ref;  // "file.bin#index" or empty when scene is inline
  std::string alt_text;
  std::string page_title;
  std::string caption;
  std::string caption_style;  // alt_text | default | short | ungrounded
  std::vector<std::pair<std::string, std::string>> negatives;  // (kind, text)
  std::optional<Scene> scene;
};

ordered_json scene_to_json(const Scene& scene);
Scene scene_from_json(const ordered_json& j);

ordered_json record_to_json(const CaptionRecord& record);
CaptionRecord record_from_json(const ordered_json& j);

void write_records_jsonl(const std::string& path, const std::vector<CaptionRecord>& records);
std::vector<CaptionRecord> read_records_jsonl(const std::string& path);

// Patch file: JSON header line {count, side, channels, encoding:"u8"} then raw
// canvas bytes back to back.
void write_patch_file(const std::string& path, const std::vector<Canvas>& canvases);
std::vector<Canvas> read_patch_file(const std::string& path);

// Parses "file.bin#123".
std::pair<std::string, int> parse_image_ref(const std::string& image_ref);

// Two-alternative probe as persisted; image_index points into the eval patch
// file / scene list.
struct ProbeSpec {
  std::string id;
  int image_index = 0;
  NegativeKind kind = NegativeKind::kSwapRelationArgs;
  std::string category;
  std::string positive;
  std::string negative;
};

void write_probes_jsonl(const std::string& path, const std::vector<ProbeSpec>& probes);
std::vector<ProbeSpec> read_probes_jsonl(const std::string& path);

}  // namespace minclip
