#pragma once

#include <string>

#include "minclip/model.hpp"

#include "json.hpp"

namespace minclip {

using ordered_json = nlohmann::ordered_json;

ordered_json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const ordered_json& j);

// File layout: one JSON header (format version, config echo, mask kinds,
// freeze set, parameter manifest with offsets), a NUL separator, then the raw
// little-endian float32 blob. Round trips are byte-exact.
void save_checkpoint(const std::string& path, TwoTowerModel& model,
                     const ordered_json& extra = {});

// Loads parameters by name; shapes must match the model exactly. Restores
// mask kinds and the freeze set.
ordered_json load_checkpoint(const std::string& path, TwoTowerModel& model);

ordered_json read_checkpoint_header(const std::string& path);

// Builds a model from the header's config echo, then loads.
TwoTowerModel load_checkpoint_model(const std::string& path, ordered_json* header_out = nullptr);

}  // namespace minclip
