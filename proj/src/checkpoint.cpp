#include "minclip/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian float32");

namespace minclip {

ordered_json model_config_to_json(const ModelConfig& c) {
  ordered_json j;
  j["embed_dim"] = c.embed_dim;
  j["heads"] = c.heads;
  j["hidden"] = c.hidden;
  j["img_layers"] = c.img_layers;
  j["txt_layers"] = c.txt_layers;
  j["patch_grid"] = c.patch_grid;
  j["patch_dim"] = c.patch_dim;
  j["max_seq_len"] = c.max_seq_len;
  j["vocab_size"] = c.vocab_size;
  j["layernorm_eps"] = c.layernorm_eps;
  return j;
}

ModelConfig model_config_from_json(const ordered_json& j) {
  ModelConfig c;
  c.embed_dim = j.at("embed_dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.img_layers = j.at("img_layers").get<int>();
  c.txt_layers = j.at("txt_layers").get<int>();
  c.patch_grid = j.at("patch_grid").get<int>();
  c.patch_dim = j.at("patch_dim").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.layernorm_eps = j.at("layernorm_eps").get<double>();
  return c;
}

void save_checkpoint(const std::string& path, TwoTowerModel& model, const ordered_json& extra) {
  ordered_json header;
  header["format_version"] = 1;
  header["model_config"] = model_config_to_json(model.config);
  header["text_mask_kinds"] = ordered_json::array();
  for (const MaskKind k : model.text_mask_kinds) {
    header["text_mask_kinds"].push_back(k == MaskKind::kCausal ? "causal" : "bidirectional");
  }
  header["frozen"] = ordered_json::array();
  for (const auto& name : model.frozen) header["frozen"].push_back(name);
  if (!extra.is_null() && !extra.empty()) header["extra"] = extra;

  ordered_json manifest = ordered_json::array();
  std::vector<const std::vector<float>*> blobs;
  std::int64_t offset = 0;
  model.for_each_param([&](const std::string& name, Tensor& t) {
    ordered_json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["offset"] = offset;
    manifest.push_back(entry);
    offset += t.numel();
    blobs.push_back(&t.data());
  });
  header["params"] = manifest;
  header["total_floats"] = offset;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  const std::string head = header.dump();
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.put('\0');
  for (const auto* blob : blobs) {
    out.write(reinterpret_cast<const char*>(blob->data()),
              static_cast<std::streamsize>(blob->size() * sizeof(float)));
  }
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

namespace {

ordered_json read_header_stream(std::ifstream& in, const std::string& path) {
  std::string head;
  char c;
  while (in.get(c)) {
    if (c == '\0') break;
    head.push_back(c);
  }
  if (head.empty()) throw IoError("checkpoint header missing: " + path);
  return ordered_json::parse(head);
}

}  // namespace

ordered_json read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_checkpoint_header: cannot open " + path);
  return read_header_stream(in, path);
}

ordered_json load_checkpoint(const std::string& path, TwoTowerModel& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  const ordered_json header = read_header_stream(in, path);

  const std::int64_t total = header.at("total_floats").get<std::int64_t>();
  std::vector<float> blob(static_cast<size_t>(total));
  in.read(reinterpret_cast<char*>(blob.data()),
          static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!in) throw IoError("load_checkpoint: truncated blob in " + path);

  std::map<std::string, std::pair<std::int64_t, Shape>> manifest;
  for (const auto& entry : header.at("params")) {
    manifest[entry.at("name").get<std::string>()] = {
        entry.at("offset").get<std::int64_t>(), entry.at("shape").get<Shape>()};
  }
  model.for_each_param([&](const std::string& name, Tensor& t) {
    auto it = manifest.find(name);
    if (it == manifest.end()) throw IoError("load_checkpoint: missing param " + name);
    if (it->second.second != t.shape()) {
      throw IoError("load_checkpoint: shape mismatch for " + name + ": file " +
                    shape_str(it->second.second) + " vs model " + shape_str(t.shape()));
    }
    std::memcpy(t.data().data(), blob.data() + it->second.first, t.data().size() * sizeof(float));
  });

  model.text_mask_kinds.clear();
  for (const auto& k : header.at("text_mask_kinds")) {
    model.text_mask_kinds.push_back(k.get<std::string>() == "causal" ? MaskKind::kCausal
                                                                     : MaskKind::kBidirectional);
  }
  model.frozen.clear();
  for (const auto& name : header.at("frozen")) model.frozen.insert(name.get<std::string>());
  model.refresh_requires_grad();
  return header;
}

TwoTowerModel load_checkpoint_model(const std::string& path, ordered_json* header_out) {
  const ordered_json header = read_checkpoint_header(path);
  const ModelConfig config = model_config_from_json(header.at("model_config"));
  TwoTowerModel model = init_model(config, /*seed=*/0, /*log_temperature_init=*/0.0);
  const ordered_json full = load_checkpoint(path, model);
  if (header_out) *header_out = full;
  return model;
}

}  // namespace minclip
