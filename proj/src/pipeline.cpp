#include "minclip/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "minclip/checkpoint.hpp"

namespace minclip {

namespace fs = std::filesystem;

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- config ------------------------------------------------------------------

ordered_json run_config_to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["data_dir"] = c.data_dir;
  j["out_dir"] = c.out_dir;
  j["prompt_dir"] = c.prompt_dir;
  j["dataset"] = {{"train_scenes", c.dataset.train_scenes},
                  {"eval_scenes", c.dataset.eval_scenes},
                  {"probes_per_kind", c.dataset.probes_per_kind},
                  {"negatives_per_record", c.dataset.negatives_per_record}};
  j["model"] = model_config_to_json(c.model);
  j["train"] = {{"steps_main", c.train.steps_main},
                {"steps_finetune", c.train.steps_finetune},
                {"batch_main", c.train.batch_main},
                {"batch_finetune", c.train.batch_finetune},
                {"warmup_steps", c.train.warmup_steps},
                {"peak_lr", c.train.peak_lr},
                {"adam_beta1", c.train.adam_beta1},
                {"adam_beta2", c.train.adam_beta2},
                {"adam_eps", c.train.adam_eps},
                {"k_unfrozen", c.train.k_unfrozen},
                {"temperature_init", c.train.temperature_init}};
  j["pretrain"] = {{"steps", c.pretrain.steps},
                   {"batch", c.pretrain.batch},
                   {"warmup_steps", c.pretrain.warmup_steps},
                   {"peak_lr", c.pretrain.peak_lr}};
  j["caption_style"] = c.caption_style;
  j["text_tower_mode"] = c.text_tower_mode;
  j["sentence_sampling"] = c.sentence_sampling;
  j["hard_negative_finetune"] = c.hard_negative_finetune;
  j["eval_suites"] = c.eval_suites;
  j["lm"] = {{"url", c.lm.url},
             {"max_inflight", c.lm.max_inflight},
             {"timeout_seconds", c.lm.timeout_seconds}};
  if (c.lm.temperature) j["lm"]["temperature"] = *c.lm.temperature;
  if (c.lm.max_tokens) j["lm"]["max_tokens"] = *c.lm.max_tokens;
  return j;
}

namespace {
template <typename T>
void maybe(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}
}  // namespace

RunConfig run_config_from_json(const ordered_json& j) {
  RunConfig c;
  maybe(j, "seed", c.seed);
  maybe(j, "data_dir", c.data_dir);
  maybe(j, "out_dir", c.out_dir);
  maybe(j, "prompt_dir", c.prompt_dir);
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    maybe(d, "train_scenes", c.dataset.train_scenes);
    maybe(d, "eval_scenes", c.dataset.eval_scenes);
    maybe(d, "probes_per_kind", c.dataset.probes_per_kind);
    maybe(d, "negatives_per_record", c.dataset.negatives_per_record);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    maybe(m, "embed_dim", c.model.embed_dim);
    maybe(m, "heads", c.model.heads);
    maybe(m, "hidden", c.model.hidden);
    maybe(m, "img_layers", c.model.img_layers);
    maybe(m, "txt_layers", c.model.txt_layers);
    maybe(m, "patch_grid", c.model.patch_grid);
    maybe(m, "patch_dim", c.model.patch_dim);
    maybe(m, "max_seq_len", c.model.max_seq_len);
    maybe(m, "vocab_size", c.model.vocab_size);
    maybe(m, "layernorm_eps", c.model.layernorm_eps);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    maybe(t, "steps_main", c.train.steps_main);
    maybe(t, "steps_finetune", c.train.steps_finetune);
    maybe(t, "batch_main", c.train.batch_main);
    maybe(t, "batch_finetune", c.train.batch_finetune);
    maybe(t, "warmup_steps", c.train.warmup_steps);
    maybe(t, "peak_lr", c.train.peak_lr);
    maybe(t, "adam_beta1", c.train.adam_beta1);
    maybe(t, "adam_beta2", c.train.adam_beta2);
    maybe(t, "adam_eps", c.train.adam_eps);
    maybe(t, "k_unfrozen", c.train.k_unfrozen);
    maybe(t, "temperature_init", c.train.temperature_init);
  }
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    maybe(p, "steps", c.pretrain.steps);
    maybe(p, "batch", c.pretrain.batch);
    maybe(p, "warmup_steps", c.pretrain.warmup_steps);
    maybe(p, "peak_lr", c.pretrain.peak_lr);
  }
  maybe(j, "caption_style", c.caption_style);
  maybe(j, "text_tower_mode", c.text_tower_mode);
  maybe(j, "sentence_sampling", c.sentence_sampling);
  maybe(j, "hard_negative_finetune", c.hard_negative_finetune);
  maybe(j, "eval_suites", c.eval_suites);
  if (j.contains("lm")) {
    const auto& l = j.at("lm");
    maybe(l, "url", c.lm.url);
    maybe(l, "max_inflight", c.lm.max_inflight);
    maybe(l, "timeout_seconds", c.lm.timeout_seconds);
    if (l.contains("temperature")) c.lm.temperature = l.at("temperature").get<double>();
    if (l.contains("max_tokens")) c.lm.max_tokens = l.at("max_tokens").get<int>();
  }
  c.train.seed = c.seed;
  c.pretrain.seed = c.seed;
  return c;
}

RunConfig load_run_config(const std::string& path) {
  const auto j = ordered_json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path);
  RunConfig c = run_config_from_json(j);
  validate_run_config(c);
  return c;
}

void validate_run_config(const RunConfig& c) {
  validate_train_config(c.train);
  caption_style_from_name(c.caption_style);
  if (c.text_tower_mode != "scratch" && c.text_tower_mode != "pretrained") {
    throw ConfigError("text_tower_mode must be scratch or pretrained");
  }
  if (c.dataset.train_scenes <= 0 || c.dataset.eval_scenes <= 0 ||
      c.dataset.probes_per_kind < 0 || c.dataset.negatives_per_record < 0) {
    throw ConfigError("dataset sizes must be positive");
  }
  if (c.train.k_unfrozen < 0 || c.train.k_unfrozen > c.model.txt_layers) {
    throw ConfigError("k_unfrozen out of range");
  }
  if (32 % c.model.patch_grid != 0) {
    throw ConfigError("patch_grid must divide the 32px canvas side");
  }
  const int px = 32 / c.model.patch_grid;
  if (c.model.patch_dim != px * px * 3) {
    throw ConfigError("patch_dim must equal (32/patch_grid)^2 * 3");
  }
}

// --- synth data ----------------------------------------------------------------

std::vector<std::string> captions_of(const std::vector<CaptionRecord>& records) {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.caption);
  return out;
}

namespace {

std::vector<Scene> generate_scenes(Rng rng, int count) {
  std::vector<Scene> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(generate_scene(rng));
  return out;
}

std::vector<CaptionRecord> make_records(const std::vector<Scene>& scenes,
                                        const std::string& split, CaptionStyle style,
                                        const std::string& patch_file) {
  std::vector<CaptionRecord> out;
  out.reserve(scenes.size());
  char idbuf[64];
  for (size_t i = 0; i < scenes.size(); ++i) {
    std::snprintf(idbuf, sizeof(idbuf), "%s-%05zu", split.c_str(), i);
    CaptionRecord r;
    r.id = idbuf;
    r.image_ref = patch_file + "#" + std::to_string(i);
    r.alt_text = scene_to_caption(scenes[i], CaptionStyle::kAltText);
    r.page_title = "synthetic scene " + std::to_string(i);
    r.caption = scene_to_caption(scenes[i], style);
    r.caption_style = caption_style_name(style);
    r.scene = scenes[i];
    out.push_back(std::move(r));
  }
  return out;
}

// --- probe construction -------------------------------------------------------

std::string bare_relation_sentence(const Scene& scene, const SceneRelation& rel) {
  return std::string("the ") +
         nouns()[static_cast<size_t>(scene.objects[static_cast<size_t>(rel.subject)].noun)].word +
         " is " + predicates()[static_cast<size_t>(rel.predicate)].phrase + " the " +
         nouns()[static_cast<size_t>(scene.objects[static_cast<size_t>(rel.object)].noun)].word +
         ".";
}

std::string conjunction_sentence(const Scene& scene) {
  std::string out;
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    out += i == 0 ? "the " : " and the ";
    ParsedItem item;
    item.attrs = scene.objects[i].attrs;
    item.noun = scene.objects[i].noun;
    out += render_item(item);
  }
  out += '.';
  return out;
}

bool scene_has_noun(const Scene& scene, int noun) {
  for (const auto& obj : scene.objects) {
    if (obj.noun == noun) return true;
  }
  return false;
}

bool scene_has_pair(const Scene& scene, AttrKind kind, int value, int noun) {
  for (const auto& obj : scene.objects) {
    if (obj.noun == noun) return obj.attr(kind) == value;
  }
  return false;
}

bool scene_has_triple(const Scene& scene, int snoun, int predicate, int onoun) {
  for (const auto& rel : scene.relations) {
    if (scene.objects[static_cast<size_t>(rel.subject)].noun == snoun &&
        scene.objects[static_cast<size_t>(rel.object)].noun == onoun &&
        rel.predicate == predicate) {
      return true;
    }
  }
  return false;
}

// A caption is false for the scene iff at least one of its claims fails.
bool caption_false_for_scene(const Scene& scene, const std::string& caption) {
  ParsedCaption parsed;
  try {
    parsed = parse_caption_full(caption);
  } catch (const Unparseable&) {
    return true;
  }
  auto item_claims_ok = [&](const ParsedItem& item) {
    if (!scene_has_noun(scene, item.noun)) return false;
    for (const auto& [kind, value] : item.attrs) {
      if (!scene_has_pair(scene, kind, value, item.noun)) return false;
    }
    return true;
  };
  for (const auto& s : parsed.sentences) {
    if (const auto* o = std::get_if<SentObject>(&s)) {
      if (!item_claims_ok(o->item)) return true;
    } else if (const auto* r = std::get_if<SentRelation>(&s)) {
      if (!item_claims_ok(r->subject) || !item_claims_ok(r->object)) return true;
      if (!scene_has_triple(scene, r->subject.noun, r->predicate, r->object.noun)) return true;
    } else if (const auto* c = std::get_if<SentConjunction>(&s)) {
      for (const auto& item : c->items) {
        if (!item_claims_ok(item)) return true;
      }
    } else if (const auto* b = std::get_if<SentBackground>(&s)) {
      if (b->background != scene.background) return true;
    }
  }
  return false;
}

std::vector<ProbeSpec> build_probe_set(const std::vector<Scene>& scenes, NegativeKind kind,
                                       int target, Rng rng) {
  std::vector<ProbeSpec> out;
  const int n = static_cast<int>(scenes.size());
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);
  }
  const bool relation_positive = kind == NegativeKind::kSwapRelationArgs ||
                                 kind == NegativeKind::kReplaceRelation ||
                                 kind == NegativeKind::kReplaceObject;
  int counter = 0;
  for (int pass = 0; pass < 4 && static_cast<int>(out.size()) < target; ++pass) {
    for (int oi = 0; oi < n && static_cast<int>(out.size()) < target; ++oi) {
      const int scene_idx = order[static_cast<size_t>(oi)];
      const Scene& scene = scenes[static_cast<size_t>(scene_idx)];
      std::string positive;
      if (relation_positive) {
        if (scene.relations.empty()) continue;
        const auto& rel = scene.relations[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int>(scene.relations.size()) - 1))];
        positive = bare_relation_sentence(scene, rel);
      } else {
        positive = conjunction_sentence(scene);
      }
      for (int attempt = 0; attempt < 8; ++attempt) {
        NegativePair pair;
        try {
          pair = generate_negative(positive, kind, rng);
        } catch (const KindInapplicable&) {
          break;
        }
        if (!caption_false_for_scene(scene, pair.negative)) continue;
        ProbeSpec spec;
        spec.id = std::string(negative_kind_name(kind)) + "-" + std::to_string(counter++);
        spec.image_index = scene_idx;
        spec.kind = kind;
        spec.category = pair.category;
        spec.positive = positive;
        spec.negative = pair.negative;
        out.push_back(std::move(spec));
        break;
      }
    }
  }
  return out;
}

}  // namespace

ordered_json run_synth_data(const RunConfig& config) {
  validate_run_config(config);
  ensure_dir(config.data_dir);
  const Rng rng_data = Rng(config.seed).substream("data");

  const auto train_scenes =
      generate_scenes(rng_data.substream("train_scenes"), config.dataset.train_scenes);
  const auto eval_scenes =
      generate_scenes(rng_data.substream("eval_scenes"), config.dataset.eval_scenes);

  // Patch files.
  auto render_all = [](const std::vector<Scene>& scenes) {
    std::vector<Canvas> out;
    out.reserve(scenes.size());
    for (const auto& s : scenes) out.push_back(render_scene_canvas(s));
    return out;
  };
  write_patch_file(config.data_dir + "/patches_train.bin", render_all(train_scenes));
  write_patch_file(config.data_dir + "/patches_eval.bin", render_all(eval_scenes));

  // Records per style; negatives go on the default-style train records.
  ordered_json manifest;
  manifest["seed"] = config.seed;
  manifest["counts"] = {{"train", train_scenes.size()}, {"eval", eval_scenes.size()}};

  std::vector<std::string> vocab_corpus;
  for (const std::string split : {"train", "eval"}) {
    const auto& scenes = split == std::string("train") ? train_scenes : eval_scenes;
    for (const CaptionStyle style :
         {CaptionStyle::kDefault, CaptionStyle::kShort, CaptionStyle::kAltText}) {
      auto records = make_records(scenes, split, style, "patches_" + split + ".bin");
      if (split == std::string("train") && style == CaptionStyle::kDefault &&
          config.dataset.negatives_per_record > 0) {
        std::vector<NegativeCorpusEntry> entries;
        Rng rng_neg = rng_data.substream("negatives");
        const auto report = build_negative_corpus(captions_of(records), all_negative_kinds(),
                                                  config.dataset.negatives_per_record, rng_neg,
                                                  &entries);
        for (size_t i = 0; i < records.size(); ++i) {
          for (const auto& [kind, text] : entries[i].negatives) {
            records[i].negatives.emplace_back(negative_kind_name(kind), text);
          }
        }
        manifest["negatives"] = {{"processed", report.processed},
                                 {"skipped_unparseable", report.skipped_unparseable},
                                 {"per_kind", report.per_kind}};
      }
      const std::string path =
          config.data_dir + "/" + split + "_" + caption_style_name(style) + ".jsonl";
      write_records_jsonl(path, records);
      if (split == std::string("train")) {
        for (const auto& r : records) vocab_corpus.push_back(r.caption);
      }
    }
  }

  // Vocabulary over all training captions, all styles.
  const Vocabulary vocab = build_vocabulary(vocab_corpus, config.model.vocab_size);
  write_text_file(config.data_dir + "/vocab.txt", vocab_to_text(vocab));
  manifest["vocab_size"] = vocab.size();

  // Probe sets per negative kind over the eval scenes.
  ordered_json probe_counts;
  for (const NegativeKind kind : all_negative_kinds()) {
    const auto probes =
        build_probe_set(eval_scenes, kind, config.dataset.probes_per_kind,
                        rng_data.substream(std::string("probes_") + negative_kind_name(kind)));
    write_probes_jsonl(
        config.data_dir + "/probes_" + negative_kind_name(kind) + ".jsonl", probes);
    probe_counts[negative_kind_name(kind)] = probes.size();
  }
  manifest["probes"] = probe_counts;
  manifest["config"] = run_config_to_json(config);
  write_text_file(config.data_dir + "/manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

// --- training ------------------------------------------------------------------

Vocabulary load_vocab(const std::string& data_dir) {
  return vocab_from_text(read_text_file(data_dir + "/vocab.txt"));
}

LoadedSplit load_split(const std::string& data_dir, const std::string& split,
                       const std::string& style) {
  LoadedSplit out;
  out.records = read_records_jsonl(data_dir + "/" + split + "_" + style + ".jsonl");
  out.canvases = read_patch_file(data_dir + "/patches_" + split + ".bin");
  if (out.records.size() != out.canvases.size()) {
    throw IoError("records/patches size mismatch for split " + split);
  }
  return out;
}

namespace {

ModelConfig effective_model_config(const RunConfig& config, const Vocabulary& vocab) {
  ModelConfig mc = config.model;
  mc.vocab_size = vocab.size();
  return mc;
}

std::vector<TrainExample> to_examples(LoadedSplit&& split) {
  std::vector<TrainExample> out;
  out.reserve(split.records.size());
  for (size_t i = 0; i < split.records.size(); ++i) {
    TrainExample ex;
    ex.canvas = std::move(split.canvases[i]);
    ex.caption = split.records[i].caption;
    for (const auto& [kind, text] : split.records[i].negatives) {
      ex.negatives.emplace_back(negative_kind_from_name(kind), text);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void write_run_artifacts(const RunConfig& config, const std::string& checkpoint_path,
                         const std::vector<LossCurvePoint>& curve) {
  write_loss_curve_csv(config.out_dir + "/loss_curve.csv", curve);
  const std::string echo = run_config_to_json(config).dump(2) + "\n";
  write_text_file(config.out_dir + "/config.json", echo);
  const std::string ckpt_bytes = read_text_file(checkpoint_path);
  ordered_json hashes;
  hashes["config_fnv1a"] = fnv1a(echo);
  hashes["checkpoint_fnv1a"] = fnv1a(ckpt_bytes);
  write_text_file(config.out_dir + "/content_hash.json", hashes.dump(2) + "\n");
}

}  // namespace

std::string ensure_pretrained_text(const RunConfig& config) {
  const std::string path = config.data_dir + "/pretrained_text.ckpt";
  if (fs::exists(path)) return path;
  const Vocabulary vocab = load_vocab(config.data_dir);
  // Natural-language corpus: default plus short captions of the train split.
  auto def = read_records_jsonl(config.data_dir + "/train_default.jsonl");
  auto sho = read_records_jsonl(config.data_dir + "/train_short.jsonl");
  std::vector<std::string> corpus = captions_of(def);
  for (const auto& r : sho) corpus.push_back(r.caption);
  const auto holdout = captions_of(read_records_jsonl(config.data_dir + "/eval_default.jsonl"));

  TwoTowerModel model =
      init_model(effective_model_config(config, vocab), config.seed, config.train.temperature_init);
  const PretrainResult result = pretrain_text_tower(model, corpus, holdout, vocab, config.pretrain);
  if (result.final_holdout_loss > 0.8 * result.init_holdout_loss) {
    std::cerr << "warning: pretraining reduced held-out loss by less than 20% ("
              << result.init_holdout_loss << " -> " << result.final_holdout_loss << ")\n";
  }
  ordered_json extra;
  extra["kind"] = "text_pretrain";
  extra["init_holdout_loss"] = result.init_holdout_loss;
  extra["final_holdout_loss"] = result.final_holdout_loss;
  save_checkpoint(path, model, extra);
  write_loss_curve_csv(config.data_dir + "/pretrain_loss_curve.csv", result.curve);
  return path;
}

std::string run_train(const RunConfig& config) {
  validate_run_config(config);
  ensure_dir(config.out_dir);
  const Vocabulary vocab = load_vocab(config.data_dir);
  auto examples = to_examples(load_split(config.data_dir, "train", config.caption_style));

  TwoTowerModel model =
      init_model(effective_model_config(config, vocab), config.seed, config.train.temperature_init);
  if (config.text_tower_mode == "pretrained") {
    const std::string pre_path = ensure_pretrained_text(config);
    TwoTowerModel pre = load_checkpoint_model(pre_path);
    if (!(pre.config == model.config)) {
      throw ConfigError("pretrained text checkpoint config does not match run config");
    }
    copy_text_tower(pre, model);
    apply_freeze_policy(model, config.train.k_unfrozen);
  }

  const std::string ckpt = config.out_dir + "/checkpoint.ckpt";
  const TrainResult result =
      train_two_tower(model, examples, vocab, config.train, config.sentence_sampling, ckpt);
  write_run_artifacts(config, ckpt, result.curve);
  return ckpt;
}

std::string run_finetune(const RunConfig& config, const std::string& checkpoint) {
  validate_run_config(config);
  ensure_dir(config.out_dir);
  const Vocabulary vocab = load_vocab(config.data_dir);
  // Hard negatives live on the default-style records.
  auto examples = to_examples(load_split(config.data_dir, "train", "default"));
  TwoTowerModel model = load_checkpoint_model(checkpoint);
  const std::string out_ckpt = config.out_dir + "/checkpoint_hardneg.ckpt";
  const TrainResult result =
      finetune_hard_negatives(model, examples, vocab, config.train, out_ckpt);
  write_loss_curve_csv(config.out_dir + "/finetune_loss_curve.csv", result.curve);
  return out_ckpt;
}

// --- eval ----------------------------------------------------------------------

std::vector<ProbeItem> load_probe_items(const RunConfig& config, TwoTowerModel& model,
                                        const std::vector<std::vector<float>>& eval_image_embs,
                                        std::vector<ProbeSpec>* specs_out) {
  std::vector<ProbeItem> items;
  for (const NegativeKind kind : all_negative_kinds()) {
    const std::string path =
        config.data_dir + "/probes_" + std::string(negative_kind_name(kind)) + ".jsonl";
    if (!fs::exists(path)) continue;
    for (auto& spec : read_probes_jsonl(path)) {
      ProbeItem item;
      item.image_embedding = eval_image_embs[static_cast<size_t>(spec.image_index)];
      item.positive = spec.positive;
      item.negative = spec.negative;
      item.category = spec.category;
      item.kind = spec.kind;
      items.push_back(std::move(item));
      if (specs_out) specs_out->push_back(std::move(spec));
    }
  }
  (void)model;
  return items;
}

EvalReport run_eval(const RunConfig& config, const std::string& checkpoint) {
  validate_run_config(config);
  const Vocabulary vocab = load_vocab(config.data_dir);
  TwoTowerModel model = load_checkpoint_model(checkpoint);
  if (model.config.vocab_size != vocab.size()) {
    throw ConfigError("checkpoint vocab size does not match data vocabulary");
  }
  auto eval_default = load_split(config.data_dir, "eval", "default");
  const auto eval_short_records =
      read_records_jsonl(config.data_dir + "/eval_short.jsonl");

  // Image embeddings.
  std::vector<PatchGrid> grids;
  grids.reserve(eval_default.canvases.size());
  std::vector<const PatchGrid*> grid_ptrs;
  grid_ptrs.reserve(eval_default.canvases.size());
  for (const auto& canvas : eval_default.canvases) {
    grids.push_back(canvas_to_patches(canvas, model.config.patch_grid));
  }
  for (const auto& g : grids) grid_ptrs.push_back(&g);
  const auto image_embs = encode_images_batched(model, grid_ptrs);

  EvalReport report;
  const bool want_retrieval = std::count(config.eval_suites.begin(), config.eval_suites.end(),
                                         std::string("retrieval")) > 0;
  const bool want_probes =
      std::count(config.eval_suites.begin(), config.eval_suites.end(), std::string("probes")) > 0;

  if (want_retrieval) {
    EmbeddingIndex image_index(model.config.embed_dim);
    for (size_t i = 0; i < image_embs.size(); ++i) {
      image_index.add(static_cast<std::int64_t>(i), image_embs[i]);
    }
    auto text_queries = [&](const std::vector<CaptionRecord>& records) {
      std::vector<TokenSequence> seqs;
      seqs.reserve(records.size());
      for (const auto& r : records) {
        seqs.push_back(tokenize(r.caption, vocab, model.config.max_seq_len));
      }
      return encode_texts_batched(model, seqs);
    };
    const auto default_text_embs = text_queries(eval_default.records);
    const auto short_text_embs = text_queries(eval_short_records);
    std::vector<std::vector<std::int64_t>> truth(image_embs.size());
    for (size_t i = 0; i < truth.size(); ++i) truth[i] = {static_cast<std::int64_t>(i)};
    report.recall_t2i_default = recall_at_k(default_text_embs, image_index, truth, 1);
    report.recall_t2i_short = recall_at_k(short_text_embs, image_index, truth, 1);

    EmbeddingIndex text_index(model.config.embed_dim);
    for (size_t i = 0; i < default_text_embs.size(); ++i) {
      text_index.add(static_cast<std::int64_t>(i), default_text_embs[i]);
    }
    report.recall_i2t_default = recall_at_k(image_embs, text_index, truth, 1);
  }

  if (want_probes) {
    const auto items = load_probe_items(config, model, image_embs);
    if (!items.empty()) report.probes = macro_accuracy(items, model, vocab);
  }

  report.meta["checkpoint"] = checkpoint;
  report.meta["eval_scenes"] = eval_default.records.size();
  report.meta["probe_items"] = report.probes.total;
  report.meta["model_config"] = model_config_to_json(model.config);
  return report;
}

// --- ablation grid ---------------------------------------------------------------

namespace {

RunConfig row_config(const RunConfig& base, const std::string& name,
                     const std::string& text_tower, const std::string& style, bool sampling) {
  RunConfig c = base;
  c.out_dir = base.out_dir + "/" + name;
  c.text_tower_mode = text_tower;
  c.caption_style = style;
  c.sentence_sampling = sampling;
  c.hard_negative_finetune = false;
  return c;
}

}  // namespace

std::vector<AblationRow> run_ablate(const RunConfig& config, bool minimal) {
  ensure_dir(config.out_dir);
  struct RowSpec {
    std::string name, tower, style;
    bool sampling;
  };
  std::vector<RowSpec> specs;
  if (minimal) {
    specs = {{"scratch_alt_text", "scratch", "alt_text", false},
             {"pretrained_default", "pretrained", "default", false}};
  } else {
    specs = {{"scratch_alt_text", "scratch", "alt_text", false},
             {"scratch_default", "scratch", "default", false},
             {"pretrained_alt_text", "pretrained", "alt_text", false},
             {"pretrained_default", "pretrained", "default", false},
             {"pretrained_default_sampling", "pretrained", "default", true}};
  }

  std::vector<AblationRow> rows;
  std::string best_cell_ckpt;
  for (const auto& spec : specs) {
    RunConfig rc = row_config(config, spec.name, spec.tower, spec.style, spec.sampling);
    ensure_dir(rc.out_dir);
    const std::string ckpt = run_train(rc);
    if (spec.name == "pretrained_default") best_cell_ckpt = ckpt;
    AblationRow row;
    row.name = spec.name;
    row.text_tower = spec.tower;
    row.caption_style = spec.style;
    row.sentence_sampling = spec.sampling;
    row.report = run_eval(rc, ckpt);
    rows.push_back(std::move(row));
  }

  if (!minimal && !best_cell_ckpt.empty()) {
    RunConfig rc = row_config(config, "pretrained_default_hardneg", "pretrained", "default", false);
    rc.hard_negative_finetune = true;
    ensure_dir(rc.out_dir);
    const std::string ckpt = run_finetune(rc, best_cell_ckpt);
    AblationRow row;
    row.name = "pretrained_default_hardneg";
    row.text_tower = "pretrained";
    row.caption_style = "default";
    row.hard_negative_finetune = true;
    row.report = run_eval(rc, ckpt);
    rows.push_back(std::move(row));
  }

  write_text_file(config.out_dir + "/ablation.csv", ablation_table_csv(rows));
  return rows;
}

std::string ablation_table_csv(const std::vector<AblationRow>& rows) {
  std::string out =
      "name,text_tower,caption_style,sentence_sampling,hard_negative_finetune,"
      "recall_t2i_default,recall_i2t_default,recall_t2i_short,probe_macro,swap_relation_macro\n";
  char buf[512];
  for (const auto& row : rows) {
    double rel_macro = 0.0;
    const auto it = row.report.probes.per_kind_macro.find("swap_relation_args");
    if (it != row.report.probes.per_kind_macro.end()) rel_macro = it->second;
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%d,%d,%.4f,%.4f,%.4f,%.4f,%.4f\n", row.name.c_str(),
                  row.text_tower.c_str(), row.caption_style.c_str(),
                  row.sentence_sampling ? 1 : 0, row.hard_negative_finetune ? 1 : 0,
                  row.report.recall_t2i_default, row.report.recall_i2t_default,
                  row.report.recall_t2i_short, row.report.probes.macro_accuracy, rel_macro);
    out += buf;
  }
  return out;
}

// --- recaption / stats -----------------------------------------------------------

RecaptionReport run_recaption(const RunConfig& config, const std::string& input_jsonl,
                              const std::string& output_jsonl, const std::string& variant) {
  std::string url = config.lm.url;
  if (url.empty()) {
    const char* env = std::getenv("MINCLIP_LM_URL");
    if (env) url = env;
  }
  if (url.empty()) {
    throw ConfigError("recaption: no LM endpoint configured (lm.url or MINCLIP_LM_URL)");
  }
  std::string token = config.lm.token;
  if (token.empty()) {
    const char* env = std::getenv("MINCLIP_LM_TOKEN");
    if (env) token = env;
  }
  LmDecodeParams params;
  params.temperature = config.lm.temperature;
  params.max_tokens = config.lm.max_tokens;
  HttpLmClient client = HttpLmClient::from_url(url, token, params);
  const PromptTemplate tmpl =
      load_prompt_template(config.prompt_dir, prompt_variant_from_name(variant));
  auto records = read_records_jsonl(input_jsonl);
  const RecaptionReport report =
      recaption_dataset(records, tmpl, client, config.lm.max_inflight);
  // Failed records are dropped from the output but reported.
  std::vector<CaptionRecord> kept;
  std::set<std::string> failed(report.failed_ids.begin(), report.failed_ids.end());
  for (auto& r : records) {
    if (!failed.count(r.id)) kept.push_back(std::move(r));
  }
  write_records_jsonl(output_jsonl, kept);
  return report;
}

CaptionStats run_stats(const RunConfig& config, const std::string& corpus_a_jsonl,
                       const std::string& corpus_b_jsonl) {
  ensure_dir(config.out_dir);
  const Vocabulary vocab = load_vocab(config.data_dir);
  const std::string pre_path = ensure_pretrained_text(config);
  TowerScorer scorer(load_checkpoint_model(pre_path));
  const auto corpus_a = captions_of(read_records_jsonl(corpus_a_jsonl));
  const auto corpus_b = captions_of(read_records_jsonl(corpus_b_jsonl));
  const CaptionStats stats =
      caption_stats(corpus_a, corpus_b, scorer, vocab, config.model.max_seq_len);
  ordered_json j;
  j["mean_words_a"] = stats.mean_words_a;
  j["mean_words_b"] = stats.mean_words_b;
  j["median_words_a"] = stats.median_words_a;
  j["median_words_b"] = stats.median_words_b;
  j["median_length_ratio"] = stats.median_length_ratio;
  j["median_loglik_a"] = stats.median_loglik_a;
  j["median_loglik_b"] = stats.median_loglik_b;
  write_text_file(config.out_dir + "/stats.json", j.dump(2) + "\n");
  write_text_file(config.out_dir + "/length_hist_a.csv", histogram_csv(stats.length_hist_a));
  write_text_file(config.out_dir + "/length_hist_b.csv", histogram_csv(stats.length_hist_b));
  write_text_file(config.out_dir + "/loglik_hist_a.csv", histogram_csv(stats.loglik_hist_a));
  write_text_file(config.out_dir + "/loglik_hist_b.csv", histogram_csv(stats.loglik_hist_b));
  return stats;
}

}  // namespace minclip
