#pragma once

#include <optional>
#include <string>
#include <vector>

#include "minclip/dataset.hpp"
#include "minclip/eval.hpp"
#include "minclip/lm_client.hpp"
#include "minclip/train.hpp"

namespace minclip {

struct DatasetConfig {
  int train_scenes = 20000;
  int eval_scenes = 2000;
  int probes_per_kind = 2000;
  int negatives_per_record = 2;
};

struct LmEndpointConfig {
  std::string url;    // falls back to MINCLIP_LM_URL
  std::string token;  // falls back to MINCLIP_LM_TOKEN
  std::optional<double> temperature;
  std::optional<int> max_tokens;
  int max_inflight = 8;
  int timeout_seconds = 30;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string data_dir = "data";
  std::string out_dir = "runs/default";
  std::string prompt_dir = "prompts";
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  PretrainConfig pretrain;
  std::string caption_style = "default";    // training caption style
  std::string text_tower_mode = "scratch";  // scratch | pretrained
  bool sentence_sampling = false;
  bool hard_negative_finetune = false;
  std::vector<std::string> eval_suites = {"retrieval", "probes"};
  LmEndpointConfig lm;
};

ordered_json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const ordered_json& j);
RunConfig load_run_config(const std::string& path);
void validate_run_config(const RunConfig& config);

// Deterministic dataset synthesis into data_dir: scene records with captions
// in every style, rendered patch files, per-kind probe sets, hard negatives
// on the default-style train records, the vocabulary, and a manifest.
ordered_json run_synth_data(const RunConfig& config);

// Trains (and caches) the causal text-tower checkpoint under data_dir.
std::string ensure_pretrained_text(const RunConfig& config);

// Main contrastive phase; returns the checkpoint path under out_dir.
std::string run_train(const RunConfig& config);

// Phase 2 on an existing checkpoint; returns the new checkpoint path.
std::string run_finetune(const RunConfig& config, const std::string& checkpoint);

EvalReport run_eval(const RunConfig& config, const std::string& checkpoint);

struct AblationRow {
  std::string name;
  std::string text_tower;
  std::string caption_style;
  bool sentence_sampling = false;
  bool hard_negative_finetune = false;
  EvalReport report;
};

// The ablation grid: tower x caption-style, plus a sentence-sampling arm and
// a hard-negative fine-tuning arm on the best cell. minimal=true runs only
// the two corner cells.
std::vector<AblationRow> run_ablate(const RunConfig& config, bool minimal = false);

std::string ablation_table_csv(const std::vector<AblationRow>& rows);

// Recaption a record file through the configured LM endpoint.
RecaptionReport run_recaption(const RunConfig& config, const std::string& input_jsonl,
                              const std::string& output_jsonl, const std::string& variant);

// Caption statistics between two record files, scored by the pretrained
// tower; writes stats.json and histogram CSVs under out_dir.
CaptionStats run_stats(const RunConfig& config, const std::string& corpus_a_jsonl,
                       const std::string& corpus_b_jsonl);

// --- shared helpers ----------------------------------------------------------

std::vector<std::string> captions_of(const std::vector<CaptionRecord>& records);

Vocabulary load_vocab(const std::string& data_dir);

struct LoadedSplit {
  std::vector<CaptionRecord> records;
  std::vector<Canvas> canvases;
};

LoadedSplit load_split(const std::string& data_dir, const std::string& split,
                       const std::string& style);

std::vector<ProbeItem> load_probe_items(const RunConfig& config, TwoTowerModel& model,
                                        const std::vector<std::vector<float>>& eval_image_embs,
                                        std::vector<ProbeSpec>* specs_out = nullptr);

void ensure_dir(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace minclip
