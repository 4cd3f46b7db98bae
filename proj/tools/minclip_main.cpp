#include <cstdio>
#include <iostream>

#include "minclip/checkpoint.hpp"
#include "minclip/pipeline.hpp"

#include "CLI11.hpp"

namespace {

using namespace minclip;

RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) {
    RunConfig c;
    validate_run_config(c);
    return c;
  }
  return load_run_config(path);
}

void print_report(const EvalReport& report) {
  std::printf("recall@1  text->image (default queries): %.4f\n", report.recall_t2i_default);
  std::printf("recall@1  image->text (default queries): %.4f\n", report.recall_i2t_default);
  std::printf("recall@1  text->image (short queries):   %.4f\n", report.recall_t2i_short);
  if (report.probes.total > 0) {
    std::printf("probe macro accuracy: %.4f over %d items (%d ties)\n",
                report.probes.macro_accuracy, report.probes.total, report.probes.ties);
    for (const auto& [kind, acc] : report.probes.per_kind_macro) {
      std::printf("  %-20s %.4f\n", kind.c_str(), acc);
    }
  }
}

void write_report_files(const RunConfig& config, const EvalReport& report) {
  ensure_dir(config.out_dir);
  write_text_file(config.out_dir + "/report.json", eval_report_to_json(report).dump(2) + "\n");
  write_text_file(config.out_dir + "/per_category.csv", category_rows_csv(report.probes));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-tower contrastive trainer and evaluation harness for synthetic scenes"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration")->envname("MINCLIP_CONFIG");

  std::uint64_t seed_override = 0;
  bool have_seed = false;
  app.add_option_function<std::uint64_t>(
         "--seed", [&](std::uint64_t s) { seed_override = s; have_seed = true; },
         "Override the config seed");

  std::string data_dir_override, out_dir_override;
  app.add_option("--data-dir", data_dir_override, "Override dataset directory");
  app.add_option("--out-dir", out_dir_override, "Override output directory");

  auto apply_overrides = [&](RunConfig& c) {
    if (have_seed) {
      c.seed = seed_override;
      c.train.seed = seed_override;
      c.pretrain.seed = seed_override;
    }
    if (!data_dir_override.empty()) c.data_dir = data_dir_override;
    if (!out_dir_override.empty()) c.out_dir = out_dir_override;
  };

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic dataset");
  int train_scenes = 0, eval_scenes = 0, probes_per_kind = -1;
  synth->add_option("--train-scenes", train_scenes, "Number of training scenes");
  synth->add_option("--eval-scenes", eval_scenes, "Number of eval scenes");
  synth->add_option("--probes-per-kind", probes_per_kind, "Probe count per negative kind");
  synth->callback([&]() {
    RunConfig c = load_config_or_default(config_path);
    apply_overrides(c);
    if (train_scenes > 0) c.dataset.train_scenes = train_scenes;
    if (eval_scenes > 0) c.dataset.eval_scenes = eval_scenes;
    if (probes_per_kind >= 0) c.dataset.probes_per_kind = probes_per_kind;
    const auto manifest = run_synth_data(c);
    std::printf("wrote dataset to %s\n", c.data_dir.c_str());
    std::printf("%s\n", manifest.dump(2).c_str());
  });

  // recaption
  auto* recap = app.add_subcommand("recaption", "Recaption records through the LM endpoint");
  std::string recap_in, recap_out, recap_variant = "grounded_default";
  recap->add_option("--input", recap_in, "Input records (jsonl)")->required();
  recap->add_option("--output", recap_out, "Output records (jsonl)")->required();
  recap->add_option("--variant", recap_variant, "Prompt variant");
  recap->callback([&]() {
    RunConfig c = load_config_or_default(config_path);
    apply_overrides(c);
    const auto report = run_recaption(c, recap_in, recap_out, recap_variant);
    std::printf("recaptioned %d records, %zu failed\n", report.succeeded,
                report.failed_ids.size());
    for (const auto& id : report.failed_ids) std::printf("failed: %s\n", id.c_str());
  });

  // train
  auto* train = app.add_subcommand("train", "Main contrastive training phase");
  std::string caption_style, tower_mode;
  bool sampling_on = false;
  train->add_option("--caption-style", caption_style, "alt_text | default | short");
  train->add_option("--text-tower", tower_mode, "scratch | pretrained");
  train->add_flag("--sentence-sampling", sampling_on, "Enable sentence sampling");
  train->callback([&]() {
    RunConfig c = load_config_or_default(config_path);
    apply_overrides(c);
    if (!caption_style.empty()) c.caption_style = caption_style;
    if (!tower_mode.empty()) c.text_tower_mode = tower_mode;
    if (sampling_on) c.sentence_sampling = true;
    const std::string ckpt = run_train(c);
    std::printf("checkpoint: %s\n", ckpt.c_str());
  });

  // finetune-hardneg
  auto* ft = app.add_subcommand("finetune-hardneg", "Hard-negative fine-tuning phase");
  std::string ft_ckpt;
  ft->add_option("--checkpoint", ft_ckpt, "Base checkpoint")->required();
  ft->callback([&]() {
    RunConfig c = load_config_or_default(config_path);
    apply_overrides(c);
    c.hard_negative_finetune = true;
    const std::string out = run_finetune(c, ft_ckpt);
    std::printf("checkpoint: %s\n", out.c_str());
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_ckpt;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint to evaluate")->required();
  ev->callback([&]() {
    RunConfig c = load_config_or_default(config_path);
    apply_overrides(c);
    const EvalReport report = run_eval(c, ev_ckpt);
    write_report_files(c, report);
    print_report(report);
  });

  // stats
  auto* st = app.add_subcommand("stats", "Caption statistics, adjudication, z-test");
  std::string corpus_a, corpus_b, ratings_path;
  std::vector<std::int64_t> ztest_args;
  st->add_option("--corpus-a", corpus_a, "Record file A (jsonl)");
  st->add_option("--corpus-b", corpus_b, "Record file B (jsonl)");
  st->add_option("--ratings", ratings_path, "CSV of 3 ratings per line (0/1)");
  st->add_option("--ztest", ztest_args, "successes1 n1 successes2 n2")->expected(4);
  st->callback([&]() {
    RunConfig c = load_config_or_default(config_path);
    apply_overrides(c);
    bool did_anything = false;
    if (!ztest_args.empty()) {
      const auto r = two_proportion_z(ztest_args[0], ztest_args[1], ztest_args[2], ztest_args[3]);
      std::printf("z = %.6f, two-sided p = %.6g\n", r.z, r.p_value);
      did_anything = true;
    }
    if (!ratings_path.empty()) {
      std::vector<std::vector<bool>> ratings;
      for (const auto& line : [&] {
             std::vector<std::string> lines;
             std::istringstream ss(read_text_file(ratings_path));
             std::string l;
             while (std::getline(ss, l)) {
               if (!l.empty()) lines.push_back(l);
             }
             return lines;
           }()) {
        std::vector<bool> row;
        for (char ch : line) {
          if (ch == '0') row.push_back(false);
          if (ch == '1') row.push_back(true);
        }
        ratings.push_back(row);
      }
      const auto mv = majority_vote(ratings);
      std::printf("acceptable fraction: %.4f over %zu items\n", mv.acceptable_fraction,
                  mv.verdicts.size());
      did_anything = true;
    }
    if (!corpus_a.empty() && !corpus_b.empty()) {
      const CaptionStats stats = run_stats(c, corpus_a, corpus_b);
      std::printf("mean words: %.2f vs %.2f\n", stats.mean_words_a, stats.mean_words_b);
      std::printf("median words: %.1f vs %.1f (ratio %.2f)\n", stats.median_words_a,
                  stats.median_words_b, stats.median_length_ratio);
      std::printf("median log-likelihood: %.2f vs %.2f\n", stats.median_loglik_a,
                  stats.median_loglik_b);
      did_anything = true;
    }
    if (!did_anything) {
      throw ConfigError("stats: nothing to do (pass --ztest, --ratings, or --corpus-a/--corpus-b)");
    }
  });

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run the ablation grid");
  bool minimal = false;
  ab->add_flag("--minimal", minimal, "Only the two corner cells");
  ab->callback([&]() {
    RunConfig c = load_config_or_default(config_path);
    apply_overrides(c);
    const auto rows = run_ablate(c, minimal);
    std::printf("%s", ablation_table_csv(rows).c_str());
  });

  // report
  auto* rp = app.add_subcommand("report", "Print stored eval reports");
  std::vector<std::string> report_dirs;
  rp->add_option("dirs", report_dirs, "Run directories containing report.json")->required();
  rp->callback([&]() {
    for (const auto& dir : report_dirs) {
      std::printf("== %s ==\n", dir.c_str());
      std::printf("%s\n", read_text_file(dir + "/report.json").c_str());
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
