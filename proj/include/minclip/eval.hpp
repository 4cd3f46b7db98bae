#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "minclip/augment.hpp"
#include "minclip/model.hpp"
#include "minclip/scorer.hpp"

#include "json.hpp"

namespace minclip {

struct EmptyIndex : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct MissingGroundTruth : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct WrongRaterCount : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DegenerateInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Exact cosine index over unit vectors (dot product).
class EmbeddingIndex {
 public:
  explicit EmbeddingIndex(int dim) : dim_(dim) {}

  void add(std::int64_t id, const std::vector<float>& row);
  int size() const { return static_cast<int>(ids_.size()); }
  int dim() const { return dim_; }
  std::int64_t id_at(int i) const { return ids_[static_cast<size_t>(i)]; }
  const float* row(int i) const { return data_.data() + static_cast<size_t>(i) * dim_; }

 private:
  int dim_;
  std::vector<std::int64_t> ids_;
  std::vector<float> data_;
};

// Ids by descending dot product; exact ties broken by ascending id.
std::vector<std::int64_t> top_k(const EmbeddingIndex& index, const std::vector<float>& query,
                                int k);

// Fraction of queries whose top-k hits any of its ground-truth ids.
double recall_at_k(const std::vector<std::vector<float>>& queries, const EmbeddingIndex& index,
                   const std::vector<std::vector<std::int64_t>>& ground_truth, int k);

// Two-alternative probe: is the image closer to the positive or the negative
// caption? Ties are wrong.
struct ProbeItem {
  std::vector<float> image_embedding;
  std::string positive;
  std::string negative;
  std::string category;
  NegativeKind kind = NegativeKind::kSwapRelationArgs;
};

struct CategoryRow {
  std::string category;
  std::string kind;
  int correct = 0;
  int total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

struct MacroReport {
  double macro_accuracy = 0.0;  // unweighted mean over categories
  double micro_accuracy = 0.0;  // item-level fraction
  int ties = 0;
  int total = 0;
  std::vector<CategoryRow> rows;                 // sorted by (kind, category)
  std::map<std::string, double> per_kind_macro;  // unweighted over that kind's categories
};

MacroReport macro_accuracy(const std::vector<ProbeItem>& probes, TwoTowerModel& model,
                           const Vocabulary& vocab);

struct BlindReport {
  double accuracy = 0.0;
  int ties = 0;
  int total = 0;
};

// Image-free baseline: pick the caption with the higher log-likelihood.
BlindReport blind_baseline(const std::vector<ProbeItem>& probes, const LanguageModelScorer& scorer,
                           const Vocabulary& vocab, int max_seq_len);

struct Histogram {
  double lo = 0.0, hi = 0.0;
  std::vector<std::int64_t> counts;  // 50 bins
};

Histogram histogram50(const std::vector<double>& values);

struct CaptionStats {
  double mean_words_a = 0, mean_words_b = 0;
  double median_words_a = 0, median_words_b = 0;
  double median_length_ratio = 0;  // median_b / median_a
  double median_loglik_a = 0, median_loglik_b = 0;
  Histogram length_hist_a, length_hist_b;
  Histogram loglik_hist_a, loglik_hist_b;
};

CaptionStats caption_stats(const std::vector<std::string>& corpus_a,
                           const std::vector<std::string>& corpus_b,
                           const LanguageModelScorer& scorer, const Vocabulary& vocab,
                           int max_seq_len);

struct MajorityVoteResult {
  std::vector<bool> verdicts;
  double acceptable_fraction = 0.0;
};

MajorityVoteResult majority_vote(const std::vector<std::vector<bool>>& ratings);

struct ZTestResult {
  double z = 0.0;
  double p_value = 0.0;
};

// Pooled two-proportion z statistic with a two-sided normal p-value.
ZTestResult two_proportion_z(std::int64_t successes1, std::int64_t n1, std::int64_t successes2,
                             std::int64_t n2);

// --- report bundle -----------------------------------------------------------

using ordered_json = nlohmann::ordered_json;

struct EvalReport {
  double recall_t2i_default = 0.0;
  double recall_i2t_default = 0.0;
  double recall_t2i_short = 0.0;
  MacroReport probes;
  ordered_json meta;
};

ordered_json eval_report_to_json(const EvalReport& report);
std::string category_rows_csv(const MacroReport& report);
std::string histogram_csv(const Histogram& hist);

}  // namespace minclip
