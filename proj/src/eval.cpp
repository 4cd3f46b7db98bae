#include "minclip/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace minclip {

void EmbeddingIndex::add(std::int64_t id, const std::vector<float>& row) {
  if (static_cast<int>(row.size()) != dim_) {
    throw ShapeMismatch("EmbeddingIndex::add: wrong dimension");
  }
  for (std::int64_t existing : ids_) {
    if (existing == id) throw std::invalid_argument("EmbeddingIndex::add: duplicate id");
  }
  ids_.push_back(id);
  data_.insert(data_.end(), row.begin(), row.end());
}

std::vector<std::int64_t> top_k(const EmbeddingIndex& index, const std::vector<float>& query,
                                int k) {
  if (index.size() == 0) throw EmptyIndex("top_k: empty index");
  if (k <= 0 || k > index.size()) throw std::invalid_argument("top_k: k out of range");
  if (static_cast<int>(query.size()) != index.dim()) throw ShapeMismatch("top_k: bad query dim");
  std::vector<std::pair<float, std::int64_t>> scored(static_cast<size_t>(index.size()));
  for (int i = 0; i < index.size(); ++i) {
    const float* r = index.row(i);
    float dot = 0.0f;
    for (int j = 0; j < index.dim(); ++j) dot += r[j] * query[static_cast<size_t>(j)];
    scored[static_cast<size_t>(i)] = {dot, index.id_at(i)};
  }
  std::partial_sort(scored.begin(), scored.begin() + k, scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::vector<std::int64_t> out(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) out[static_cast<size_t>(i)] = scored[static_cast<size_t>(i)].second;
  return out;
}

double recall_at_k(const std::vector<std::vector<float>>& queries, const EmbeddingIndex& index,
                   const std::vector<std::vector<std::int64_t>>& ground_truth, int k) {
  if (queries.size() != ground_truth.size()) {
    throw MissingGroundTruth("recall_at_k: queries/ground_truth size mismatch");
  }
  if (queries.empty()) throw MissingGroundTruth("recall_at_k: no queries");
  int hits = 0;
  for (size_t q = 0; q < queries.size(); ++q) {
    if (ground_truth[q].empty()) {
      throw MissingGroundTruth("recall_at_k: query " + std::to_string(q) + " has no ground truth");
    }
    const auto ranked = top_k(index, queries[q], k);
    bool hit = false;
    for (std::int64_t id : ranked) {
      for (std::int64_t g : ground_truth[q]) {
        if (id == g) hit = true;
      }
    }
    if (hit) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

namespace {

double dot(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

MacroReport summarize(const std::vector<std::pair<std::pair<std::string, std::string>, bool>>&
                          outcomes,  // ((kind, category), correct)
                      int ties) {
  MacroReport report;
  report.ties = ties;
  report.total = static_cast<int>(outcomes.size());
  std::map<std::pair<std::string, std::string>, CategoryRow> rows;
  int correct_total = 0;
  for (const auto& [key, correct] : outcomes) {
    auto& row = rows[key];
    row.kind = key.first;
    row.category = key.second;
    ++row.total;
    if (correct) {
      ++row.correct;
      ++correct_total;
    }
  }
  std::map<std::string, std::pair<double, int>> kind_acc;
  double macro_sum = 0.0;
  for (const auto& [key, row] : rows) {
    report.rows.push_back(row);
    macro_sum += row.accuracy();
    auto& ka = kind_acc[row.kind];
    ka.first += row.accuracy();
    ka.second += 1;
  }
  report.macro_accuracy = rows.empty() ? 0.0 : macro_sum / static_cast<double>(rows.size());
  report.micro_accuracy =
      outcomes.empty() ? 0.0 : static_cast<double>(correct_total) / outcomes.size();
  for (const auto& [kind, acc] : kind_acc) {
    report.per_kind_macro[kind] = acc.first / acc.second;
  }
  return report;
}

}  // namespace

MacroReport macro_accuracy(const std::vector<ProbeItem>& probes, TwoTowerModel& model,
                           const Vocabulary& vocab) {
  if (probes.empty()) throw std::invalid_argument("macro_accuracy: no probes");
  std::vector<TokenSequence> seqs;
  seqs.reserve(probes.size() * 2);
  for (const auto& p : probes) {
    seqs.push_back(tokenize(p.positive, vocab, model.config.max_seq_len));
    seqs.push_back(tokenize(p.negative, vocab, model.config.max_seq_len));
  }
  const auto embs = encode_texts_batched(model, seqs);
  std::vector<std::pair<std::pair<std::string, std::string>, bool>> outcomes;
  outcomes.reserve(probes.size());
  int ties = 0;
  for (size_t i = 0; i < probes.size(); ++i) {
    const double sp = dot(probes[i].image_embedding, embs[2 * i]);
    const double sn = dot(probes[i].image_embedding, embs[2 * i + 1]);
    if (sp == sn) ++ties;
    outcomes.push_back(
        {{negative_kind_name(probes[i].kind), probes[i].category}, sp > sn});
  }
  return summarize(outcomes, ties);
}

BlindReport blind_baseline(const std::vector<ProbeItem>& probes, const LanguageModelScorer& scorer,
                           const Vocabulary& vocab, int max_seq_len) {
  if (probes.empty()) throw std::invalid_argument("blind_baseline: no probes");
  BlindReport report;
  report.total = static_cast<int>(probes.size());
  int correct = 0;
  for (const auto& p : probes) {
    const double lp = log_likelihood(tokenize(p.positive, vocab, max_seq_len), scorer);
    const double ln = log_likelihood(tokenize(p.negative, vocab, max_seq_len), scorer);
    if (lp == ln) ++report.ties;
    if (lp > ln) ++correct;
  }
  report.accuracy = static_cast<double>(correct) / report.total;
  return report;
}

Histogram histogram50(const std::vector<double>& values) {
  Histogram h;
  h.counts.assign(50, 0);
  if (values.empty()) return h;
  h.lo = *std::min_element(values.begin(), values.end());
  h.hi = *std::max_element(values.begin(), values.end());
  const double span = h.hi - h.lo;
  for (const double v : values) {
    int bin = span == 0.0 ? 0 : static_cast<int>((v - h.lo) / span * 50.0);
    bin = std::clamp(bin, 0, 49);
    ++h.counts[static_cast<size_t>(bin)];
  }
  return h;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::vector<double> word_counts(const std::vector<std::string>& corpus) {
  std::vector<double> out;
  out.reserve(corpus.size());
  for (const auto& caption : corpus) {
    int words = 0;
    for (const auto& w : split_words(caption)) {
      if (w.size() > 1 || (w[0] != '.' && w[0] != ',' && w[0] != '!' && w[0] != '?')) ++words;
    }
    out.push_back(words);
  }
  return out;
}

}  // namespace

CaptionStats caption_stats(const std::vector<std::string>& corpus_a,
                           const std::vector<std::string>& corpus_b,
                           const LanguageModelScorer& scorer, const Vocabulary& vocab,
                           int max_seq_len) {
  if (corpus_a.empty() || corpus_b.empty()) {
    throw std::invalid_argument("caption_stats: empty corpus");
  }
  CaptionStats stats;
  const auto words_a = word_counts(corpus_a);
  const auto words_b = word_counts(corpus_b);
  stats.mean_words_a = mean(words_a);
  stats.mean_words_b = mean(words_b);
  stats.median_words_a = median(words_a);
  stats.median_words_b = median(words_b);
  stats.median_length_ratio =
      stats.median_words_a == 0 ? 0.0 : stats.median_words_b / stats.median_words_a;
  auto logliks = [&](const std::vector<std::string>& corpus) {
    std::vector<double> out;
    out.reserve(corpus.size());
    for (const auto& caption : corpus) {
      out.push_back(log_likelihood(tokenize(caption, vocab, max_seq_len), scorer));
    }
    return out;
  };
  const auto ll_a = logliks(corpus_a);
  const auto ll_b = logliks(corpus_b);
  stats.median_loglik_a = median(ll_a);
  stats.median_loglik_b = median(ll_b);
  stats.length_hist_a = histogram50(words_a);
  stats.length_hist_b = histogram50(words_b);
  stats.loglik_hist_a = histogram50(ll_a);
  stats.loglik_hist_b = histogram50(ll_b);
  return stats;
}

MajorityVoteResult majority_vote(const std::vector<std::vector<bool>>& ratings) {
  MajorityVoteResult result;
  if (ratings.empty()) throw WrongRaterCount("majority_vote: no items");
  int yes_items = 0;
  for (const auto& item : ratings) {
    if (item.size() != 3) throw WrongRaterCount("majority_vote: expected exactly 3 ratings");
    const int yes = static_cast<int>(item[0]) + static_cast<int>(item[1]) + static_cast<int>(item[2]);
    const bool verdict = yes >= 2;
    result.verdicts.push_back(verdict);
    if (verdict) ++yes_items;
  }
  result.acceptable_fraction = static_cast<double>(yes_items) / ratings.size();
  return result;
}

ZTestResult two_proportion_z(std::int64_t successes1, std::int64_t n1, std::int64_t successes2,
                             std::int64_t n2) {
  if (n1 <= 0 || n2 <= 0) throw DegenerateInput("two_proportion_z: sample sizes must be positive");
  if (successes1 < 0 || successes1 > n1 || successes2 < 0 || successes2 > n2) {
    throw DegenerateInput("two_proportion_z: successes out of range");
  }
  const double p1 = static_cast<double>(successes1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(successes2) / static_cast<double>(n2);
  const double pooled =
      static_cast<double>(successes1 + successes2) / static_cast<double>(n1 + n2);
  if (pooled == 0.0 || pooled == 1.0) {
    throw DegenerateInput("two_proportion_z: pooled proportion is degenerate");
  }
  const double se =
      std::sqrt(pooled * (1.0 - pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  ZTestResult r;
  r.z = (p1 - p2) / se;
  r.p_value = std::erfc(std::abs(r.z) / std::sqrt(2.0));
  return r;
}

ordered_json eval_report_to_json(const EvalReport& report) {
  ordered_json j;
  j["recall"] = {{"t2i_default", report.recall_t2i_default},
                 {"i2t_default", report.recall_i2t_default},
                 {"t2i_short", report.recall_t2i_short}};
  j["probes"]["macro_accuracy"] = report.probes.macro_accuracy;
  j["probes"]["micro_accuracy"] = report.probes.micro_accuracy;
  j["probes"]["ties"] = report.probes.ties;
  j["probes"]["total"] = report.probes.total;
  j["probes"]["per_kind_macro"] = report.probes.per_kind_macro;
  ordered_json rows = ordered_json::array();
  for (const auto& row : report.probes.rows) {
    rows.push_back({{"kind", row.kind},
                    {"category", row.category},
                    {"correct", row.correct},
                    {"total", row.total},
                    {"accuracy", row.accuracy()}});
  }
  j["probes"]["categories"] = rows;
  j["meta"] = report.meta;
  return j;
}

std::string category_rows_csv(const MacroReport& report) {
  std::string out = "kind,category,correct,total,accuracy\n";
  char buf[256];
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%d,%.6f\n", row.kind.c_str(), row.category.c_str(),
                  row.correct, row.total, row.accuracy());
    out += buf;
  }
  return out;
}

std::string histogram_csv(const Histogram& hist) {
  std::string out = "bin_left,count\n";
  char buf[96];
  const double width = (hist.hi - hist.lo) / 50.0;
  for (size_t i = 0; i < hist.counts.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f,%lld\n", hist.lo + width * static_cast<double>(i),
                  static_cast<long long>(hist.counts[i]));
    out += buf;
  }
  return out;
}

}  // namespace minclip
