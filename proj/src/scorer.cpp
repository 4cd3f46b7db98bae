#include "minclip/scorer.hpp"

#include <cmath>

namespace minclip {

double log_likelihood(const TokenSequence& seq, const LanguageModelScorer& scorer) {
  if (seq.true_len <= 0) throw std::invalid_argument("log_likelihood: empty sequence");
  double total = 0.0;
  for (const double lp : scorer.token_logprobs(seq)) total += lp;
  return total;
}

std::vector<double> UniformScorer::token_logprobs(const TokenSequence& seq) const {
  const int scored = std::max(0, seq.true_len - 1);
  return std::vector<double>(static_cast<size_t>(scored), -std::log(vocab_size_));
}

namespace {

// log softmax over one row of logits.
std::vector<double> row_log_softmax(const float* x, int n) {
  double mx = x[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, static_cast<double>(x[j]));
  double sum = 0.0;
  for (int j = 0; j < n; ++j) sum += std::exp(x[j] - mx);
  const double lse = std::log(sum) + mx;
  std::vector<double> out(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) out[static_cast<size_t>(j)] = x[j] - lse;
  return out;
}

}  // namespace

std::vector<double> TowerScorer::token_logprobs(const TokenSequence& seq) const {
  NoGradGuard ng;
  int T = 0;
  auto hidden = text_hidden_causal_t(model_, {seq}, &T);
  const int d = model_.config.embed_dim;
  auto logits = add(matmul(reshape(hidden, {T, d}), model_.lm_head_w), model_.lm_head_b);
  const int V = model_.config.vocab_size;
  std::vector<double> out;
  for (int i = 0; i + 1 < seq.true_len; ++i) {
    const auto lsm = row_log_softmax(logits.data().data() + static_cast<size_t>(i) * V, V);
    out.push_back(lsm[static_cast<size_t>(seq.ids[static_cast<size_t>(i) + 1])]);
  }
  return out;
}

std::vector<double> TowerScorer::next_token_distribution(const TokenSequence& seq,
                                                         int prefix_len) const {
  if (prefix_len < 1 || prefix_len > seq.true_len) {
    throw std::invalid_argument("next_token_distribution: bad prefix length");
  }
  NoGradGuard ng;
  int T = 0;
  auto hidden = text_hidden_causal_t(model_, {seq}, &T);
  const int d = model_.config.embed_dim;
  auto logits = add(matmul(reshape(hidden, {T, d}), model_.lm_head_w), model_.lm_head_b);
  const int V = model_.config.vocab_size;
  return row_log_softmax(logits.data().data() + static_cast<size_t>(prefix_len - 1) * V, V);
}

}  // namespace minclip
