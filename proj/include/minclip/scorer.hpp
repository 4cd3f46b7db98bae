#pragma once

#include <memory>
#include <vector>

#include "minclip/model.hpp"

namespace minclip {

// Token-level conditional distribution p(t_i | t_<i). Implementations return
// one log-probability per scored token: positions 1..true_len-1 (BOS is
// conditioned on, never scored).
class LanguageModelScorer {
 public:
  virtual ~LanguageModelScorer() = default;
  virtual std::vector<double> token_logprobs(const TokenSequence& seq) const = 0;
};

// sum_i log p(t_i | t_1..t_{i-1})
double log_likelihood(const TokenSequence& seq, const LanguageModelScorer& scorer);

class UniformScorer : public LanguageModelScorer {
 public:
  explicit UniformScorer(int vocab_size) : vocab_size_(vocab_size) {}
  std::vector<double> token_logprobs(const TokenSequence& seq) const override;

 private:
  int vocab_size_;
};

// Causal text tower + LM head. The model must hold pretrained weights; mask
// kinds are ignored (scoring always runs left-to-right).
class TowerScorer : public LanguageModelScorer {
 public:
  explicit TowerScorer(TwoTowerModel model) : model_(std::move(model)) {}

  std::vector<double> token_logprobs(const TokenSequence& seq) const override;

  // Full next-token distribution after `prefix_len` tokens of seq; exposed so
  // tests can check normalization.
  std::vector<double> next_token_distribution(const TokenSequence& seq, int prefix_len) const;

 private:
  mutable TwoTowerModel model_;
};

}  // namespace minclip
