#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "minclip/common.hpp"

namespace minclip {

struct EmptyCorpus : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Word-level vocabulary with fixed reserved ids.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  Vocabulary();

  int id(const std::string& token) const;  // kUnk when missing
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }
  bool contains(const std::string& token) const;

  void add_token(const std::string& token);

  std::vector<std::string> tokens() const { return id_to_token_; }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Lowercases and splits on whitespace; punctuation characters become
// standalone tokens.
std::vector<std::string> split_words(const std::string& text);

// Keeps the max_size-4 most frequent tokens; ties broken lexicographically.
Vocabulary build_vocabulary(const std::vector<std::string>& corpus, int max_size);

struct TokenSequence {
  std::vector<int> ids;  // BOS ... EOS PAD*, length == max_seq_len
  int true_len = 0;      // positions before the first PAD
};

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, int max_seq_len);

// Fraction of corpus word occurrences that map to a non-UNK id.
double vocab_coverage(const Vocabulary& vocab, const std::vector<std::string>& corpus);

// Vocabulary (de)serialization: one token per line in id order.
std::string vocab_to_text(const Vocabulary& vocab);
Vocabulary vocab_from_text(const std::string& text);

}  // namespace minclip
