#include "minclip/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace minclip {

namespace {
const std::string kReserved[4] = {"<pad>", "<unk>", "<bos>", "<eos>"};

bool is_punct_token_char(char c) {
  switch (c) {
    case '.':
    case ',':
    case '!':
    case '?':
    case ';':
    case ':':
      return true;
    default:
      return false;
  }
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '-';
}
}  // namespace

Vocabulary::Vocabulary() {
  for (const auto& t : kReserved) add_token(t);
}

void Vocabulary::add_token(const std::string& token) {
  if (token_to_id_.count(token)) return;
  token_to_id_[token] = static_cast<int>(id_to_token_.size());
  id_to_token_.push_back(token);
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("Vocabulary::token: bad id");
  return id_to_token_[static_cast<size_t>(id)];
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (is_word_char(c)) {
      cur.push_back(c);
    } else {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
      if (is_punct_token_char(c)) out.push_back(std::string(1, c));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Vocabulary build_vocabulary(const std::vector<std::string>& corpus, int max_size) {
  if (corpus.empty()) throw EmptyCorpus("build_vocabulary: empty corpus");
  std::map<std::string, std::int64_t> counts;  // ordered map keeps ties deterministic
  for (const auto& caption : corpus) {
    for (const auto& w : split_words(caption)) ++counts[w];
  }
  std::vector<std::pair<std::string, std::int64_t>> items(counts.begin(), counts.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  const int budget = std::max(0, max_size - 4);
  for (int i = 0; i < budget && i < static_cast<int>(items.size()); ++i) {
    v.add_token(items[static_cast<size_t>(i)].first);
  }
  return v;
}

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, int max_seq_len) {
  if (max_seq_len < 3) throw ConfigError("tokenize: max_seq_len must be >= 3");
  TokenSequence seq;
  seq.ids.reserve(static_cast<size_t>(max_seq_len));
  seq.ids.push_back(Vocabulary::kBos);
  for (const auto& w : split_words(text)) {
    if (static_cast<int>(seq.ids.size()) >= max_seq_len - 1) break;
    seq.ids.push_back(vocab.id(w));
  }
  seq.ids.push_back(Vocabulary::kEos);
  seq.true_len = static_cast<int>(seq.ids.size());
  seq.ids.resize(static_cast<size_t>(max_seq_len), Vocabulary::kPad);
  return seq;
}

double vocab_coverage(const Vocabulary& vocab, const std::vector<std::string>& corpus) {
  std::int64_t total = 0, known = 0;
  for (const auto& caption : corpus) {
    for (const auto& w : split_words(caption)) {
      ++total;
      if (vocab.contains(w)) ++known;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(known) / static_cast<double>(total);
}

std::string vocab_to_text(const Vocabulary& vocab) {
  std::string out;
  for (int i = 4; i < vocab.size(); ++i) {
    out += vocab.token(i);
    out += '\n';
  }
  return out;
}

Vocabulary vocab_from_text(const std::string& text) {
  Vocabulary v;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty()) v.add_token(line);
  }
  return v;
}

}  // namespace minclip
