#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace pllm {

// Word-level vocabulary with fixed reserved slots. Token order is persisted
// with checkpoints, so construction sorts the corpus tokens for stability.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;
  static constexpr int kModal = 4;
  static constexpr int kUnk = 5;
  static constexpr int kNumReserved = 6;

  Vocab();

  static Vocab build(const std::vector<std::string>& corpus_texts);
  static Vocab from_tokens(std::vector<std::string> id_to_token);

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// Splits into words ([A-Za-z0-9_] runs, hyphens kept between alphanumerics),
// single-character punctuation tokens, and the literal reserved markers
// ("<bos>", "<sep>", ...). Whitespace separates only.
std::vector<std::string> split_tokens(const std::string& text);

std::vector<int> tokenize(const std::string& text, const Vocab& vocab);

// Joins with single spaces; the inverse of tokenize up to whitespace.
std::string detokenize(const std::vector<int>& ids, const Vocab& vocab);

}  // namespace pllm
