#include "pllm/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

namespace pllm {

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> r = {"<pad>", "<bos>", "<eos>", "<sep>", "<modal>", "<unk>"};
  return r;
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

}  // namespace

Vocab::Vocab() : id_to_token_(reserved_tokens()) {
  for (int i = 0; i < static_cast<int>(id_to_token_.size()); ++i)
    token_to_id_[id_to_token_[static_cast<size_t>(i)]] = i;
}

Vocab Vocab::build(const std::vector<std::string>& corpus_texts) {
  std::set<std::string> unique;
  for (const auto& text : corpus_texts)
    for (auto& tok : split_tokens(text)) unique.insert(tok);
  for (const auto& r : reserved_tokens()) unique.erase(r);

  Vocab v;
  for (const auto& tok : unique) {
    v.token_to_id_[tok] = static_cast<int>(v.id_to_token_.size());
    v.id_to_token_.push_back(tok);
  }
  return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> id_to_token) {
  if (id_to_token.size() < reserved_tokens().size())
    throw std::runtime_error("vocab table too small for reserved tokens");
  for (size_t i = 0; i < reserved_tokens().size(); ++i)
    if (id_to_token[i] != reserved_tokens()[i])
      throw std::runtime_error("vocab table reserved slots are corrupt");
  Vocab v;
  v.id_to_token_ = std::move(id_to_token);
  v.token_to_id_.clear();
  for (int i = 0; i < static_cast<int>(v.id_to_token_.size()); ++i)
    v.token_to_id_[v.id_to_token_[static_cast<size_t>(i)]] = i;
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return id_to_token_[static_cast<size_t>(id)];
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  const auto& reserved = reserved_tokens();
  size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }
    if (c == '<') {
      bool matched = false;
      for (const auto& r : reserved) {
        if (text.compare(i, r.size(), r) == 0) {
          out.push_back(r);
          i += r.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    if (is_word_char(c)) {
      std::string tok;
      while (i < text.size() &&
             (is_word_char(text[i]) ||
              (text[i] == '-' && i + 1 < text.size() && is_word_char(text[i + 1]) &&
               !tok.empty()))) {
        tok += text[i];
        ++i;
      }
      out.push_back(std::move(tok));
      continue;
    }
    out.push_back(std::string(1, c));
    ++i;
  }
  return out;
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab) {
  std::vector<int> ids;
  for (auto& tok : split_tokens(text)) ids.push_back(vocab.id(tok));
  return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

}  // namespace pllm
