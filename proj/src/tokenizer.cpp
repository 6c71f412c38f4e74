#include "secokd/tasks/tokenizer.hpp"

#include <algorithm>
#include <stdexcept>

namespace secokd::tasks {

namespace {

bool is_punct(char c) { return c == '.' || c == ',' || c == '?' || c == ':'; }

}  // namespace

Tokenizer Tokenizer::build(std::vector<std::string> words) {
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());

  Tokenizer t;
  auto push = [&t](std::string tok) {
    if (t.ids_.count(tok)) return;
    t.ids_[tok] = static_cast<int>(t.tokens_.size());
    t.tokens_.push_back(std::move(tok));
  };
  push(std::string(kPad));
  push(std::string(kEndOfAnswer));
  push("\n");
  push(".");
  push(",");
  push("?");
  push(":");
  for (auto& w : words) push(std::move(w));

  t.pad_id_ = t.ids_.at(std::string(kPad));
  t.eoa_id_ = t.ids_.at(std::string(kEndOfAnswer));
  return t;
}

std::vector<std::string> Tokenizer::split(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&out, &word]() {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (char c : text) {
    if (c == ' ') {
      flush();
    } else if (c == '\n') {
      flush();
      out.emplace_back("\n");
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      word.push_back(c);
    }
  }
  flush();
  return out;
}

std::vector<int> Tokenizer::tokenize(std::string_view text) const {
  std::vector<int> out;
  for (const auto& tok : split(text)) {
    auto it = ids_.find(tok);
    if (it == ids_.end()) {
      throw std::invalid_argument("Tokenizer: token '" + tok + "' not in vocabulary");
    }
    out.push_back(it->second);
  }
  return out;
}

std::string Tokenizer::detokenize(std::span<const int> ids) const {
  std::string out;
  bool prev_newline = false;
  for (size_t i = 0; i < ids.size(); ++i) {
    const std::string& tok = token(ids[i]);
    const bool is_newline = tok == "\n";
    const bool is_punct_tok = tok.size() == 1 && is_punct(tok[0]);
    if (!out.empty() && !prev_newline && !is_newline && !is_punct_tok) out.push_back(' ');
    out += tok;
    prev_newline = is_newline;
  }
  return out;
}

int Tokenizer::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) {
    throw std::invalid_argument("Tokenizer: token '" + std::string(token) + "' not in vocabulary");
  }
  return it->second;
}

const std::string& Tokenizer::token(int id) const {
  if (id < 0 || id >= vocab_size()) throw std::invalid_argument("Tokenizer: id out of range");
  return tokens_[static_cast<size_t>(id)];
}

}  // namespace secokd::tasks
