#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace secokd::tasks {

// Word-level tokenizer over the closed task alphabet. Tokens are words,
// single punctuation marks (. , ? :), and the newline. Detokenization inserts
// single spaces between words and none around punctuation or newlines, which
// round-trips every string the generators, templates, and prompt formatter
// can produce.
class Tokenizer {
 public:
  static constexpr std::string_view kPad = "<pad>";
  static constexpr std::string_view kEndOfAnswer = "<eoa>";

  // Vocabulary = specials + punctuation + newline + sorted unique words.
  static Tokenizer build(std::vector<std::string> words);

  // Splits text into token strings without consulting a vocabulary.
  static std::vector<std::string> split(std::string_view text);

  std::vector<int> tokenize(std::string_view text) const;  // throws on unknown tokens
  std::string detokenize(std::span<const int> ids) const;

  int id(std::string_view token) const;  // throws on unknown
  const std::string& token(int id) const;
  int vocab_size() const { return static_cast<int>(tokens_.size()); }
  int pad_id() const { return pad_id_; }
  int eoa_id() const { return eoa_id_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int pad_id_ = -1;
  int eoa_id_ = -1;
};

}  // namespace secokd::tasks
