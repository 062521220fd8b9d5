#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "tabsyn/textual_codec.hpp"

namespace tabsyn {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::string_view kCommaToken = ",";
inline constexpr std::string_view kSepToken = "<sep>";

struct TokenSequence {
  std::vector<TokenId> ids;
  std::size_t size() const { return ids.size(); }
  bool operator==(const TokenSequence&) const = default;
};

// Word-level vocabulary. Ids 0-3 are PAD, BOS, EOS, UNK; optional reserved
// tokens (the relational separator) follow; corpus tokens are ordered by
// descending frequency, then lexicographically.
class Vocab {
 public:
  Vocab();

  TokenId id_of(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;   // throws ShapeError when out of range
  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  bool is_special(TokenId id) const { return id >= 0 && id < static_cast<TokenId>(special_count_); }
  TokenId sep_id() const;  // throws when the vocabulary has no separator

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& json);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  friend Vocab build_vocab(const std::vector<RowSentence>&, bool);
  void append(std::string token);

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::size_t special_count_ = 4;
};

// Whitespace-separated words; a trailing comma on a word is its own token.
std::vector<std::string> split_words(std::string_view text);

Vocab build_vocab(const std::vector<RowSentence>& corpus, bool reserve_separator = false);

TokenSequence encode(std::string_view text, const Vocab& vocab, bool add_specials);
inline TokenSequence encode(const RowSentence& sentence, const Vocab& vocab, bool add_specials) {
  return encode(sentence.text, vocab, add_specials);
}

// Strips specials, joins words with single spaces and attaches commas to the
// preceding word.
std::string decode(const TokenSequence& tokens, const Vocab& vocab);

}  // namespace tabsyn
