#include "tabsyn/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "tabsyn/error.hpp"

namespace tabsyn {

namespace {
const char* const kSpecialNames[] = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocab::Vocab() {
  for (const char* name : kSpecialNames) append(name);
}

void Vocab::append(std::string token) {
  const auto id = static_cast<TokenId>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(std::move(token));
}

TokenId Vocab::id_of(std::string_view token) const {
  const auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) != 0;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw ShapeError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(id_to_token_.size()));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

TokenId Vocab::sep_id() const {
  const auto it = token_to_id_.find(std::string(kSepToken));
  if (it == token_to_id_.end()) throw ConfigError("vocabulary has no separator token");
  return it->second;
}

nlohmann::json Vocab::to_json() const {
  return {{"tokens", id_to_token_}, {"special_count", special_count_}};
}

Vocab Vocab::from_json(const nlohmann::json& json) {
  Vocab vocab;
  std::vector<std::string> tokens;
  try {
    tokens = json.at("tokens").get<std::vector<std::string>>();
    vocab.special_count_ = json.value("special_count", std::size_t{4});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed vocabulary JSON: ") + e.what());
  }
  if (tokens.size() < 4 || !std::equal(std::begin(kSpecialNames), std::end(kSpecialNames), tokens.begin())) {
    throw DataError("vocabulary must start with <pad>, <bos>, <eos>, <unk>");
  }
  for (std::size_t i = 4; i < tokens.size(); ++i) {
    if (vocab.contains(tokens[i])) throw DataError("duplicate token '" + tokens[i] + "' in vocabulary");
    vocab.append(tokens[i]);
  }
  return vocab;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary '" + path.string() + "'");
  out << to_json().dump(2) << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary '" + path.string() + "'");
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed vocabulary JSON: ") + e.what());
  }
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    if (i >= text.size()) break;
    auto j = text.find(' ', i);
    if (j == std::string_view::npos) j = text.size();
    auto word = text.substr(i, j - i);
    if (word.size() > 1 && word.back() == ',') {
      words.emplace_back(word.substr(0, word.size() - 1));
      words.emplace_back(kCommaToken);
    } else {
      words.emplace_back(word);
    }
    i = j;
  }
  return words;
}

Vocab build_vocab(const std::vector<RowSentence>& corpus, bool reserve_separator) {
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus) {
    for (auto& word : split_words(sentence.text)) ++counts[word];
  }
  Vocab vocab;
  if (reserve_separator) {
    vocab.append(std::string(kSepToken));
    vocab.special_count_ = 5;
  }
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [word, count] : ordered) {
    if (!vocab.contains(word)) vocab.append(word);
  }
  return vocab;
}

TokenSequence encode(std::string_view text, const Vocab& vocab, bool add_specials) {
  TokenSequence out;
  if (add_specials) out.ids.push_back(kBos);
  for (const auto& word : split_words(text)) out.ids.push_back(vocab.id_of(word));
  if (add_specials) out.ids.push_back(kEos);
  return out;
}

std::string decode(const TokenSequence& tokens, const Vocab& vocab) {
  std::string text;
  for (auto id : tokens.ids) {
    const auto& word = vocab.token(id);
    if (vocab.is_special(id)) continue;
    if (word == kCommaToken) {
      text += word;
      continue;
    }
    if (!text.empty()) text.push_back(' ');
    text += word;
  }
  return text;
}

}  // namespace tabsyn
