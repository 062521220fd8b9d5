#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tabsyn/error.hpp"
#include "tabsyn/textual_codec.hpp"
#include "tabsyn/transformer.hpp"

namespace tabsyn {

struct SampleConfig {
  double temperature = 0.7;
  std::uint32_t max_tokens = 256;  // also bounded by the model context
  std::uint32_t max_attempts_per_row = 20;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

nlohmann::json to_json(const SampleConfig& config);

struct GenerationStats {
  std::uint64_t rows_requested = 0;
  std::uint64_t rows_emitted = 0;
  std::uint64_t attempts = 0;
  std::array<std::uint64_t, kParseFailureReasonCount> rejections{};

  std::uint64_t total_rejections() const;
  double rejection_rate() const;  // rejections / attempts
  void merge(const GenerationStats& other);
  bool operator==(const GenerationStats&) const = default;
};

nlohmann::json to_json(const GenerationStats& stats);
GenerationStats generation_stats_from_json(const nlohmann::json& json);

class GenerationError : public Error {
 public:
  GenerationError(const std::string& message, GenerationStats stats) : Error(message), stats_(stats) {}
  const GenerationStats& stats() const { return stats_; }

 private:
  GenerationStats stats_;
};

// Draws from softmax(logits / temperature); argmax below 1e-6.
TokenId sample_token(std::span<const float> logits, double temperature, std::mt19937_64& rng);

// Appends sampled tokens to a BOS-led prompt until EOS, max_tokens, or the
// context is full.
TokenSequence generate_sentence(const TransformerModel& model, const TokenSequence& prompt,
                                const SampleConfig& config, std::mt19937_64& rng);
TokenSequence generate_sentence(const TransformerModel& model, const TokenSequence& prompt,
                                const SampleConfig& config);

struct GeneratedTable {
  DataTable table;  // original units
  GenerationStats stats;
};

// Rejection-sampled rows: each row gets an independent stream derived from
// (seed, stream, row index) and up to max_attempts_per_row tries. The decoded
// continuation is appended to `text_prefix` before parsing. Returns rows in the
// schema's normalized units. Throws GenerationError when a row exhausts its
// budget.
std::vector<Row> sample_rows(const TransformerModel& model, const Vocab& vocab, const TableSchema& schema,
                             const TokenSequence& prompt, const std::string& text_prefix, std::size_t n_rows,
                             const SampleConfig& config, std::uint64_t stream, GenerationStats& stats);

GeneratedTable generate_table(const TransformerModel& model, const Vocab& vocab, const TableSchema& schema,
                              std::size_t n_rows, const SampleConfig& config);

// Givens are (column, value text) pairs; continuous values are in original
// units. Emitted rows carry the givens verbatim.
GeneratedTable generate_conditional(const TransformerModel& model, const Vocab& vocab, const TableSchema& schema,
                                    const std::vector<std::pair<std::string, std::string>>& givens,
                                    std::size_t n_rows, const SampleConfig& config);

}  // namespace tabsyn
