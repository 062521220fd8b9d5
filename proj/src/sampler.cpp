#include "tabsyn/sampler.hpp"

#include <charconv>
#include <cmath>
#include <set>

namespace tabsyn {

void SampleConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be finite and > 0");
  if (max_attempts_per_row < 1) throw ConfigError("max_attempts_per_row must be >= 1");
}

nlohmann::json to_json(const SampleConfig& config) {
  return {{"temperature", config.temperature},
          {"max_tokens", config.max_tokens},
          {"max_attempts_per_row", config.max_attempts_per_row},
          {"seed", config.seed}};
}

std::uint64_t GenerationStats::total_rejections() const {
  std::uint64_t total = 0;
  for (auto count : rejections) total += count;
  return total;
}

double GenerationStats::rejection_rate() const {
  return attempts == 0 ? 0.0 : static_cast<double>(total_rejections()) / static_cast<double>(attempts);
}

void GenerationStats::merge(const GenerationStats& other) {
  rows_requested += other.rows_requested;
  rows_emitted += other.rows_emitted;
  attempts += other.attempts;
  for (std::size_t i = 0; i < rejections.size(); ++i) rejections[i] += other.rejections[i];
}

nlohmann::json to_json(const GenerationStats& stats) {
  nlohmann::json reasons = nlohmann::json::object();
  for (std::size_t i = 0; i < kParseFailureReasonCount; ++i) {
    reasons[std::string(to_string(static_cast<ParseFailureReason>(i)))] = stats.rejections[i];
  }
  return {{"rows_requested", stats.rows_requested},
          {"rows_emitted", stats.rows_emitted},
          {"attempts", stats.attempts},
          {"rejections", std::move(reasons)},
          {"rejection_rate", stats.rejection_rate()}};
}

GenerationStats generation_stats_from_json(const nlohmann::json& json) {
  GenerationStats stats;
  stats.rows_requested = json.at("rows_requested").get<std::uint64_t>();
  stats.rows_emitted = json.at("rows_emitted").get<std::uint64_t>();
  stats.attempts = json.at("attempts").get<std::uint64_t>();
  for (std::size_t i = 0; i < kParseFailureReasonCount; ++i) {
    stats.rejections[i] = json.at("rejections").at(std::string(to_string(static_cast<ParseFailureReason>(i))));
  }
  return stats;
}

TokenId sample_token(std::span<const float> logits, double temperature, std::mt19937_64& rng) {
  if (logits.empty()) throw ShapeError("cannot sample from empty logits");
  for (float value : logits) {
    if (!std::isfinite(value)) throw NumericError("non-finite logit");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  if (temperature < 1e-6) return static_cast<TokenId>(best);
  std::vector<double> probs(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp((static_cast<double>(logits[i]) - logits[best]) / temperature);
    sum += probs[i];
  }
  std::uniform_real_distribution<double> uniform(0.0, sum);
  double u = uniform(rng);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (u < probs[i]) return static_cast<TokenId>(i);
    u -= probs[i];
  }
  return static_cast<TokenId>(best);
}

TokenSequence generate_sentence(const TransformerModel& model, const TokenSequence& prompt,
                                const SampleConfig& config, std::mt19937_64& rng) {
  if (prompt.ids.empty() || prompt.ids.front() != kBos) throw ShapeError("prompt must begin with BOS");
  if (prompt.size() > model.config.context_len) throw ShapeError("prompt exceeds model context");
  TokenSequence sequence = prompt;
  for (std::uint32_t step = 0; step < config.max_tokens && sequence.size() < model.config.context_len; ++step) {
    const Eigen::VectorXf logits = last_logits(model, sequence);
    const auto next = sample_token(std::span<const float>(logits.data(), static_cast<std::size_t>(logits.size())),
                                   config.temperature, rng);
    sequence.ids.push_back(next);
    if (next == kEos) break;
  }
  return sequence;
}

TokenSequence generate_sentence(const TransformerModel& model, const TokenSequence& prompt,
                                const SampleConfig& config) {
  std::mt19937_64 rng(config.seed);
  return generate_sentence(model, prompt, config, rng);
}

std::vector<Row> sample_rows(const TransformerModel& model, const Vocab& vocab, const TableSchema& schema,
                             const TokenSequence& prompt, const std::string& text_prefix, std::size_t n_rows,
                             const SampleConfig& config, std::uint64_t stream, GenerationStats& stats) {
  config.validate();
  std::vector<Row> rows;
  rows.reserve(n_rows);
  stats.rows_requested += n_rows;
  for (std::size_t r = 0; r < n_rows; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r >> 32)};
    std::mt19937_64 rng(seq);
    bool emitted = false;
    for (std::uint32_t attempt = 0; attempt < config.max_attempts_per_row; ++attempt) {
      ++stats.attempts;
      auto sequence = generate_sentence(model, prompt, config, rng);
      sequence.ids.erase(sequence.ids.begin(), sequence.ids.begin() + static_cast<std::ptrdiff_t>(prompt.size()));
      std::string text = text_prefix;
      const auto continuation = decode(sequence, vocab);
      if (!text.empty() && !continuation.empty()) text.push_back(' ');
      text += continuation;
      auto parsed = text_to_row(text, schema);
      if (auto* failure = std::get_if<ParseFailure>(&parsed)) {
        ++stats.rejections[static_cast<std::size_t>(failure->reason)];
        continue;
      }
      rows.push_back(std::move(std::get<Row>(parsed)));
      ++stats.rows_emitted;
      emitted = true;
      break;
    }
    if (!emitted) {
      throw GenerationError("row " + std::to_string(r) + " exhausted " + std::to_string(config.max_attempts_per_row) +
                                " attempts",
                            stats);
    }
  }
  return rows;
}

GeneratedTable generate_table(const TransformerModel& model, const Vocab& vocab, const TableSchema& schema,
                              std::size_t n_rows, const SampleConfig& config) {
  return generate_conditional(model, vocab, schema, {}, n_rows, config);
}

namespace {

std::optional<double> parse_given_number(const std::string& text) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

}  // namespace

GeneratedTable generate_conditional(const TransformerModel& model, const Vocab& vocab, const TableSchema& schema,
                                    const std::vector<std::pair<std::string, std::string>>& givens,
                                    std::size_t n_rows, const SampleConfig& config) {
  if (n_rows < 1) throw ConfigError("n_rows must be >= 1");
  config.validate();

  // Given cells in both normalized (for the prompt) and original units.
  std::vector<std::pair<std::size_t, Cell>> fixed;
  std::set<std::size_t> seen;
  std::string prompt_text;
  for (const auto& [name, value] : givens) {
    const auto column_index = schema.find(name);
    if (!column_index) throw DataError("unknown column '" + name + "' in givens");
    const auto c = *column_index;
    if (!seen.insert(c).second) throw DataError("column '" + name + "' given twice");
    const auto& column = schema.columns[c];
    std::string rendered;
    if (column.kind == ColumnKind::categorical) {
      const auto it = std::find(column.categories.begin(), column.categories.end(), value);
      if (it == column.categories.end()) {
        throw DataError("value '" + value + "' not in categories of column '" + name + "'");
      }
      fixed.emplace_back(c, Category{static_cast<std::uint32_t>(it - column.categories.begin())});
      rendered = value;
    } else {
      const auto number = parse_given_number(value);
      if (!number) throw DataError("value '" + value + "' for column '" + name + "' is not a number");
      fixed.emplace_back(c, *number);
      rendered = format_value(column.zero_variance ? 0.0 : (*number - column.mean) / column.std_dev);
    }
    if (!prompt_text.empty()) prompt_text += kClauseSeparator;
    prompt_text += name;
    prompt_text += kPredicate;
    prompt_text += rendered;
  }

  GeneratedTable out;
  out.table.schema = schema;
  out.table.normalized = false;

  if (!givens.empty() && seen.size() == schema.size()) {
    Row row(schema.size());
    for (const auto& [c, cell] : fixed) row[c] = cell;
    out.table.rows.assign(n_rows, row);
    out.stats.rows_requested = out.stats.rows_emitted = out.stats.attempts = n_rows;
    return out;
  }

  if (!prompt_text.empty()) prompt_text += ",";
  TokenSequence prompt = encode(prompt_text, vocab, false);
  prompt.ids.insert(prompt.ids.begin(), kBos);

  auto rows = sample_rows(model, vocab, schema, prompt, prompt_text, n_rows, config, 0, out.stats);
  out.table = denormalize(DataTable{schema, std::move(rows), true});
  for (auto& row : out.table.rows) {
    for (const auto& [c, cell] : fixed) row[c] = cell;
  }
  return out;
}

}  // namespace tabsyn
