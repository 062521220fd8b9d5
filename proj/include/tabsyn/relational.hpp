#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabsyn/dataset.hpp"
#include "tabsyn/sampler.hpp"
#include "tabsyn/trainer.hpp"

namespace tabsyn {

// Parent table keyed by `key_column`; child rows reference it through
// `foreign_key_column`. Key columns hold integral numbers and never enter the
// textual encoding.
struct RelationalSchema {
  TableSchema parent;
  std::string key_column;
  TableSchema child;
  std::string foreign_key_column;
  std::uint32_t max_children_per_parent = 16;

  TableSchema parent_content() const;
  TableSchema child_content() const;
  void validate() const;
  bool operator==(const RelationalSchema&) const = default;
};

nlohmann::json to_json(const RelationalSchema& schema);
RelationalSchema relational_schema_from_json(const nlohmann::json& json);

TableSchema without_column(const TableSchema& schema, std::string_view name);
DataTable drop_column(const DataTable& table, std::string_view name);
std::vector<std::int64_t> key_values(const DataTable& table, std::string_view column);

struct RelationalTables {
  DataTable parent;
  DataTable child;
};

// Drops incomplete rows, encodes categoricals and normalizes every
// non-key continuous column of both tables. The returned schema carries the
// statistics.
struct PreparedRelational {
  RelationalTables tables;
  RelationalSchema schema;
};
PreparedRelational prepare_relational(const RelationalTables& raw, const RelationalSchema& schema);

// Checks unique parent keys and that every foreign key resolves; throws
// DataError naming the first dangling key.
void check_referential_integrity(const RelationalTables& tables, const RelationalSchema& schema);

// Histogram of children per parent (index = count).
struct ChildCountDistribution {
  std::vector<double> probabilities;

  std::uint32_t sample(std::mt19937_64& rng) const;
  double total_variation(const ChildCountDistribution& other) const;
};

ChildCountDistribution estimate_children_dist(const RelationalTables& tables, const RelationalSchema& schema);
ChildCountDistribution empirical_children_dist(const std::vector<std::int64_t>& parent_keys,
                                               const std::vector<std::int64_t>& foreign_keys);

// Parent sentences in schema order; the shared vocabulary also covers child
// sentences and reserves the separator token.
Vocab build_relational_vocab(const RelationalTables& tables, const RelationalSchema& schema);

// Token sequences of the parent model: [BOS, parent sentence, EOS].
std::vector<TokenSequence> parent_sequences(const DataTable& parent, const RelationalSchema& schema,
                                            const Vocab& vocab);
// Child-decoder training examples: [BOS, parent sentence, SEP, child
// sentence, EOS] with the loss restricted to the child segment.
std::vector<TrainingExample> child_examples(const RelationalTables& tables, const RelationalSchema& schema,
                                            const Vocab& vocab);

// vocab_size and context_len are taken from the data; L, H, A and ffn_mult
// from `architecture`.
TransformerModel fit_parent(const DataTable& parent, const RelationalSchema& schema, const Vocab& vocab,
                            const ModelConfig& architecture, const TrainConfig& train_config,
                            TrainTrace* trace = nullptr);
TransformerModel fit_child(const DataTable& child, const DataTable& parent, const RelationalSchema& schema,
                           const Vocab& vocab, const ModelConfig& architecture, const TrainConfig& train_config,
                           TrainTrace* trace = nullptr);

struct RelationalModel {
  TransformerModel parent_model;
  TransformerModel child_decoder;
  Vocab vocab;
};

struct GeneratedRelational {
  RelationalTables tables;  // original units, keys 1..n_parents
  GenerationStats parent_stats;
  GenerationStats child_stats;
};

GeneratedRelational generate_relational(const RelationalModel& model, const RelationalSchema& schema,
                                        std::size_t n_parents, const ChildCountDistribution& children_dist,
                                        const SampleConfig& config);

// parent.csv, child.csv and relational_schema.json.
void save_relational(const RelationalTables& tables, const RelationalSchema& schema,
                     const std::filesystem::path& directory);

}  // namespace tabsyn
