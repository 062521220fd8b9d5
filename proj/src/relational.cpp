#include "tabsyn/relational.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

namespace tabsyn {

TableSchema without_column(const TableSchema& schema, std::string_view name) {
  if (schema.target_column == name) {
    throw DataError("key column '" + std::string(name) + "' cannot be the target");
  }
  TableSchema out = schema;
  out.columns.erase(out.columns.begin() + static_cast<std::ptrdiff_t>(schema.index_of(name)));
  return out;
}

DataTable drop_column(const DataTable& table, std::string_view name) {
  const auto c = table.schema.index_of(name);
  DataTable out{without_column(table.schema, name), table.rows, table.normalized};
  for (auto& row : out.rows) row.erase(row.begin() + static_cast<std::ptrdiff_t>(c));
  return out;
}

std::vector<std::int64_t> key_values(const DataTable& table, std::string_view column) {
  const auto c = table.schema.index_of(column);
  std::vector<std::int64_t> keys;
  keys.reserve(table.size());
  for (const auto& row : table.rows) {
    const auto* value = std::get_if<double>(&row[c]);
    if (!value || *value != std::floor(*value)) {
      throw DataError("key column '" + std::string(column) + "' holds a non-integral value");
    }
    keys.push_back(static_cast<std::int64_t>(*value));
  }
  return keys;
}

TableSchema RelationalSchema::parent_content() const { return without_column(parent, key_column); }
TableSchema RelationalSchema::child_content() const { return without_column(child, foreign_key_column); }

void RelationalSchema::validate() const {
  parent.validate();
  child.validate();
  for (const auto* pair : {&parent, &child}) {
    const auto& name = pair == &parent ? key_column : foreign_key_column;
    const auto c = pair->index_of(name);
    if (pair->columns[c].kind != ColumnKind::continuous) {
      throw DataError("key column '" + name + "' must be numeric");
    }
  }
  if (parent_content().columns.empty() || child_content().columns.empty()) {
    throw DataError("parent and child tables need at least one non-key column");
  }
  if (max_children_per_parent < 1) throw DataError("max_children_per_parent must be >= 1");
}

nlohmann::json to_json(const RelationalSchema& schema) {
  return {{"parent", schema_to_json(schema.parent)},
          {"key_column", schema.key_column},
          {"child", schema_to_json(schema.child)},
          {"foreign_key_column", schema.foreign_key_column},
          {"max_children_per_parent", schema.max_children_per_parent}};
}

RelationalSchema relational_schema_from_json(const nlohmann::json& json) {
  RelationalSchema schema;
  try {
    schema.parent = schema_from_json(json.at("parent"));
    schema.key_column = json.at("key_column").get<std::string>();
    schema.child = schema_from_json(json.at("child"));
    schema.foreign_key_column = json.at("foreign_key_column").get<std::string>();
    schema.max_children_per_parent = json.value("max_children_per_parent", 16u);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed relational schema JSON: ") + e.what());
  }
  schema.validate();
  return schema;
}

namespace {

// Re-inserts the key column of `full` around the (normalized) content table.
DataTable merge_key(const DataTable& full, const DataTable& content, std::string_view key) {
  const auto key_index = full.schema.index_of(key);
  DataTable out;
  out.schema = full.schema;
  out.normalized = content.normalized;
  for (std::size_t c = 0, k = 0; c < out.schema.size(); ++c) {
    if (c == key_index) {
      out.schema.columns[c].mean = 0.0;
      out.schema.columns[c].std_dev = 1.0;
      out.schema.columns[c].zero_variance = false;
      continue;
    }
    out.schema.columns[c] = content.schema.columns[k++];
  }
  out.rows.reserve(content.size());
  for (std::size_t r = 0; r < content.size(); ++r) {
    Row row;
    row.reserve(out.schema.size());
    for (std::size_t c = 0, k = 0; c < out.schema.size(); ++c) {
      row.push_back(c == key_index ? full.rows[r][c] : content.rows[r][k++]);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

DataTable prepare_side(const DataTable& raw, std::string_view key) {
  const auto encoded = encode_categoricals(drop_incomplete(raw));
  const auto content = drop_column(encoded, key);
  return merge_key(encoded, normalize_continuous(content, content), key);
}

std::unordered_map<std::int64_t, std::size_t> index_parents(const DataTable& parent, const RelationalSchema& schema) {
  std::unordered_map<std::int64_t, std::size_t> index;
  const auto keys = key_values(parent, schema.key_column);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (!index.emplace(keys[i], i).second) {
      throw DataError("duplicate parent key " + std::to_string(keys[i]));
    }
  }
  return index;
}

}  // namespace

PreparedRelational prepare_relational(const RelationalTables& raw, const RelationalSchema& schema) {
  schema.validate();
  PreparedRelational out;
  out.tables.parent = prepare_side(raw.parent, schema.key_column);
  out.tables.child = prepare_side(raw.child, schema.foreign_key_column);
  out.schema = schema;
  out.schema.parent = out.tables.parent.schema;
  out.schema.child = out.tables.child.schema;
  check_referential_integrity(out.tables, out.schema);
  return out;
}

void check_referential_integrity(const RelationalTables& tables, const RelationalSchema& schema) {
  const auto parents = index_parents(tables.parent, schema);
  for (auto fk : key_values(tables.child, schema.foreign_key_column)) {
    if (!parents.count(fk)) throw DataError("dangling foreign key " + std::to_string(fk));
  }
}

std::uint32_t ChildCountDistribution::sample(std::mt19937_64& rng) const {
  if (probabilities.empty()) throw ConfigError("empty children-per-parent distribution");
  std::discrete_distribution<std::uint32_t> pick(probabilities.begin(), probabilities.end());
  return pick(rng);
}

double ChildCountDistribution::total_variation(const ChildCountDistribution& other) const {
  const auto n = std::max(probabilities.size(), other.probabilities.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = i < probabilities.size() ? probabilities[i] : 0.0;
    const double q = i < other.probabilities.size() ? other.probabilities[i] : 0.0;
    sum += std::abs(p - q);
  }
  return 0.5 * sum;
}

ChildCountDistribution empirical_children_dist(const std::vector<std::int64_t>& parent_keys,
                                               const std::vector<std::int64_t>& foreign_keys) {
  if (parent_keys.empty()) throw DataError("no parents to estimate children per parent");
  std::map<std::int64_t, std::size_t> counts;
  for (auto key : parent_keys) counts[key] = 0;
  for (auto fk : foreign_keys) {
    auto it = counts.find(fk);
    if (it == counts.end()) throw DataError("dangling foreign key " + std::to_string(fk));
    ++it->second;
  }
  ChildCountDistribution dist;
  for (const auto& [key, count] : counts) {
    if (dist.probabilities.size() <= count) dist.probabilities.resize(count + 1, 0.0);
    dist.probabilities[count] += 1.0;
  }
  for (auto& p : dist.probabilities) p /= static_cast<double>(parent_keys.size());
  return dist;
}

ChildCountDistribution estimate_children_dist(const RelationalTables& tables, const RelationalSchema& schema) {
  auto dist = empirical_children_dist(key_values(tables.parent, schema.key_column),
                                      key_values(tables.child, schema.foreign_key_column));
  const auto cap = static_cast<std::size_t>(schema.max_children_per_parent);
  if (dist.probabilities.size() > cap + 1) {
    for (std::size_t i = cap + 1; i < dist.probabilities.size(); ++i) dist.probabilities[cap] += dist.probabilities[i];
    dist.probabilities.resize(cap + 1);
  }
  return dist;
}

namespace {

RowSentence content_sentence(const Row& content_row, const TableSchema& content_schema) {
  return row_to_text(content_row, content_schema, ColumnOrder::identity(content_schema.size()));
}

}  // namespace

Vocab build_relational_vocab(const RelationalTables& tables, const RelationalSchema& schema) {
  std::vector<RowSentence> corpus;
  const auto parent = drop_column(tables.parent, schema.key_column);
  const auto child = drop_column(tables.child, schema.foreign_key_column);
  for (const auto& row : parent.rows) corpus.push_back(content_sentence(row, parent.schema));
  for (const auto& row : child.rows) corpus.push_back(content_sentence(row, child.schema));
  return build_vocab(corpus, true);
}

std::vector<TokenSequence> parent_sequences(const DataTable& parent, const RelationalSchema& schema,
                                            const Vocab& vocab) {
  const auto content = drop_column(parent, schema.key_column);
  std::vector<TokenSequence> out;
  out.reserve(content.size());
  for (const auto& row : content.rows) out.push_back(encode(content_sentence(row, content.schema), vocab, true));
  return out;
}

std::vector<TrainingExample> child_examples(const RelationalTables& tables, const RelationalSchema& schema,
                                            const Vocab& vocab) {
  const auto parents = index_parents(tables.parent, schema);
  const auto parent_content = drop_column(tables.parent, schema.key_column);
  const auto child_content = drop_column(tables.child, schema.foreign_key_column);
  const auto fks = key_values(tables.child, schema.foreign_key_column);
  const auto sep = vocab.sep_id();
  std::vector<TrainingExample> out;
  out.reserve(fks.size());
  for (std::size_t r = 0; r < fks.size(); ++r) {
    const auto it = parents.find(fks[r]);
    if (it == parents.end()) throw DataError("dangling foreign key " + std::to_string(fks[r]));
    const auto parent_tokens =
        encode(content_sentence(parent_content.rows[it->second], parent_content.schema), vocab, false);
    const auto child_tokens = encode(content_sentence(child_content.rows[r], child_content.schema), vocab, false);
    TrainingExample example;
    auto& ids = example.tokens.ids;
    ids.push_back(kBos);
    ids.insert(ids.end(), parent_tokens.ids.begin(), parent_tokens.ids.end());
    const auto sep_position = ids.size();
    ids.push_back(sep);
    ids.insert(ids.end(), child_tokens.ids.begin(), child_tokens.ids.end());
    ids.push_back(kEos);
    example.loss_mask.assign(ids.size() - 1, 0);
    for (std::size_t i = sep_position; i < example.loss_mask.size(); ++i) example.loss_mask[i] = 1;
    out.push_back(std::move(example));
  }
  return out;
}

namespace {

ModelConfig sized(const ModelConfig& architecture, const Vocab& vocab, std::size_t longest) {
  ModelConfig config = architecture;
  config.vocab_size = static_cast<std::uint32_t>(vocab.size());
  config.context_len = static_cast<std::uint32_t>(longest);
  return config;
}

}  // namespace

TransformerModel fit_parent(const DataTable& parent, const RelationalSchema& schema, const Vocab& vocab,
                            const ModelConfig& architecture, const TrainConfig& train_config, TrainTrace* trace) {
  const auto corpus = parent_sequences(parent, schema, vocab);
  if (corpus.empty()) throw DataError("cannot train on an empty corpus");
  std::size_t longest = 0;
  for (const auto& sequence : corpus) longest = std::max(longest, sequence.size());
  auto result = train(init_model(sized(architecture, vocab, longest), train_config.seed), corpus, train_config);
  if (trace) *trace = result.trace;
  return std::move(result.model);
}

TransformerModel fit_child(const DataTable& child, const DataTable& parent, const RelationalSchema& schema,
                           const Vocab& vocab, const ModelConfig& architecture, const TrainConfig& train_config,
                           TrainTrace* trace) {
  const auto examples = child_examples(RelationalTables{parent, child}, schema, vocab);
  if (examples.empty()) throw DataError("cannot train on an empty corpus");
  std::size_t longest = 0;
  for (const auto& example : examples) longest = std::max(longest, example.tokens.size());
  // Room for the longest parent prefix paired with the longest child row.
  const auto parent_corpus = parent_sequences(parent, schema, vocab);
  std::size_t parent_longest = 0;
  for (const auto& sequence : parent_corpus) parent_longest = std::max(parent_longest, sequence.size());
  std::size_t child_longest = 0;
  for (const auto& example : examples) {
    const auto& ids = example.tokens.ids;
    const auto sep = std::find(ids.begin(), ids.end(), vocab.sep_id());
    child_longest = std::max(child_longest, static_cast<std::size_t>(ids.end() - sep));
  }
  longest = std::max(longest, parent_longest + child_longest);
  auto result = train(init_model(sized(architecture, vocab, longest), train_config.seed),
                      [&examples](std::size_t) { return examples; }, train_config);
  if (trace) *trace = result.trace;
  return std::move(result.model);
}

GeneratedRelational generate_relational(const RelationalModel& model, const RelationalSchema& schema,
                                        std::size_t n_parents, const ChildCountDistribution& children_dist,
                                        const SampleConfig& config) {
  if (n_parents < 1) throw ConfigError("n_parents must be >= 1");
  const auto parent_schema = schema.parent_content();
  const auto child_schema = schema.child_content();
  const auto sep = model.vocab.sep_id();
  GeneratedRelational out;

  const TokenSequence bos{{kBos}};
  auto parent_rows = sample_rows(model.parent_model, model.vocab, parent_schema, bos, "", n_parents, config, 0,
                                 out.parent_stats);

  std::seed_seq count_seed{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                           0x636e74u};
  std::mt19937_64 count_rng(count_seed);
  std::vector<std::uint32_t> counts(n_parents);
  for (auto& count : counts) count = children_dist.sample(count_rng);

  std::vector<Row> child_rows;
  std::vector<std::int64_t> foreign_keys;
  for (std::size_t p = 0; p < n_parents; ++p) {
    if (counts[p] == 0) continue;
    auto prompt = encode(content_sentence(parent_rows[p], parent_schema), model.vocab, false);
    prompt.ids.insert(prompt.ids.begin(), kBos);
    prompt.ids.push_back(sep);
    auto rows = sample_rows(model.child_decoder, model.vocab, child_schema, prompt, "", counts[p], config, p + 1,
                            out.child_stats);
    for (auto& row : rows) {
      child_rows.push_back(std::move(row));
      foreign_keys.push_back(static_cast<std::int64_t>(p + 1));
    }
  }

  auto assemble = [](const TableSchema& full, std::string_view key, const TableSchema& content_schema,
                     std::vector<Row> rows, const std::vector<std::int64_t>& keys) {
    const auto content = denormalize(DataTable{content_schema, std::move(rows), true});
    const auto key_index = full.index_of(key);
    DataTable table{full, {}, false};
    for (std::size_t r = 0; r < content.size(); ++r) {
      Row row = content.rows[r];
      row.insert(row.begin() + static_cast<std::ptrdiff_t>(key_index), Cell{static_cast<double>(keys[r])});
      table.rows.push_back(std::move(row));
    }
    return table;
  };
  std::vector<std::int64_t> parent_keys(n_parents);
  for (std::size_t p = 0; p < n_parents; ++p) parent_keys[p] = static_cast<std::int64_t>(p + 1);
  out.tables.parent = assemble(schema.parent, schema.key_column, parent_schema, std::move(parent_rows), parent_keys);
  out.tables.child =
      assemble(schema.child, schema.foreign_key_column, child_schema, std::move(child_rows), foreign_keys);
  return out;
}

void save_relational(const RelationalTables& tables, const RelationalSchema& schema,
                     const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  write_csv(tables.parent, directory / "parent.csv");
  write_csv(tables.child, directory / "child.csv");
  std::ofstream out(directory / "relational_schema.json");
  if (!out) throw DataError("cannot write relational schema in '" + directory.string() + "'");
  out << to_json(schema).dump(2) << '\n';
}

}  // namespace tabsyn
