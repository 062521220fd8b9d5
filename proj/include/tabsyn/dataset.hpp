#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace tabsyn {

enum class ColumnKind { categorical, continuous };
enum class Task { classification, regression };

std::string_view to_string(ColumnKind kind);
std::string_view to_string(Task task);
ColumnKind column_kind_from_string(std::string_view text);
Task task_from_string(std::string_view text);

// One column of a table. Categorical columns populate `categories`;
// continuous columns populate the normalization statistics, which are the
// population mean / standard deviation of the training split once the table
// has been normalized.
struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::vector<std::string> categories;
  double mean = 0.0;
  double std_dev = 1.0;
  bool zero_variance = false;

  bool operator==(const ColumnSpec&) const = default;
};

struct TableSchema {
  std::vector<ColumnSpec> columns;
  std::string target_column;
  Task task = Task::classification;

  std::size_t size() const { return columns.size(); }
  std::optional<std::size_t> find(std::string_view name) const;
  // Throws DataError when the column does not exist.
  std::size_t index_of(std::string_view name) const;
  std::size_t target_index() const { return index_of(target_column); }

  // Checks unique names, target presence, task/target agreement, category
  // vocabularies and that every name and category survives the textual
  // "<col> is <value>" encoding. Throws DataError.
  void validate() const;

  bool operator==(const TableSchema&) const = default;
};

// True when `text` can appear as a column name or category value inside a
// row sentence without breaking the clause grammar.
bool is_sentence_safe(std::string_view text);

struct Category {
  std::uint32_t index = 0;
  auto operator<=>(const Category&) const = default;
};

// A cell is missing, an encoded category, a number, or raw (not yet encoded)
// categorical text.
using Cell = std::variant<std::monostate, Category, double, std::string>;
using Row = std::vector<Cell>;

inline bool is_missing(const Cell& cell) { return std::holds_alternative<std::monostate>(cell); }

struct DataTable {
  TableSchema schema;
  std::vector<Row> rows;
  // Continuous cells are z-scores w.r.t. the schema statistics.
  bool normalized = false;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  bool operator==(const DataTable&) const = default;
};

// ---------------------------------------------------------------------------
// Ingestion

// RFC-4180 records (quoted fields, doubled quotes, embedded newlines, CRLF).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

// Infers the schema from raw text records (first record is the header).
// A column is continuous iff every non-empty cell parses as a finite number;
// a classification target is always categorical. Categorical cells stay raw
// text; empty cells become missing.
DataTable table_from_records(const std::vector<std::vector<std::string>>& records,
                             std::string_view target, Task task);

DataTable load_csv(const std::filesystem::path& path, std::string_view target, Task task);
// Reads a CSV whose header matches `schema`, drops incomplete rows and
// encodes categories against it (unseen values are an error). Original units.
DataTable load_csv_with_schema(const std::filesystem::path& path, const TableSchema& schema);

// Writes categories as text and continuous cells with round-trip precision.
void write_csv(const DataTable& table, const std::filesystem::path& path);
std::string to_csv(const DataTable& table);

// ---------------------------------------------------------------------------
// Preprocessing

DataTable drop_incomplete(const DataTable& table);

// Ordinal encoding with category lists rebuilt in first-occurrence order.
DataTable encode_categoricals(const DataTable& table);
// Ordinal encoding against an existing vocabulary; unseen values are an error
// naming the value.
DataTable encode_categoricals(const DataTable& table, const TableSchema& reference);

// z-scores every continuous column with population statistics taken from
// `stats_source`. Zero-variance columns map to 0 and are flagged.
DataTable normalize_continuous(const DataTable& table, const DataTable& stats_source);

// Re-applies the statistics already stored in the schema.
DataTable apply_normalization(const DataTable& table);
// Maps z-scores back to original units.
DataTable denormalize(const DataTable& table);
DataTable as_normalized(const DataTable& table);

struct Split {
  DataTable train;
  DataTable test;
};

// Seeded Fisher-Yates permutation; the first round(test_fraction * n)
// permuted rows form the test split.
Split shuffle_split(const DataTable& table, double test_fraction, std::uint64_t seed);

// drop_incomplete -> encode_categoricals -> normalize_continuous (statistics
// of the rows that the split assigns to train) -> shuffle_split.
Split preprocess(const DataTable& raw, double test_fraction, std::uint64_t seed);

DataTable select_rows(const DataTable& table, const std::vector<std::size_t>& indices);
DataTable take_rows(const DataTable& table, std::size_t count);

// Row with categorical cells replaced by text, for display and CSV export.
std::vector<std::string> render_row(const Row& row, const TableSchema& schema);

// ---------------------------------------------------------------------------
// Schema sidecar

nlohmann::json schema_to_json(const TableSchema& schema);
TableSchema schema_from_json(const nlohmann::json& json);
void save_schema(const TableSchema& schema, const std::filesystem::path& path);
TableSchema load_schema(const std::filesystem::path& path);

}  // namespace tabsyn
