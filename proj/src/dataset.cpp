#include "tabsyn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "tabsyn/error.hpp"

namespace tabsyn {

std::string_view to_string(ColumnKind kind) {
  return kind == ColumnKind::categorical ? "categorical" : "continuous";
}

std::string_view to_string(Task task) {
  return task == Task::classification ? "classification" : "regression";
}

ColumnKind column_kind_from_string(std::string_view text) {
  if (text == "categorical") return ColumnKind::categorical;
  if (text == "continuous") return ColumnKind::continuous;
  throw DataError("unknown column kind '" + std::string(text) + "'");
}

Task task_from_string(std::string_view text) {
  if (text == "classification") return Task::classification;
  if (text == "regression") return Task::regression;
  throw DataError("unknown task '" + std::string(text) + "'");
}

std::optional<std::size_t> TableSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t TableSchema::index_of(std::string_view name) const {
  if (auto index = find(name)) return *index;
  throw DataError("column '" + std::string(name) + "' not in schema");
}

bool is_sentence_safe(std::string_view text) {
  if (text.empty() || text.front() == ' ' || text.back() == ' ' || text.back() == ',') return false;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x20 || u == 0x7f) return false;
  }
  if (text.find("  ") != std::string_view::npos) return false;
  if (text.find(", ") != std::string_view::npos) return false;
  if (text.find(" is ") != std::string_view::npos) return false;
  if (text.size() >= 3 && text.substr(text.size() - 3) == " is") return false;
  return true;
}

void TableSchema::validate() const {
  std::set<std::string> names;
  for (const auto& column : columns) {
    if (!is_sentence_safe(column.name)) {
      throw DataError("column name '" + column.name + "' cannot be encoded as a clause subject");
    }
    if (!names.insert(column.name).second) throw DataError("duplicate column '" + column.name + "'");
    if (column.kind == ColumnKind::categorical) {
      if (column.categories.empty()) {
        throw DataError("categorical column '" + column.name + "' has no categories");
      }
      std::set<std::string> seen;
      for (const auto& category : column.categories) {
        if (!seen.insert(category).second) {
          throw DataError("duplicate category '" + category + "' in column '" + column.name + "'");
        }
        if (!is_sentence_safe(category)) {
          throw DataError("category '" + category + "' in column '" + column.name +
                          "' cannot be encoded as a clause object");
        }
      }
    } else if (!(column.std_dev >= 0.0)) {
      throw DataError("negative std_dev in column '" + column.name + "'");
    }
  }
  const auto target = find(target_column);
  if (!target) throw DataError("target column '" + target_column + "' not in schema");
  const auto kind = columns[*target].kind;
  if (task == Task::regression && kind != ColumnKind::continuous) {
    throw DataError("regression target '" + target_column + "' is not continuous");
  }
  if (task == Task::classification && kind != ColumnKind::categorical) {
    throw DataError("classification target '" + target_column + "' is not categorical");
  }
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) throw DataError("stray quote inside unquoted field");
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw DataError("unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

namespace {

std::optional<double> parse_number(std::string_view text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::string format_number(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

const std::string& category_text(const ColumnSpec& column, const Cell& cell) {
  const auto index = std::get<Category>(cell).index;
  if (index >= column.categories.size()) {
    throw DataError("category index out of range in column '" + column.name + "'");
  }
  return column.categories[index];
}

}  // namespace

DataTable table_from_records(const std::vector<std::vector<std::string>>& records,
                             std::string_view target, Task task) {
  if (records.empty()) throw DataError("CSV has no header row");
  const auto& header = records.front();
  DataTable table;
  table.schema.target_column = std::string(target);
  table.schema.task = task;
  for (const auto& name : header) {
    ColumnSpec column;
    column.name = name;
    table.schema.columns.push_back(std::move(column));
  }
  const std::size_t width = header.size();
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != width) {
      throw DataError("row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                      " fields, header has " + std::to_string(width));
    }
  }
  const auto target_index = table.schema.find(target);
  if (!target_index) throw DataError("target column '" + std::string(target) + "' not in header");

  for (std::size_t c = 0; c < width; ++c) {
    auto& column = table.schema.columns[c];
    bool numeric = !(task == Task::classification && c == *target_index);
    for (std::size_t r = 1; r < records.size() && numeric; ++r) {
      const auto& text = records[r][c];
      if (!text.empty() && !parse_number(text)) numeric = false;
    }
    column.kind = numeric ? ColumnKind::continuous : ColumnKind::categorical;
    if (!numeric) {
      for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& text = records[r][c];
        if (text.empty()) continue;
        if (std::find(column.categories.begin(), column.categories.end(), text) ==
            column.categories.end()) {
          column.categories.push_back(text);
        }
      }
    }
  }

  table.rows.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    Row row;
    row.reserve(width);
    for (std::size_t c = 0; c < width; ++c) {
      const auto& text = records[r][c];
      if (text.empty()) {
        row.emplace_back(std::monostate{});
      } else if (table.schema.columns[c].kind == ColumnKind::continuous) {
        row.emplace_back(*parse_number(text));
      } else {
        row.emplace_back(text);
      }
    }
    table.rows.push_back(std::move(row));
  }

  for (auto& column : table.schema.columns) {
    if (column.kind == ColumnKind::categorical && column.categories.empty()) {
      throw DataError("column '" + column.name + "' has no values");
    }
  }
  table.schema.validate();
  return table;
}

DataTable load_csv(const std::filesystem::path& path, std::string_view target, Task task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CSV file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return table_from_records(parse_csv(buffer.str()), target, task);
}

DataTable load_csv_with_schema(const std::filesystem::path& path, const TableSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CSV file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const auto records = parse_csv(buffer.str());
  if (records.empty()) throw DataError("CSV has no header row");
  const auto& header = records.front();
  if (header.size() != schema.size()) throw DataError("CSV '" + path.string() + "' has a different column count");
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] != schema.columns[c].name) {
      throw DataError("CSV column " + std::to_string(c) + " is '" + header[c] + "', expected '" +
                      schema.columns[c].name + "'");
    }
  }
  DataTable table{schema, {}, false};
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != header.size()) {
      throw DataError("CSV record " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) + " fields");
    }
    Row row;
    for (std::size_t c = 0; c < header.size(); ++c) {
      const auto& text = records[r][c];
      if (text.empty()) {
        row.emplace_back(std::monostate{});
      } else if (schema.columns[c].kind == ColumnKind::continuous) {
        const auto value = parse_number(text);
        if (!value) throw DataError("non-numeric value '" + text + "' in column '" + header[c] + "'");
        row.emplace_back(*value);
      } else {
        row.emplace_back(text);
      }
    }
    table.rows.push_back(std::move(row));
  }
  return encode_categoricals(drop_incomplete(table), schema);
}

std::vector<std::string> render_row(const Row& row, const TableSchema& schema) {
  std::vector<std::string> out;
  out.reserve(row.size());
  for (std::size_t c = 0; c < row.size(); ++c) {
    const auto& cell = row[c];
    if (is_missing(cell)) {
      out.emplace_back();
    } else if (const auto* text = std::get_if<std::string>(&cell)) {
      out.push_back(*text);
    } else if (std::holds_alternative<Category>(cell)) {
      out.push_back(category_text(schema.columns[c], cell));
    } else {
      out.push_back(format_number(std::get<double>(cell)));
    }
  }
  return out;
}

std::string to_csv(const DataTable& table) {
  auto quote = [](const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string quoted = "\"";
    for (char c : field) {
      if (c == '"') quoted.push_back('"');
      quoted.push_back(c);
    }
    quoted.push_back('"');
    return quoted;
  };
  std::string out;
  for (std::size_t c = 0; c < table.schema.size(); ++c) {
    if (c) out.push_back(',');
    out += quote(table.schema.columns[c].name);
  }
  out.push_back('\n');
  for (const auto& row : table.rows) {
    const auto fields = render_row(row, table.schema);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c) out.push_back(',');
      out += quote(fields[c]);
    }
    out.push_back('\n');
  }
  return out;
}

void write_csv(const DataTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write CSV file '" + path.string() + "'");
  out << to_csv(table);
}

// ---------------------------------------------------------------------------

DataTable drop_incomplete(const DataTable& table) {
  DataTable out{table.schema, {}, table.normalized};
  for (const auto& row : table.rows) {
    if (std::none_of(row.begin(), row.end(), is_missing)) out.rows.push_back(row);
  }
  return out;
}

namespace {

DataTable encode_with(const DataTable& table, const TableSchema& schema, bool rebuild) {
  DataTable out{schema, table.rows, table.normalized};
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto& column = out.schema.columns[c];
    if (column.kind != ColumnKind::categorical) continue;
    const bool already_encoded =
        std::all_of(out.rows.begin(), out.rows.end(),
                    [c](const Row& row) { return std::holds_alternative<Category>(row[c]); });
    if (already_encoded) continue;
    if (rebuild) column.categories.clear();
    std::unordered_map<std::string, std::uint32_t> lookup;
    for (std::size_t i = 0; i < column.categories.size(); ++i) {
      lookup.emplace(column.categories[i], static_cast<std::uint32_t>(i));
    }
    for (auto& row : out.rows) {
      auto& cell = row[c];
      const auto* text = std::get_if<std::string>(&cell);
      if (!text) throw DataError("missing or mixed cell in categorical column '" + column.name + "'");
      auto it = lookup.find(*text);
      if (it == lookup.end()) {
        if (!rebuild) {
          throw DataError("value '" + *text + "' not in categories of column '" + column.name + "'");
        }
        it = lookup.emplace(*text, static_cast<std::uint32_t>(column.categories.size())).first;
        column.categories.push_back(*text);
      }
      cell = Category{it->second};
    }
  }
  return out;
}

}  // namespace

DataTable encode_categoricals(const DataTable& table) {
  auto out = encode_with(table, table.schema, true);
  if (!out.rows.empty()) out.schema.validate();
  return out;
}

DataTable encode_categoricals(const DataTable& table, const TableSchema& reference) {
  if (reference.size() != table.schema.size()) throw DataError("reference schema arity mismatch");
  return encode_with(table, reference, false);
}

namespace {

void require_same_columns(const TableSchema& a, const TableSchema& b) {
  if (a.size() != b.size()) throw DataError("schemas differ in column count");
  for (std::size_t c = 0; c < a.size(); ++c) {
    if (a.columns[c].name != b.columns[c].name || a.columns[c].kind != b.columns[c].kind) {
      throw DataError("schemas differ at column '" + a.columns[c].name + "'");
    }
  }
}

double number_at(const Row& row, std::size_t c, const std::string& name) {
  const auto* value = std::get_if<double>(&row[c]);
  if (!value) throw DataError("non-numeric cell in continuous column '" + name + "'");
  return *value;
}

}  // namespace

DataTable normalize_continuous(const DataTable& table, const DataTable& stats_source) {
  require_same_columns(table.schema, stats_source.schema);
  if (table.normalized || stats_source.normalized) throw DataError("table is already normalized");
  DataTable out = table;
  out.normalized = true;
  for (std::size_t c = 0; c < out.schema.size(); ++c) {
    auto& column = out.schema.columns[c];
    if (column.kind != ColumnKind::continuous) continue;
    double mean = 0.0;
    double var = 0.0;
    const auto n = static_cast<double>(stats_source.size());
    if (n > 0) {
      for (const auto& row : stats_source.rows) mean += number_at(row, c, column.name);
      mean /= n;
      for (const auto& row : stats_source.rows) {
        const double d = number_at(row, c, column.name) - mean;
        var += d * d;
      }
      var /= n;
    }
    column.mean = mean;
    column.std_dev = std::sqrt(var);
    column.zero_variance = column.std_dev == 0.0;
  }
  return apply_normalization(DataTable{out.schema, table.rows, false});
}

DataTable apply_normalization(const DataTable& table) {
  if (table.normalized) throw DataError("table is already normalized");
  DataTable out = table;
  out.normalized = true;
  for (std::size_t c = 0; c < out.schema.size(); ++c) {
    const auto& column = out.schema.columns[c];
    if (column.kind != ColumnKind::continuous) continue;
    for (auto& row : out.rows) {
      const double v = number_at(row, c, column.name);
      row[c] = column.zero_variance ? 0.0 : (v - column.mean) / column.std_dev;
    }
  }
  return out;
}

DataTable denormalize(const DataTable& table) {
  if (!table.normalized) return table;
  DataTable out = table;
  out.normalized = false;
  for (std::size_t c = 0; c < out.schema.size(); ++c) {
    const auto& column = out.schema.columns[c];
    if (column.kind != ColumnKind::continuous) continue;
    for (auto& row : out.rows) {
      const double z = number_at(row, c, column.name);
      row[c] = column.zero_variance ? column.mean : z * column.std_dev + column.mean;
    }
  }
  return out;
}

DataTable as_normalized(const DataTable& table) {
  return table.normalized ? table : apply_normalization(table);
}

namespace {

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

}  // namespace

DataTable select_rows(const DataTable& table, const std::vector<std::size_t>& indices) {
  DataTable out{table.schema, {}, table.normalized};
  out.rows.reserve(indices.size());
  for (auto i : indices) out.rows.push_back(table.rows.at(i));
  return out;
}

DataTable take_rows(const DataTable& table, std::size_t count) {
  DataTable out{table.schema, {}, table.normalized};
  const auto n = std::min(count, table.size());
  out.rows.assign(table.rows.begin(), table.rows.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

Split shuffle_split(const DataTable& table, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw DataError("test_fraction must lie in (0, 1)");
  }
  if (table.empty()) throw DataError("cannot split an empty table");
  const auto order = seeded_permutation(table.size(), seed);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(table.size())));
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  return {select_rows(table, train), select_rows(table, test)};
}

Split preprocess(const DataTable& raw, double test_fraction, std::uint64_t seed) {
  const auto complete = drop_incomplete(raw);
  const auto encoded = encode_categoricals(complete);
  // The split depends only on (row count, seed), so the train rows are known
  // before normalization and supply its statistics.
  const auto stats_source = shuffle_split(encoded, test_fraction, seed).train;
  const auto normalized = normalize_continuous(encoded, stats_source);
  return shuffle_split(normalized, test_fraction, seed);
}

// ---------------------------------------------------------------------------

nlohmann::json schema_to_json(const TableSchema& schema) {
  nlohmann::json columns = nlohmann::json::array();
  for (const auto& column : schema.columns) {
    nlohmann::json entry{{"name", column.name}, {"kind", std::string(to_string(column.kind))}};
    if (column.kind == ColumnKind::categorical) {
      entry["categories"] = column.categories;
    } else {
      entry["mean"] = column.mean;
      entry["std_dev"] = column.std_dev;
      entry["zero_variance"] = column.zero_variance;
    }
    columns.push_back(std::move(entry));
  }
  return {{"columns", std::move(columns)},
          {"target_column", schema.target_column},
          {"task", std::string(to_string(schema.task))}};
}

TableSchema schema_from_json(const nlohmann::json& json) {
  TableSchema schema;
  try {
    for (const auto& entry : json.at("columns")) {
      ColumnSpec column;
      column.name = entry.at("name").get<std::string>();
      column.kind = column_kind_from_string(entry.at("kind").get<std::string>());
      if (column.kind == ColumnKind::categorical) {
        column.categories = entry.at("categories").get<std::vector<std::string>>();
      } else {
        column.mean = entry.at("mean").get<double>();
        column.std_dev = entry.at("std_dev").get<double>();
        column.zero_variance = entry.value("zero_variance", false);
      }
      schema.columns.push_back(std::move(column));
    }
    schema.target_column = json.at("target_column").get<std::string>();
    schema.task = task_from_string(json.at("task").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed schema JSON: ") + e.what());
  }
  schema.validate();
  return schema;
}

void save_schema(const TableSchema& schema, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write schema file '" + path.string() + "'");
  out << schema_to_json(schema).dump(2) << '\n';
}

TableSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file '" + path.string() + "'");
  try {
    return schema_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed schema JSON: ") + e.what());
  }
}

}  // namespace tabsyn
