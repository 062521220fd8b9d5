#include "tabsyn/textual_codec.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "tabsyn/error.hpp"

namespace tabsyn {

ColumnOrder ColumnOrder::identity(std::size_t k) {
  ColumnOrder order;
  order.permutation.resize(k);
  std::iota(order.permutation.begin(), order.permutation.end(), std::size_t{0});
  return order;
}

bool ColumnOrder::is_valid_for(const TableSchema& schema) const {
  if (permutation.size() != schema.size()) return false;
  std::vector<bool> seen(permutation.size(), false);
  for (auto index : permutation) {
    if (index >= seen.size() || seen[index]) return false;
    seen[index] = true;
  }
  return true;
}

std::string_view to_string(ParseFailureReason reason) {
  switch (reason) {
    case ParseFailureReason::missing_column: return "missing_column";
    case ParseFailureReason::duplicate_column: return "duplicate_column";
    case ParseFailureReason::unknown_column: return "unknown_column";
    case ParseFailureReason::bad_category: return "bad_category";
    case ParseFailureReason::bad_number: return "bad_number";
  }
  return "unknown";
}

std::string format_value(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.*f", kNumberPrecision, value);
  std::string text(buffer);
  if (text.front() == '-' && text.find_first_not_of("-0.") == std::string::npos) text.erase(0, 1);
  return text;
}

RowSentence row_to_text(const Row& row, const TableSchema& schema, const ColumnOrder& order) {
  if (row.size() != schema.size()) throw DataError("row arity does not match schema");
  if (!order.is_valid_for(schema)) throw DataError("column order is not a permutation of the schema");
  RowSentence sentence;
  for (std::size_t i = 0; i < order.permutation.size(); ++i) {
    const auto c = order.permutation[i];
    const auto& column = schema.columns[c];
    const auto& cell = row[c];
    if (i) sentence.text += kClauseSeparator;
    sentence.text += column.name;
    sentence.text += kPredicate;
    if (const auto* category = std::get_if<Category>(&cell)) {
      if (column.kind != ColumnKind::categorical || category->index >= column.categories.size()) {
        throw DataError("invalid category cell in column '" + column.name + "'");
      }
      sentence.text += column.categories[category->index];
    } else if (const auto* number = std::get_if<double>(&cell)) {
      if (column.kind != ColumnKind::continuous) {
        throw DataError("numeric cell in categorical column '" + column.name + "'");
      }
      sentence.text += format_value(*number);
    } else {
      throw DataError("missing or unencoded cell in column '" + column.name + "'");
    }
  }
  return sentence;
}

ColumnOrder permute_order(const TableSchema& schema, std::uint64_t seed) {
  auto order = ColumnOrder::identity(schema.size());
  std::mt19937_64 rng(seed);
  auto& p = order.permutation;
  for (std::size_t i = p.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(p[i - 1], p[pick(rng)]);
  }
  return order;
}

ParseResult text_to_row(std::string_view sentence, const TableSchema& schema) {
  Row row(schema.size(), Cell{std::monostate{}});
  std::vector<bool> seen(schema.size(), false);
  std::size_t start = 0;
  while (true) {
    const auto end = sentence.find(kClauseSeparator, start);
    const auto clause = sentence.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    const auto split = clause.find(kPredicate);
    if (split == std::string_view::npos) {
      return ParseFailure{ParseFailureReason::unknown_column, "clause without predicate: '" + std::string(clause) + "'"};
    }
    const auto name = clause.substr(0, split);
    const auto value = clause.substr(split + kPredicate.size());
    const auto column_index = schema.find(name);
    if (!column_index) {
      return ParseFailure{ParseFailureReason::unknown_column, std::string(name)};
    }
    const auto c = *column_index;
    if (seen[c]) return ParseFailure{ParseFailureReason::duplicate_column, std::string(name)};
    seen[c] = true;
    const auto& column = schema.columns[c];
    if (column.kind == ColumnKind::categorical) {
      bool found = false;
      for (std::size_t i = 0; i < column.categories.size(); ++i) {
        if (column.categories[i] == value) {
          row[c] = Category{static_cast<std::uint32_t>(i)};
          found = true;
          break;
        }
      }
      if (!found) return ParseFailure{ParseFailureReason::bad_category, std::string(value)};
    } else {
      double number = 0.0;
      const auto* first = value.data();
      const auto* last = value.data() + value.size();
      const auto [ptr, ec] = std::from_chars(first, last, number);
      if (value.empty() || ec != std::errc() || ptr != last || !std::isfinite(number)) {
        return ParseFailure{ParseFailureReason::bad_number, std::string(value)};
      }
      row[c] = number;
    }
    if (end == std::string_view::npos) break;
    start = end + kClauseSeparator.size();
  }
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (!seen[c]) return ParseFailure{ParseFailureReason::missing_column, schema.columns[c].name};
  }
  return row;
}

bool validate_row(const Row& row, const TableSchema& schema) {
  if (row.size() != schema.size()) return false;
  for (std::size_t c = 0; c < row.size(); ++c) {
    const auto& column = schema.columns[c];
    if (column.kind == ColumnKind::categorical) {
      const auto* category = std::get_if<Category>(&row[c]);
      if (!category || category->index >= column.categories.size()) return false;
    } else {
      const auto* number = std::get_if<double>(&row[c]);
      if (!number || !std::isfinite(*number)) return false;
    }
  }
  return true;
}

}  // namespace tabsyn
