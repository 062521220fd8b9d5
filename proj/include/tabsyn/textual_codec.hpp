#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tabsyn/dataset.hpp"

namespace tabsyn {

// A permutation of column indices; clauses are emitted in this order.
struct ColumnOrder {
  std::vector<std::size_t> permutation;

  static ColumnOrder identity(std::size_t k);
  bool is_valid_for(const TableSchema& schema) const;
  bool operator==(const ColumnOrder&) const = default;
};

// "<col> is <value>" clauses joined by ", ".
struct RowSentence {
  std::string text;
  bool operator==(const RowSentence&) const = default;
};

inline constexpr std::string_view kClauseSeparator = ", ";
inline constexpr std::string_view kPredicate = " is ";
inline constexpr int kNumberPrecision = 4;

enum class ParseFailureReason { missing_column, duplicate_column, unknown_column, bad_category, bad_number };

inline constexpr std::size_t kParseFailureReasonCount = 5;
std::string_view to_string(ParseFailureReason reason);

struct ParseFailure {
  ParseFailureReason reason;
  std::string detail;
};

using ParseResult = std::variant<Row, ParseFailure>;

// Fixed four-digit rendering; "-0.0000" is folded to "0.0000".
std::string format_value(double value);

// Requires an encoded row (categories as indices, numbers as doubles) with no
// missing cells. Throws DataError otherwise.
RowSentence row_to_text(const Row& row, const TableSchema& schema, const ColumnOrder& order);

// Seeded Fisher-Yates over the schema's columns.
ColumnOrder permute_order(const TableSchema& schema, std::uint64_t seed);

// Inverse of row_to_text. Never throws: malformed text yields ParseFailure.
ParseResult text_to_row(std::string_view sentence, const TableSchema& schema);

bool validate_row(const Row& row, const TableSchema& schema);

}  // namespace tabsyn
