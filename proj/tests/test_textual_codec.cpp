#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "doctest.h"
#include "tabsyn/error.hpp"
#include "tabsyn/textual_codec.hpp"

using namespace tabsyn;

namespace {

TableSchema person_schema() {
  TableSchema schema;
  schema.columns = {ColumnSpec{"age", ColumnKind::continuous, {}, 0.0, 1.0, false},
                    ColumnSpec{"sex", ColumnKind::categorical, {"female", "male"}, 0.0, 1.0, false}};
  schema.target_column = "sex";
  schema.task = Task::classification;
  return schema;
}

Row person(double age, std::uint32_t sex) { return Row{age, Category{sex}}; }

ParseFailureReason failure_of(const ParseResult& result) {
  REQUIRE(std::holds_alternative<ParseFailure>(result));
  return std::get<ParseFailure>(result).reason;
}

}  // namespace

TEST_CASE("row_to_text") {
  const auto schema = person_schema();
  SUBCASE("identity order") {
    CHECK(row_to_text(person(34, 1), schema, ColumnOrder::identity(2)).text == "age is 34.0000, sex is male");
  }
  SUBCASE("permuted order") {
    CHECK(row_to_text(person(34, 1), schema, ColumnOrder{{1, 0}}).text == "sex is male, age is 34.0000");
  }
  SUBCASE("single column has no trailing comma") {
    TableSchema one;
    one.columns = {ColumnSpec{"sex", ColumnKind::categorical, {"female", "male"}, 0.0, 1.0, false}};
    one.target_column = "sex";
    CHECK(row_to_text(Row{Category{0}}, one, ColumnOrder::identity(1)).text == "sex is female");
  }
  SUBCASE("missing cell is an error") {
    CHECK_THROWS_AS(row_to_text(Row{std::monostate{}, Category{0}}, schema, ColumnOrder::identity(2)), DataError);
  }
  SUBCASE("negative zero folds") { CHECK(format_value(-0.00001) == "0.0000"); }
}

TEST_CASE("permute_order") {
  TableSchema schema;
  for (int c = 0; c < 5; ++c) schema.columns.push_back(ColumnSpec{"c" + std::to_string(c)});
  schema.target_column = "c0";
  schema.task = Task::regression;

  SUBCASE("k = 1") {
    TableSchema one;
    one.columns = {ColumnSpec{"x"}};
    CHECK(permute_order(one, 99).permutation == std::vector<std::size_t>{0});
  }
  SUBCASE("deterministic per seed") {
    CHECK(permute_order(schema, 5) == permute_order(schema, 5));
    CHECK(permute_order(schema, 5).is_valid_for(schema));
  }
  SUBCASE("uniform over the 6 permutations of k = 3") {
    TableSchema three;
    three.columns = {ColumnSpec{"a"}, ColumnSpec{"b"}, ColumnSpec{"c"}};
    std::map<std::vector<std::size_t>, int> counts;
    const int draws = 6000;
    for (int s = 0; s < draws; ++s) ++counts[permute_order(three, static_cast<std::uint64_t>(s)).permutation];
    CHECK(counts.size() == 6);
    double chi2 = 0.0;
    for (const auto& [perm, n] : counts) {
      CHECK(std::abs(n / static_cast<double>(draws) - 1.0 / 6.0) < 0.02);
      chi2 += (n - 1000.0) * (n - 1000.0) / 1000.0;
    }
    // 5 degrees of freedom, 99.9% quantile 20.5.
    CHECK(chi2 < 20.5);
  }
}

TEST_CASE("text_to_row") {
  const auto schema = person_schema();
  SUBCASE("clause order does not matter") {
    const auto a = text_to_row("sex is male, age is 34.0000", schema);
    const auto b = text_to_row("age is 34.0000, sex is male", schema);
    REQUIRE(std::holds_alternative<Row>(a));
    CHECK(std::get<Row>(a) == person(34, 1));
    CHECK(std::get<Row>(b) == person(34, 1));
  }
  SUBCASE("failure reasons") {
    CHECK(failure_of(text_to_row("age is 34.0", schema)) == ParseFailureReason::missing_column);
    CHECK(failure_of(text_to_row("age is banana, sex is male", schema)) == ParseFailureReason::bad_number);
    CHECK(failure_of(text_to_row("age is 1, age is 2, sex is male", schema)) == ParseFailureReason::duplicate_column);
    CHECK(failure_of(text_to_row("height is 1, sex is male", schema)) == ParseFailureReason::unknown_column);
    CHECK(failure_of(text_to_row("age is 1, sex is other", schema)) == ParseFailureReason::bad_category);
    CHECK(std::holds_alternative<ParseFailure>(text_to_row("", schema)));
    CHECK(failure_of(text_to_row("age is inf, sex is male", schema)) == ParseFailureReason::bad_number);
  }
}

TEST_CASE("validate_row") {
  const auto schema = person_schema();
  CHECK(validate_row(std::get<Row>(text_to_row("age is 3.5000, sex is female", schema)), schema));
  CHECK_FALSE(validate_row(person(std::numeric_limits<double>::quiet_NaN(), 0), schema));
  CHECK_FALSE(validate_row(person(1.0, 2), schema));
  CHECK_FALSE(validate_row(Row{1.0}, schema));
}

TEST_CASE("round trip over random rows and permutations") {
  TableSchema schema;
  schema.columns = {ColumnSpec{"x", ColumnKind::continuous},
                    ColumnSpec{"colour", ColumnKind::categorical, {"red", "green", "dark blue"}},
                    ColumnSpec{"y", ColumnKind::continuous},
                    ColumnSpec{"flag", ColumnKind::categorical, {"0", "1"}}};
  schema.target_column = "flag";
  std::mt19937_64 rng(17);
  std::normal_distribution<double> value(0.0, 50.0);
  for (int i = 0; i < 500; ++i) {
    const Row row{value(rng), Category{static_cast<std::uint32_t>(rng() % 3)}, value(rng),
                  Category{static_cast<std::uint32_t>(rng() % 2)}};
    const auto text = row_to_text(row, schema, permute_order(schema, rng()));
    const auto parsed = text_to_row(text.text, schema);
    REQUIRE(std::holds_alternative<Row>(parsed));
    const auto& back = std::get<Row>(parsed);
    CHECK(std::abs(std::get<double>(back[0]) - std::get<double>(row[0])) <= 0.5e-4 + 1e-12);
    CHECK(back[1] == row[1]);
    CHECK(std::abs(std::get<double>(back[2]) - std::get<double>(row[2])) <= 0.5e-4 + 1e-12);
    CHECK(back[3] == row[3]);
  }
}

TEST_CASE("text_to_row is total on random bytes") {
  const auto schema = person_schema();
  std::mt19937_64 rng(3);
  const std::string alphabet = "age is sex male female, 0123456789.-e";
  for (int i = 0; i < 2000; ++i) {
    std::string text(rng() % 40, ' ');
    for (auto& ch : text) ch = (i % 2) ? static_cast<char>(rng() % 256) : alphabet[rng() % alphabet.size()];
    const auto result = text_to_row(text, schema);
    if (std::holds_alternative<Row>(result)) CHECK(validate_row(std::get<Row>(result), schema));
  }
}
