#pragma once

#include <cstdint>
#include <string_view>

#include "tabsyn/dataset.hpp"
#include "tabsyn/relational.hpp"

namespace tabsyn {

// color uniform over {red, green, blue, yellow}; shape a bijection of color;
// size uniform over {1, 2, 3, 4}; label = yes iff size + bonus(color) >= 4
// with bonus red 0, green 1, blue 1, yellow 2. Raw (unencoded) table,
// classification target "label".
DataTable dependency_fixture(std::size_t rows, std::uint64_t seed);

// x1, x2 ~ N(0, 1), group in {a, b, c}; y = 2 x1 - x2 + offset(group) +
// N(0, 0.1^2). Regression target "y".
DataTable linear_fixture(std::size_t rows, std::uint64_t seed);

// Parents (id, region, tier) and children (parent_id, item, qty) with
// item = f(region), qty = g(tier) and 0/1/2/3 children per parent with
// probabilities 0.2/0.3/0.3/0.2.
struct RelationalFixture {
  RelationalTables tables;
  RelationalSchema schema;
};
RelationalFixture relational_fixture(std::size_t parents, std::uint64_t seed);
ChildCountDistribution relational_fixture_children();

// "dependency" or "linear".
DataTable named_fixture(std::string_view name, std::size_t rows, std::uint64_t seed);

}  // namespace tabsyn
