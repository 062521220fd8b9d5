#include "tabsyn/fixtures.hpp"

#include <array>
#include <charconv>
#include <random>
#include <string>

#include "tabsyn/error.hpp"

namespace tabsyn {

namespace {

std::string number(double value) {
  char buffer[32];
  const auto end = std::to_chars(buffer, buffer + sizeof buffer, value).ptr;
  return std::string(buffer, end);
}

}  // namespace

DataTable dependency_fixture(std::size_t rows, std::uint64_t seed) {
  static const std::array<const char*, 4> colors{"red", "green", "blue", "yellow"};
  static const std::array<const char*, 4> shapes{"circle", "square", "triangle", "star"};
  static const std::array<int, 4> bonus{0, 1, 1, 2};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, 3);
  std::vector<std::vector<std::string>> records{{"color", "shape", "size", "label"}};
  for (std::size_t r = 0; r < rows; ++r) {
    const int color = pick(rng);
    const int size = pick(rng) + 1;
    records.push_back({colors[color], shapes[color], std::to_string(size), size + bonus[color] >= 4 ? "yes" : "no"});
  }
  return table_from_records(records, "label", Task::classification);
}

DataTable linear_fixture(std::size_t rows, std::uint64_t seed) {
  static const std::array<const char*, 3> groups{"a", "b", "c"};
  static const std::array<double, 3> offset{-1.0, 0.0, 1.5};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, 2);
  std::vector<std::vector<std::string>> records{{"x1", "x2", "group", "y"}};
  for (std::size_t r = 0; r < rows; ++r) {
    const double x1 = normal(rng), x2 = normal(rng);
    const int group = pick(rng);
    const double y = 2.0 * x1 - x2 + offset[group] + 0.1 * normal(rng);
    records.push_back({number(x1), number(x2), groups[group], number(y)});
  }
  return table_from_records(records, "y", Task::regression);
}

ChildCountDistribution relational_fixture_children() { return {{0.2, 0.3, 0.3, 0.2}}; }

RelationalFixture relational_fixture(std::size_t parents, std::uint64_t seed) {
  static const std::array<const char*, 3> regions{"north", "south", "east"};
  static const std::array<const char*, 3> items{"boots", "sandals", "umbrella"};
  static const std::array<const char*, 2> tiers{"gold", "silver"};
  static const std::array<int, 2> quantity{3, 1};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> region_pick(0, 2), tier_pick(0, 1);
  const auto children = relational_fixture_children();
  std::vector<std::vector<std::string>> parent_records{{"id", "region", "tier"}};
  std::vector<std::vector<std::string>> child_records{{"parent_id", "item", "qty"}};
  for (std::size_t p = 1; p <= parents; ++p) {
    const int region = region_pick(rng), tier = tier_pick(rng);
    parent_records.push_back({std::to_string(p), regions[region], tiers[tier]});
    const auto count = children.sample(rng);
    for (std::uint32_t k = 0; k < count; ++k) {
      child_records.push_back({std::to_string(p), items[region], std::to_string(quantity[tier])});
    }
  }
  RelationalFixture out;
  out.tables.parent = table_from_records(parent_records, "tier", Task::classification);
  out.tables.child = table_from_records(child_records, "item", Task::classification);
  out.schema.parent = out.tables.parent.schema;
  out.schema.key_column = "id";
  out.schema.child = out.tables.child.schema;
  out.schema.foreign_key_column = "parent_id";
  return out;
}

DataTable named_fixture(std::string_view name, std::size_t rows, std::uint64_t seed) {
  if (name == "dependency") return dependency_fixture(rows, seed);
  if (name == "linear") return linear_fixture(rows, seed);
  throw ConfigError("unknown fixture '" + std::string(name) + "' (expected dependency or linear)");
}

}  // namespace tabsyn
