#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "tabsyn/error.hpp"
#include "tabsyn/fixtures.hpp"
#include "tabsyn/relational.hpp"
#include "test_util.hpp"

using namespace tabsyn;

namespace {

ModelConfig small_architecture() {
  ModelConfig c;
  c.layers = 1;
  c.hidden = 32;
  c.heads = 4;
  return c;
}

TrainConfig quick_train(std::uint32_t epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.learning_rate = 3e-3;
  tc.seed = 1;
  return tc;
}

struct Fitted {
  PreparedRelational prepared;
  RelationalModel model;
};

const Fitted& fitted_fixture() {
  static const Fitted fitted = [] {
    Fitted f;
    const auto fixture = relational_fixture(80, 2);
    f.prepared = prepare_relational(fixture.tables, fixture.schema);
    f.model.vocab = build_relational_vocab(f.prepared.tables, f.prepared.schema);
    f.model.parent_model = fit_parent(f.prepared.tables.parent, f.prepared.schema, f.model.vocab,
                                      small_architecture(), quick_train(80));
    f.model.child_decoder = fit_child(f.prepared.tables.child, f.prepared.tables.parent, f.prepared.schema,
                                      f.model.vocab, small_architecture(), quick_train(80));
    return f;
  }();
  return fitted;
}

// Oracle for the fixture's child = f(parent) dependency.
const std::map<std::string, std::string> kItemOf{{"north", "boots"}, {"south", "sandals"}, {"east", "umbrella"}};
const std::map<std::string, double> kQtyOf{{"gold", 3.0}, {"silver", 1.0}};

}  // namespace

TEST_CASE("fixture satisfies its own schema") {
  const auto fixture = relational_fixture(50, 1);
  CHECK_NOTHROW(fixture.schema.validate());
  CHECK_NOTHROW(check_referential_integrity(fixture.tables, fixture.schema));
  CHECK(fixture.tables.parent.size() == 50);
  CHECK(fixture.schema.parent_content().size() == 2);
  CHECK(fixture.schema.child_content().size() == 2);
}

TEST_CASE("referential integrity errors") {
  auto fixture = relational_fixture(10, 1);
  SUBCASE("dangling foreign key names the key") {
    REQUIRE_FALSE(fixture.tables.child.empty());
    auto prepared = prepare_relational(fixture.tables, fixture.schema);
    const auto vocab = build_relational_vocab(prepared.tables, prepared.schema);
    fixture.tables.child.rows[0][0] = 999.0;
    CHECK_THROWS_WITH_AS(check_referential_integrity(fixture.tables, fixture.schema), doctest::Contains("999"),
                         DataError);
    CHECK_THROWS_WITH_AS(prepare_relational(fixture.tables, fixture.schema), doctest::Contains("999"), DataError);
    prepared.tables.child.rows[0][0] = 999.0;
    CHECK_THROWS_WITH_AS(fit_child(prepared.tables.child, prepared.tables.parent, prepared.schema, vocab,
                                   small_architecture(), quick_train(1)),
                         doctest::Contains("999"), DataError);
  }
  SUBCASE("duplicate parent keys") {
    fixture.tables.parent.rows[1][0] = fixture.tables.parent.rows[0][0];
    CHECK_THROWS_AS(check_referential_integrity(fixture.tables, fixture.schema), DataError);
  }
}

TEST_CASE("children-per-parent distribution") {
  SUBCASE("empirical histogram") {
    const auto dist = empirical_children_dist({1, 2, 3, 4}, {1, 1, 3, 1, 3});
    // Counts: key1 -> 3, key2 -> 0, key3 -> 2, key4 -> 0.
    REQUIRE(dist.probabilities.size() == 4);
    CHECK(dist.probabilities[0] == doctest::Approx(0.5));
    CHECK(dist.probabilities[1] == doctest::Approx(0.0));
    CHECK(dist.probabilities[2] == doctest::Approx(0.25));
    CHECK(dist.probabilities[3] == doctest::Approx(0.25));
  }
  SUBCASE("total variation") {
    const ChildCountDistribution a{{0.5, 0.5}}, b{{0.2, 0.3, 0.5}};
    // 0.5 * (0.3 + 0.2 + 0.5)
    CHECK(a.total_variation(b) == doctest::Approx(0.5));
    CHECK(b.total_variation(a) == doctest::Approx(0.5));
    CHECK(a.total_variation(a) == 0.0);
  }
  SUBCASE("sampling follows the probabilities") {
    const auto dist = relational_fixture_children();
    std::mt19937_64 rng(3);
    std::vector<std::int64_t> parents, fks;
    for (std::int64_t p = 0; p < 20000; ++p) {
      parents.push_back(p);
      for (std::uint32_t k = dist.sample(rng); k > 0; --k) fks.push_back(p);
    }
    CHECK(empirical_children_dist(parents, fks).total_variation(dist) < 0.02);
  }
  SUBCASE("estimate from tables") {
    const auto fixture = relational_fixture(2000, 5);
    CHECK(estimate_children_dist(fixture.tables, fixture.schema).total_variation(relational_fixture_children()) < 0.05);
  }
}

TEST_CASE("training sequences") {
  const auto fixture = relational_fixture(20, 3);
  const auto prepared = prepare_relational(fixture.tables, fixture.schema);
  const auto vocab = build_relational_vocab(prepared.tables, prepared.schema);
  SUBCASE("parent sequences exclude the key") {
    const auto sequences = parent_sequences(prepared.tables.parent, prepared.schema, vocab);
    REQUIRE(sequences.size() == 20);
    const auto text = decode(sequences[0], vocab);
    CHECK(text.find("id is") == std::string::npos);
    CHECK(text.find("region is") == 0);
    CHECK(sequences[0].ids.front() == kBos);
    CHECK(sequences[0].ids.back() == kEos);
  }
  SUBCASE("child examples carry the parent prefix and mask it") {
    const auto examples = child_examples(prepared.tables, prepared.schema, vocab);
    REQUIRE(examples.size() == prepared.tables.child.size());
    for (const auto& example : examples) {
      const auto& ids = example.tokens.ids;
      const auto sep = std::find(ids.begin(), ids.end(), vocab.sep_id());
      REQUIRE(sep != ids.end());
      const auto sep_pos = static_cast<std::size_t>(sep - ids.begin());
      CHECK(ids.front() == kBos);
      CHECK(ids.back() == kEos);
      REQUIRE(example.loss_mask.size() == ids.size() - 1);
      for (std::size_t i = 0; i < example.loss_mask.size(); ++i) CHECK(example.loss_mask[i] == (i >= sep_pos ? 1 : 0));
      const auto child_text = decode(TokenSequence{std::vector<TokenId>(sep + 1, ids.end())}, vocab);
      CHECK(child_text.find("item is") == 0);
      CHECK(child_text.find("parent_id") == std::string::npos);
    }
  }
  SUBCASE("parent-segment targets contribute no loss") {
    const auto examples = child_examples(prepared.tables, prepared.schema, vocab);
    auto model = fit_child(prepared.tables.child, prepared.tables.parent, prepared.schema, vocab,
                           small_architecture(), quick_train(1));
    const auto& example = examples[0];
    const auto& ids = example.tokens.ids;
    const TokenSequence inputs{std::vector<TokenId>(ids.begin(), ids.end() - 1)};
    std::vector<TokenId> targets(ids.begin() + 1, ids.end());
    std::vector<double> weights(example.loss_mask.begin(), example.loss_mask.end());
    const std::vector<double> w64(model.weights.begin(), model.weights.end());
    const double masked = weighted_loss<double>(model.config, w64, inputs, targets, weights);
    // Changing every masked target leaves the loss and its gradient unchanged.
    auto scrambled = targets;
    for (std::size_t i = 0; i < scrambled.size(); ++i) {
      if (example.loss_mask[i] == 0) scrambled[i] = (scrambled[i] + 1) % static_cast<TokenId>(vocab.size());
    }
    CHECK(weighted_loss<double>(model.config, w64, inputs, scrambled, weights) == masked);
    std::vector<double> g1(w64.size()), g2(w64.size());
    accumulate_gradient<double>(model.config, w64, inputs, targets, weights, g1);
    accumulate_gradient<double>(model.config, w64, inputs, scrambled, weights, g2);
    CHECK(g1 == g2);
    // The masked gradient also passes the finite-difference check.
    std::mt19937_64 rng(2);
    std::normal_distribution<float> noise(0.0f, 0.1f);
    for (auto& w : model.weights) w += noise(rng);
    CHECK(grad_check(model, {example}) < 1e-3);
  }
}

TEST_CASE("fit_parent") {
  const auto fixture = relational_fixture(20, 4);
  const auto prepared = prepare_relational(fixture.tables, fixture.schema);
  const auto vocab = build_relational_vocab(prepared.tables, prepared.schema);
  SUBCASE("loss decreases over 50 epochs") {
    TrainTrace trace;
    auto tc = quick_train(50);
    tc.learning_rate = 3e-4;
    fit_parent(prepared.tables.parent, prepared.schema, vocab, small_architecture(), tc, &trace);
    REQUIRE(trace.epoch_loss.size() == 50);
    CHECK(trace.epoch_loss.back() < trace.epoch_loss.front());
  }
  SUBCASE("zero epochs leaves the initialization") {
    auto tc = quick_train(0);
    const auto model = fit_parent(prepared.tables.parent, prepared.schema, vocab, small_architecture(), tc);
    CHECK(model.weights == init_model(model.config, tc.seed).weights);
  }
  SUBCASE("deterministic per seed") {
    const auto a = fit_parent(prepared.tables.parent, prepared.schema, vocab, small_architecture(), quick_train(3));
    const auto b = fit_parent(prepared.tables.parent, prepared.schema, vocab, small_architecture(), quick_train(3));
    CHECK(a.weights == b.weights);
  }
}

TEST_CASE("generate_relational") {
  const auto& f = fitted_fixture();
  SampleConfig config;
  config.seed = 6;
  SUBCASE("point mass at 2") {
    const auto out = generate_relational(f.model, f.prepared.schema, 5, ChildCountDistribution{{0, 0, 1}}, config);
    CHECK(out.tables.parent.size() == 5);
    CHECK(out.tables.child.size() == 10);
    CHECK_NOTHROW(check_referential_integrity(out.tables, f.prepared.schema));
    CHECK(key_values(out.tables.parent, "id") == std::vector<std::int64_t>{1, 2, 3, 4, 5});
  }
  SUBCASE("point mass at 0") {
    const auto out = generate_relational(f.model, f.prepared.schema, 5, ChildCountDistribution{{1}}, config);
    CHECK(out.tables.parent.size() == 5);
    CHECK(out.tables.child.empty());
  }
  SUBCASE("children follow their parents") {
    const auto dist = estimate_children_dist(f.prepared.tables, f.prepared.schema);
    const auto out = generate_relational(f.model, f.prepared.schema, 60, dist, config);
    CHECK_NOTHROW(check_referential_integrity(out.tables, f.prepared.schema));
    std::map<std::int64_t, std::vector<std::string>> parent_of;
    const auto keys = key_values(out.tables.parent, "id");
    for (std::size_t r = 0; r < keys.size(); ++r) parent_of[keys[r]] = render_row(out.tables.parent.rows[r], out.tables.parent.schema);
    const auto fks = key_values(out.tables.child, "parent_id");
    REQUIRE(fks.size() > 20);
    std::size_t agree = 0;
    for (std::size_t r = 0; r < fks.size(); ++r) {
      const auto& parent = parent_of.at(fks[r]);
      const auto child = render_row(out.tables.child.rows[r], out.tables.child.schema);
      const double qty = std::get<double>(out.tables.child.rows[r][2]);
      agree += child[1] == kItemOf.at(parent[1]) && std::abs(qty - kQtyOf.at(parent[2])) < 1e-3;
    }
    CHECK(static_cast<double>(agree) / static_cast<double>(fks.size()) > 0.8);
    // Deterministic.
    const auto again = generate_relational(f.model, f.prepared.schema, 60, dist, config);
    CHECK(again.tables.child == out.tables.child);
  }
}

TEST_CASE("relational schema persistence") {
  const auto fixture = relational_fixture(15, 1);
  const auto prepared = prepare_relational(fixture.tables, fixture.schema);
  CHECK(relational_schema_from_json(to_json(prepared.schema)) == prepared.schema);
  const auto dir = test_util::temp_dir("relational");
  save_relational(fixture.tables, fixture.schema, dir);
  CHECK(std::filesystem::exists(dir / "parent.csv"));
  CHECK(std::filesystem::exists(dir / "child.csv"));
  CHECK(std::filesystem::exists(dir / "relational_schema.json"));
  CHECK(test_util::read_file(dir / "parent.csv").rfind("id,region,tier\n", 0) == 0);
}
