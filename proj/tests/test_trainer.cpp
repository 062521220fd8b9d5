#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "tabsyn/dataset.hpp"
#include "tabsyn/error.hpp"
#include "tabsyn/fixtures.hpp"
#include "tabsyn/trainer.hpp"

using namespace tabsyn;

namespace {

struct Corpus {
  Vocab vocab;
  std::vector<TokenSequence> sequences;
  std::size_t longest = 0;
};

Corpus fixture_corpus(std::size_t rows) {
  const auto split = preprocess(dependency_fixture(rows + rows / 4 + 1, 3), 0.2, 1);
  const auto& train = split.train;
  std::vector<RowSentence> sentences;
  for (std::size_t r = 0; r < std::min(rows, train.size()); ++r) {
    sentences.push_back(row_to_text(train.rows[r], train.schema, ColumnOrder::identity(train.schema.size())));
  }
  Corpus corpus{build_vocab(sentences), {}, 0};
  for (const auto& s : sentences) {
    corpus.sequences.push_back(encode(s, corpus.vocab, true));
    corpus.longest = std::max(corpus.longest, corpus.sequences.back().size());
  }
  return corpus;
}

ModelConfig config_for(const Corpus& corpus, std::uint32_t L, std::uint32_t H, std::uint32_t A) {
  ModelConfig c;
  c.layers = L;
  c.hidden = H;
  c.heads = A;
  c.vocab_size = static_cast<std::uint32_t>(corpus.vocab.size());
  c.context_len = static_cast<std::uint32_t>(corpus.longest);
  return c;
}

std::vector<TrainingExample> six_token_batch() {
  return {TrainingExample{TokenSequence{{1, 5, 6, 7, 8, 2}}, {}}, TrainingExample{TokenSequence{{1, 8, 4, 9, 2}}, {}}};
}

}  // namespace

TEST_CASE("cross_entropy") {
  SUBCASE("uniform logits give ln V") {
    const MatrixF logits = MatrixF::Zero(3, 7);
    const std::vector<TokenId> targets{1, 4, 6};
    CHECK(cross_entropy(logits, targets) == doctest::Approx(std::log(7.0)).epsilon(1e-9));
    CHECK(cross_entropy(logits, targets) == doctest::Approx(1.9459).epsilon(1e-4));
  }
  SUBCASE("large margin drives the loss to zero") {
    MatrixF logits = MatrixF::Zero(2, 7);
    logits(0, 3) = 20.0f;
    logits(1, 5) = 20.0f;
    const std::vector<TokenId> targets{3, 5};
    CHECK(cross_entropy(logits, targets) < 1e-6);
  }
  SUBCASE("PAD targets are excluded") {
    MatrixF logits = MatrixF::Zero(2, 4);
    logits(1, 0) = 50.0f;
    const std::vector<TokenId> targets{2, kPad};
    CHECK(cross_entropy(logits, targets) == doctest::Approx(std::log(4.0)));
  }
  SUBCASE("errors") {
    const MatrixF logits = MatrixF::Zero(2, 4);
    const std::vector<TokenId> pads{kPad, kPad};
    CHECK_THROWS_AS(cross_entropy(logits, pads), ShapeError);
    const std::vector<TokenId> short_targets{1};
    CHECK_THROWS_AS(cross_entropy(logits, short_targets), ShapeError);
  }
}

TEST_CASE("adam_step") {
  TrainConfig config;
  config.learning_rate = 0.1;
  SUBCASE("zero gradient is a fixed point") {
    std::vector<float> w{1.0f, -2.0f}, g{0.0f, 0.0f};
    AdamState state;
    adam_step(w, g, state, config);
    CHECK(w == std::vector<float>{1.0f, -2.0f});
  }
  SUBCASE("first step moves by exactly lr") {
    for (float w0 : {1.0f, -0.3f, 0.01f}) {
      std::vector<float> w{w0}, g{2.0f * w0};
      AdamState state;
      adam_step(w, g, state, config);
      CHECK(std::abs(w[0] - w0) == doctest::Approx(0.1).epsilon(1e-5));
    }
  }
  SUBCASE("converges on (w - 3)^2") {
    std::vector<float> w{0.0f};
    AdamState state;
    for (int step = 0; step < 200; ++step) {
      std::vector<float> g{2.0f * (w[0] - 3.0f)};
      adam_step(w, g, state, config);
    }
    CHECK(std::abs(w[0] - 3.0f) < 1e-2);
  }
  SUBCASE("clipping rescales to the global norm") {
    std::vector<float> w{0.0f, 0.0f}, g{3.0f, 4.0f};
    AdamState state;
    const double norm = adam_step(w, g, state, config);
    CHECK(norm == doctest::Approx(5.0));
    CHECK(g[0] == doctest::Approx(0.6));
    CHECK(g[1] == doctest::Approx(0.8));
  }
  SUBCASE("non-finite gradient aborts the step") {
    std::vector<float> w{1.0f, 2.0f}, g{std::numeric_limits<float>::quiet_NaN(), 1.0f};
    AdamState state;
    CHECK_THROWS_AS(adam_step(w, g, state, config), NumericError);
    CHECK(w == std::vector<float>{1.0f, 2.0f});
    CHECK(state.step == 0);
  }
}

TEST_CASE("train") {
  const auto corpus = fixture_corpus(20);
  REQUIRE(corpus.sequences.size() == 20);
  const auto config = config_for(corpus, 2, 32, 4);
  TrainConfig tc;
  tc.epochs = 50;
  tc.batch_size = 4;
  tc.seed = 5;

  SUBCASE("loss decreases over 50 epochs") {
    const auto result = train(init_model(config, 1), corpus.sequences, tc);
    REQUIRE(result.trace.epoch_loss.size() == 50);
    CHECK(result.trace.epoch_loss.back() < result.trace.epoch_loss.front());
    for (double loss : result.trace.epoch_loss) CHECK(std::isfinite(loss));
    std::uint64_t targets = 0;
    for (const auto& s : corpus.sequences) targets += s.size() - 1;
    CHECK(result.trace.tokens_seen == 50 * targets);
  }
  SUBCASE("zero epochs returns the model unchanged") {
    tc.epochs = 0;
    const auto model = init_model(config, 1);
    const auto result = train(model, corpus.sequences, tc);
    CHECK(result.model.weights == model.weights);
    CHECK(result.trace.epoch_loss.empty());
  }
  SUBCASE("identical seeds give bitwise-identical weights") {
    tc.epochs = 5;
    const auto a = train(init_model(config, 1), corpus.sequences, tc);
    const auto b = train(init_model(config, 1), corpus.sequences, tc);
    CHECK(a.model.weights == b.model.weights);
    tc.seed = 6;
    const auto c = train(init_model(config, 1), corpus.sequences, tc);
    CHECK(c.model.weights != a.model.weights);
  }
  SUBCASE("errors") {
    CHECK_THROWS(train(init_model(config, 1), std::vector<TokenSequence>{}, tc));
    auto too_long = corpus.sequences;
    too_long[0].ids.resize(config.context_len + 2, 4);
    CHECK_THROWS_AS(train(init_model(config, 1), too_long, tc), ShapeError);
    tc.learning_rate = 0.0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
  }
}

TEST_CASE("single repeated sentence is memorized") {
  const auto corpus = fixture_corpus(1);
  const auto config = config_for(corpus, 2, 32, 4);
  TrainConfig tc;
  tc.epochs = 300;
  tc.batch_size = 1;
  // One step per epoch; the default rate needs far more than 300 steps.
  tc.learning_rate = 1e-3;
  const auto result = train(init_model(config, 2), corpus.sequences, tc);
  CHECK(result.trace.epoch_loss.back() < 0.05);
}

TEST_CASE("grad_check") {
  ModelConfig config;
  config.layers = 1;
  config.hidden = 16;
  config.heads = 2;
  config.vocab_size = 10;
  config.context_len = 8;
  // Perturbed LayerNorm and bias parameters so every path carries gradient.
  auto model = init_model(config, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<float> normal(0.0f, 0.1f);
  for (auto& w : model.weights) w += normal(rng);
  const auto batch = six_token_batch();

  SUBCASE("analytic gradient matches finite differences") { CHECK(grad_check(model, batch) < 1e-3); }
  SUBCASE("stable across sampled subsets") {
    for (std::uint64_t s = 1; s <= 5; ++s) {
      GradCheckOptions options;
      options.seed = s;
      CHECK(grad_check(model, batch, options) < 1e-3);
    }
  }
  SUBCASE("a corrupted backward formula is detected") {
    GradCheckOptions options;
    options.fault = GradientFault::gelu_derivative;
    CHECK(grad_check(model, batch, options) > 1e-1);
  }
  SUBCASE("masked positions") {
    std::vector<TrainingExample> masked{TrainingExample{TokenSequence{{1, 5, 6, 7, 8, 2}}, {0, 0, 1, 1, 1}}};
    CHECK(grad_check(model, masked) < 1e-3);
  }
}

TEST_CASE("trace serialization") {
  TrainTrace trace{{2.5, 1.25}, 0.75, 42};
  const auto back = train_trace_from_json(to_json(trace));
  CHECK(back.epoch_loss == trace.epoch_loss);
  CHECK(back.wall_seconds == trace.wall_seconds);
  CHECK(back.tokens_seen == 42);
}
