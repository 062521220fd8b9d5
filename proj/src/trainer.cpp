#include "tabsyn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "tabsyn/error.hpp"

namespace tabsyn {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be > 0");
  if (!(grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be > 0");
}

nlohmann::json to_json(const TrainConfig& config) {
  return {{"epochs", config.epochs},       {"batch_size", config.batch_size},
          {"learning_rate", config.learning_rate}, {"adam_beta1", config.beta1},
          {"adam_beta2", config.beta2},    {"adam_epsilon", config.epsilon},
          {"grad_clip_norm", config.grad_clip_norm}, {"seed", config.seed}};
}

nlohmann::json to_json(const TrainTrace& trace) {
  return {{"epoch_loss", trace.epoch_loss}, {"wall_seconds", trace.wall_seconds}, {"tokens_seen", trace.tokens_seen}};
}

TrainTrace train_trace_from_json(const nlohmann::json& json) {
  TrainTrace trace;
  trace.epoch_loss = json.at("epoch_loss").get<std::vector<double>>();
  trace.wall_seconds = json.at("wall_seconds").get<double>();
  trace.tokens_seen = json.at("tokens_seen").get<std::uint64_t>();
  return trace;
}

double cross_entropy(const MatrixF& logits, std::span<const TokenId> targets) {
  if (targets.size() != static_cast<std::size_t>(logits.rows())) throw ShapeError("one target per logits row required");
  double total = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto target = targets[static_cast<std::size_t>(i)];
    if (target == kPad) continue;
    if (target < 0 || target >= logits.cols()) throw ShapeError("target id outside vocabulary");
    const Eigen::VectorXd row = logits.row(i).cast<double>().transpose();
    const double max = row.maxCoeff();
    const double lse = max + std::log((row.array() - max).exp().sum());
    total += lse - row(target);
    ++count;
  }
  if (count == 0) throw ShapeError("cross-entropy over zero non-PAD positions");
  return total / static_cast<double>(count);
}

double adam_step(std::span<float> params, std::span<float> grads, AdamState& state, const TrainConfig& config) {
  if (params.size() != grads.size()) throw ShapeError("params and grads differ in size");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0f);
    state.v.assign(params.size(), 0.0f);
  }
  if (state.m.size() != params.size()) throw ShapeError("optimizer state does not match params");
  double sq = 0.0;
  for (float g : grads) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient; step aborted");
    sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > config.grad_clip_norm) {
    const auto factor = static_cast<float>(config.grad_clip_norm / norm);
    for (auto& g : grads) g *= factor;
  }
  ++state.step;
  const auto b1 = static_cast<float>(config.beta1);
  const auto b2 = static_cast<float>(config.beta2);
  const auto lr = static_cast<float>(config.learning_rate);
  const auto eps = static_cast<float>(config.epsilon);
  const auto c1 = static_cast<float>(1.0 - std::pow(config.beta1, static_cast<double>(state.step)));
  const auto c2 = static_cast<float>(1.0 - std::pow(config.beta2, static_cast<double>(state.step)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0f - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0f - b2) * g * g;
    const float m_hat = state.m[i] / c1;
    const float v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
  return norm;
}

namespace {

struct PreparedExample {
  TokenSequence inputs;
  std::vector<TokenId> targets;
  std::vector<std::uint8_t> active;
};

PreparedExample prepare(const TrainingExample& example) {
  const auto& ids = example.tokens.ids;
  if (ids.size() < 2) throw ShapeError("training sequences need at least two tokens");
  const auto n = ids.size() - 1;
  if (!example.loss_mask.empty() && example.loss_mask.size() != n) {
    throw ShapeError("loss mask must have one entry per predicted position");
  }
  PreparedExample out;
  out.inputs.ids.assign(ids.begin(), ids.end() - 1);
  out.targets.assign(ids.begin() + 1, ids.end());
  out.active.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.active[i] = out.targets[i] != kPad && (example.loss_mask.empty() || example.loss_mask[i] != 0);
  }
  return out;
}

std::size_t active_count(const PreparedExample& example) {
  return static_cast<std::size_t>(std::count(example.active.begin(), example.active.end(), std::uint8_t{1}));
}

template <typename T>
std::vector<T> position_weights(const PreparedExample& example, T scale) {
  std::vector<T> weights(example.active.size());
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = example.active[i] ? scale : T(0);
  return weights;
}

}  // namespace

TrainResult train(TransformerModel model, const std::vector<TokenSequence>& corpus, const TrainConfig& config) {
  std::vector<TrainingExample> examples;
  examples.reserve(corpus.size());
  for (const auto& sequence : corpus) examples.push_back({sequence, {}});
  return train(std::move(model), [&examples](std::size_t) { return examples; }, config);
}

TrainResult train(TransformerModel model, const CorpusProvider& corpus, const TrainConfig& config) {
  config.validate();
  TrainTrace trace;
  if (config.epochs == 0) return {std::move(model), trace};

  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(config.seed);
  AdamState state;
  std::vector<float> grad(model.weights.size());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto examples = corpus(epoch);
    if (examples.empty()) throw DataError("cannot train on an empty corpus");
    std::vector<PreparedExample> prepared;
    prepared.reserve(examples.size());
    for (const auto& example : examples) {
      if (example.tokens.size() > model.config.context_len) {
        throw ShapeError("training sequence of length " + std::to_string(example.tokens.size()) +
                         " exceeds context " + std::to_string(model.config.context_len));
      }
      prepared.push_back(prepare(example));
    }
    std::vector<std::size_t> order(prepared.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }

    double epoch_loss = 0.0;
    std::size_t epoch_count = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const auto end = std::min(order.size(), begin + config.batch_size);
      std::size_t count = 0;
      for (auto i = begin; i < end; ++i) count += active_count(prepared[order[i]]);
      if (count == 0) continue;
      std::fill(grad.begin(), grad.end(), 0.0f);
      const float scale = 1.0f / static_cast<float>(count);
      double batch_loss = 0.0;
      for (auto i = begin; i < end; ++i) {
        const auto& example = prepared[order[i]];
        const auto weights = position_weights(example, scale);
        batch_loss += accumulate_gradient<float>(model.config, model.weights, example.inputs, example.targets,
                                                 weights, grad);
        trace.tokens_seen += example.inputs.size();
      }
      adam_step(model.weights, grad, state, config);
      epoch_loss += batch_loss * static_cast<double>(count);
      epoch_count += count;
    }
    if (epoch_count == 0) throw DataError("epoch has no trainable target positions");
    const double mean = epoch_loss / static_cast<double>(epoch_count);
    if (!std::isfinite(mean)) throw NumericError("training loss diverged");
    trace.epoch_loss.push_back(mean);
  }
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), trace};
}

double grad_check(const TransformerModel& model, const std::vector<TrainingExample>& batch,
                  const GradCheckOptions& options) {
  if (batch.empty()) throw DataError("gradient check needs a non-empty batch");
  std::vector<PreparedExample> prepared;
  std::size_t count = 0;
  for (const auto& example : batch) {
    prepared.push_back(prepare(example));
    count += active_count(prepared.back());
  }
  if (count == 0) throw DataError("gradient check batch has no active positions");
  const double scale = 1.0 / static_cast<double>(count);

  std::vector<double> weights(model.weights.begin(), model.weights.end());
  std::vector<double> analytic(weights.size(), 0.0);
  for (const auto& example : prepared) {
    const auto pw = position_weights(example, scale);
    accumulate_gradient<double>(model.config, weights, example.inputs, example.targets, pw, analytic, options.fault);
  }
  auto loss = [&] {
    double total = 0.0;
    for (const auto& example : prepared) {
      const auto pw = position_weights(example, scale);
      total += weighted_loss<double>(model.config, weights, example.inputs, example.targets, pw);
    }
    return total;
  };

  std::vector<std::size_t> indices(weights.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  std::mt19937_64 rng(options.seed);
  const auto samples = std::min(options.samples, indices.size());
  for (std::size_t i = 0; i < samples; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, indices.size() - 1);
    std::swap(indices[i], indices[pick(rng)]);
  }

  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto i = indices[s];
    const double original = weights[i];
    weights[i] = original + options.epsilon;
    const double plus = loss();
    weights[i] = original - options.epsilon;
    const double minus = loss();
    weights[i] = original;
    const double numeric = (plus - minus) / (2.0 * options.epsilon);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace tabsyn
