#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"
#include "tabsyn/transformer.hpp"

namespace tabsyn {

struct TrainConfig {
  std::uint32_t epochs = 10;
  std::uint32_t batch_size = 16;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

nlohmann::json to_json(const TrainConfig& config);

struct TrainTrace {
  std::vector<double> epoch_loss;
  double wall_seconds = 0.0;
  std::uint64_t tokens_seen = 0;
};

nlohmann::json to_json(const TrainTrace& trace);
TrainTrace train_trace_from_json(const nlohmann::json& json);

// One training sequence. `loss_mask`, when non-empty, has one entry per
// predicted position (size() - 1) and zero entries are excluded from the
// loss. Targets equal to PAD are always excluded.
struct TrainingExample {
  TokenSequence tokens;
  std::vector<std::uint8_t> loss_mask;
};

// Supplies the examples of one epoch; lets callers redraw column orders every
// epoch.
using CorpusProvider = std::function<std::vector<TrainingExample>(std::size_t epoch)>;

// Mean over non-PAD targets of -log softmax(logits)[target]. `targets` has one
// entry per logits row. Throws ShapeError on mismatch or when every target is
// PAD.
double cross_entropy(const MatrixF& logits, std::span<const TokenId> targets);

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::uint64_t step = 0;
};

// Global-norm clipping (in place on `grads`) followed by a bias-corrected
// Adam update. Throws NumericError, leaving params and state untouched, when a
// gradient is non-finite. Returns the pre-clipping gradient norm.
double adam_step(std::span<float> params, std::span<float> grads, AdamState& state, const TrainConfig& config);

struct TrainResult {
  TransformerModel model;
  TrainTrace trace;
};

// Next-token training with per-epoch seeded reshuffling. Deterministic per
// (model, corpus, config).
TrainResult train(TransformerModel model, const std::vector<TokenSequence>& corpus, const TrainConfig& config);
TrainResult train(TransformerModel model, const CorpusProvider& corpus, const TrainConfig& config);

struct GradCheckOptions {
  double epsilon = 1e-3;
  std::size_t samples = 200;
  std::uint64_t seed = 0;
  GradientFault fault = GradientFault::none;
};

// Max relative error |g_a - g_n| / max(|g_a|, |g_n|, 1e-8) between the
// analytic gradient and central finite differences of the mean batch loss,
// both evaluated in 64-bit over randomly sampled weights.
double grad_check(const TransformerModel& model, const std::vector<TrainingExample>& batch,
                  const GradCheckOptions& options = {});

}  // namespace tabsyn
