#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tabsyn/tokenizer.hpp"

namespace tabsyn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

// Decoder-only architecture hyperparameters.
struct ModelConfig {
  std::uint32_t layers = 2;       // L
  std::uint32_t hidden = 32;      // H
  std::uint32_t heads = 4;        // A
  std::uint32_t vocab_size = 64;  // V
  std::uint32_t context_len = 64; // T
  std::uint32_t ffn_mult = 4;

  std::uint32_t head_dim() const { return hidden / heads; }
  // Throws ConfigError. Zero layers are accepted only on request (used to
  // test the embedding/head path in isolation).
  void validate(bool allow_zero_layers = false) const;
  bool operator==(const ModelConfig&) const = default;
};

struct TensorInfo {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

struct LayerOffsets {
  std::size_t ln1_gamma, ln1_beta;
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t ln2_gamma, ln2_beta;
  std::size_t w1, b1, w2, b2;
};

// Offsets of every tensor inside the flat weight buffer, in declaration
// order: token embedding, positional embedding, per-layer blocks, final
// LayerNorm. The output head is tied to the token embedding.
struct ParameterLayout {
  std::size_t token_embedding = 0;
  std::size_t position_embedding = 0;
  std::vector<LayerOffsets> layers;
  std::size_t final_gamma = 0;
  std::size_t final_beta = 0;
  std::size_t total = 0;
  std::vector<TensorInfo> tensors;
};

ParameterLayout make_layout(const ModelConfig& config);

struct TransformerModel {
  ModelConfig config;
  ParameterLayout layout;
  std::vector<float> weights;

  // Row-major view of one named tensor.
  std::span<const float> tensor(const TensorInfo& info) const {
    return std::span<const float>(weights).subspan(info.offset, info.size());
  }
};

// Linear weights and embeddings ~ N(0, 0.02^2); biases and LayerNorm offsets
// 0; LayerNorm scales 1.
TransformerModel init_model(const ModelConfig& config, std::uint64_t seed, bool allow_zero_layers = false);

// softmax(q k^T / sqrt(d) + causal mask) v for a single head. When
// `attention` is non-null it receives the post-softmax weights.
MatrixF causal_attention(const MatrixF& q, const MatrixF& k, const MatrixF& v, MatrixF* attention = nullptr);

// Next-token logits for every position (n x V).
MatrixF forward(const TransformerModel& model, const TokenSequence& tokens);
// Logits of the final position only.
Eigen::VectorXf last_logits(const TransformerModel& model, const TokenSequence& tokens);

// Test hook: deliberately wrong backward formulas used to prove that the
// gradient check detects them.
enum class GradientFault { none, gelu_derivative };

// Adds d(loss)/d(weights) into `grad` and returns the loss, where
//   loss = sum_i position_weight[i] * -log softmax(logits_i)[targets[i]].
// `targets` and `position_weights` have one entry per input position.
template <typename T>
T accumulate_gradient(const ModelConfig& config, std::span<const T> weights, const TokenSequence& inputs,
                      std::span<const TokenId> targets, std::span<const T> position_weights,
                      std::span<T> grad, GradientFault fault = GradientFault::none);

// Same loss without the backward pass.
template <typename T>
T weighted_loss(const ModelConfig& config, std::span<const T> weights, const TokenSequence& inputs,
                std::span<const TokenId> targets, std::span<const T> position_weights);

// Number of stored parameters, by enumerating every tensor.
std::uint64_t count_params(const TransformerModel& model);
// V*H + T*H + L*(12H^2 + 13H) + 2H for ffn_mult = 4 (general ffn_mult
// handled as well).
std::uint64_t param_count_formula(const ModelConfig& config);

// Size_LLM ~= c * L * H^2.
struct SizeEstimate {
  double c = 0.0;
  std::uint32_t layers = 0;
  std::uint32_t hidden = 0;
  std::uint64_t estimated_params = 0;

  bool operator==(const SizeEstimate&) const = default;
};

SizeEstimate estimate_size(double c, std::int64_t layers, std::int64_t hidden);

struct CalibratedConstant {
  double raw = 0.0;
  std::int64_t rounded = 0;
};

// c = known_params / (L * H^2).
CalibratedConstant calibrate_c(double known_params, std::int64_t layers, std::int64_t hidden);

// Binary checkpoint: "TSYN1", the six config fields as little-endian u32,
// then every tensor in declaration order as little-endian f32.
void save_checkpoint(const TransformerModel& model, const std::filesystem::path& path);
TransformerModel load_checkpoint(const std::filesystem::path& path);

}  // namespace tabsyn
