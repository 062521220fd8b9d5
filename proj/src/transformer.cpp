#include "tabsyn/transformer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "tabsyn/error.hpp"

namespace tabsyn {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;
constexpr char kMagic[5] = {'T', 'S', 'Y', 'N', '1'};

template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using ConstMap = Eigen::Map<const Matrix<T>>;
template <typename T>
using ConstRowMap = Eigen::Map<const RowVec<T>>;
template <typename T>
using MutMap = Eigen::Map<Matrix<T>>;
template <typename T>
using MutRowMap = Eigen::Map<RowVec<T>>;

}  // namespace

void ModelConfig::validate(bool allow_zero_layers) const {
  if (layers == 0 && !allow_zero_layers) throw ConfigError("layers must be positive");
  if (hidden == 0) throw ConfigError("hidden_dim must be positive");
  if (heads == 0) throw ConfigError("heads must be positive");
  if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
  if (context_len == 0) throw ConfigError("context_len must be positive");
  if (ffn_mult == 0) throw ConfigError("ffn_mult must be positive");
  if (hidden % heads != 0) {
    throw ConfigError("hidden_dim " + std::to_string(hidden) + " is not divisible by heads " +
                      std::to_string(heads));
  }
}

ParameterLayout make_layout(const ModelConfig& config) {
  ParameterLayout layout;
  const std::size_t H = config.hidden;
  const std::size_t F = static_cast<std::size_t>(config.ffn_mult) * H;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    const auto offset = layout.total;
    layout.tensors.push_back({std::move(name), offset, rows, cols});
    layout.total += rows * cols;
    return offset;
  };
  layout.token_embedding = add("token_embedding", config.vocab_size, H);
  layout.position_embedding = add("position_embedding", config.context_len, H);
  for (std::uint32_t l = 0; l < config.layers; ++l) {
    const auto p = "layer" + std::to_string(l) + ".";
    LayerOffsets o{};
    o.ln1_gamma = add(p + "ln1.gamma", 1, H);
    o.ln1_beta = add(p + "ln1.beta", 1, H);
    o.wq = add(p + "attn.wq", H, H);
    o.bq = add(p + "attn.bq", 1, H);
    o.wk = add(p + "attn.wk", H, H);
    o.bk = add(p + "attn.bk", 1, H);
    o.wv = add(p + "attn.wv", H, H);
    o.bv = add(p + "attn.bv", 1, H);
    o.wo = add(p + "attn.wo", H, H);
    o.bo = add(p + "attn.bo", 1, H);
    o.ln2_gamma = add(p + "ln2.gamma", 1, H);
    o.ln2_beta = add(p + "ln2.beta", 1, H);
    o.w1 = add(p + "ffn.w1", H, F);
    o.b1 = add(p + "ffn.b1", 1, F);
    o.w2 = add(p + "ffn.w2", F, H);
    o.b2 = add(p + "ffn.b2", 1, H);
    layout.layers.push_back(o);
  }
  layout.final_gamma = add("final_ln.gamma", 1, H);
  layout.final_beta = add("final_ln.beta", 1, H);
  return layout;
}

TransformerModel init_model(const ModelConfig& config, std::uint64_t seed, bool allow_zero_layers) {
  config.validate(allow_zero_layers);
  TransformerModel model{config, make_layout(config), {}};
  model.weights.assign(model.layout.total, 0.0f);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStd);
  for (const auto& tensor : model.layout.tensors) {
    const auto& name = tensor.name;
    auto* data = model.weights.data() + tensor.offset;
    const bool is_gamma = name.ends_with(".gamma");
    const bool is_matrix = tensor.rows > 1;
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      if (is_gamma) {
        data[i] = 1.0f;
      } else if (is_matrix) {
        data[i] = static_cast<float>(normal(rng));
      }
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Forward / backward kernels shared by the float model and the 64-bit
// gradient check.

namespace {

template <typename T>
struct LayerCache {
  Matrix<T> x_in, xhat1, a, q, k, v, ctx, x_mid, xhat2, m, u, g;
  ColVec<T> rstd1, rstd2;
  std::vector<Matrix<T>> probs;  // one n x n matrix per head
};

template <typename T>
struct ForwardCache {
  std::vector<LayerCache<T>> layers;
  Matrix<T> x_last, xhat_final, xf;
  ColVec<T> rstd_final;
};

template <typename T>
void layer_norm_forward(const Matrix<T>& x, const T* gamma, const T* beta, Matrix<T>& xhat, ColVec<T>& rstd,
                        Matrix<T>& y) {
  const auto n = x.rows();
  const auto H = x.cols();
  ConstRowMap<T> g(gamma, H);
  ConstRowMap<T> b(beta, H);
  xhat.resize(n, H);
  rstd.resize(n);
  y.resize(n, H);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).mean();
    const RowVec<T> centered = x.row(i).array() - mean;
    const T var = centered.squaredNorm() / static_cast<T>(H);
    const T r = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    rstd(i) = r;
    xhat.row(i) = centered * r;
    y.row(i) = xhat.row(i).cwiseProduct(g) + b;
  }
}

template <typename T>
void layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& xhat, const ColVec<T>& rstd, const T* gamma,
                         T* dgamma, T* dbeta, Matrix<T>& dx) {
  const auto n = dy.rows();
  const auto H = dy.cols();
  ConstRowMap<T> g(gamma, H);
  MutRowMap<T>(dgamma, H) += dy.cwiseProduct(xhat).colwise().sum();
  MutRowMap<T>(dbeta, H) += dy.colwise().sum();
  dx.resize(n, H);
  for (Eigen::Index i = 0; i < n; ++i) {
    const RowVec<T> dxhat = dy.row(i).cwiseProduct(g);
    const T m1 = dxhat.mean();
    const T m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
    dx.row(i) = rstd(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2).matrix();
  }
}

template <typename T>
void linear(const Matrix<T>& x, const T* w, const T* b, Eigen::Index in, Eigen::Index out, Matrix<T>& y) {
  y.resize(x.rows(), out);
  y.noalias() = x * ConstMap<T>(w, in, out);
  y.rowwise() += ConstRowMap<T>(b, out);
}

// Writes softmax(q k^T * scale + mask) into `probs` and probs * v into `out`.
template <typename Q, typename K, typename V, typename Out, typename T>
void attention_head(const Q& q, const K& k, const V& v, T scale, Matrix<T>& probs, Out&& out) {
  const auto n = q.rows();
  probs.noalias() = (q * k.transpose()) * scale;
  for (Eigen::Index i = 0; i < n; ++i) {
    const T max = probs.row(i).head(i + 1).maxCoeff();
    T sum = 0;
    for (Eigen::Index j = 0; j <= i; ++j) {
      const T e = std::exp(probs(i, j) - max);
      probs(i, j) = e;
      sum += e;
    }
    probs.row(i).head(i + 1) /= sum;
    probs.row(i).tail(n - i - 1).setZero();
  }
  out.noalias() = probs * v;
}

template <typename T>
T gelu(T u) {
  constexpr T kAlpha = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  return T(0.5) * u * (T(1) + std::tanh(kAlpha * (u + T(0.044715) * u * u * u)));
}

template <typename T>
T gelu_derivative(T u, GradientFault fault) {
  constexpr T kAlpha = static_cast<T>(0.7978845608028654);
  const T t = std::tanh(kAlpha * (u + T(0.044715) * u * u * u));
  if (fault == GradientFault::gelu_derivative) return T(0.5) * (T(1) + t);
  return T(0.5) * (T(1) + t) + T(0.5) * u * (T(1) - t * t) * kAlpha * (T(1) + T(3) * T(0.044715) * u * u);
}

template <typename T>
void check_inputs(const ModelConfig& config, std::span<const T> weights, const TokenSequence& tokens) {
  if (weights.size() != make_layout(config).total) throw ShapeError("weight buffer does not match config");
  if (tokens.ids.empty()) throw ShapeError("empty token sequence");
  if (tokens.size() > config.context_len) {
    throw ShapeError("sequence of length " + std::to_string(tokens.size()) + " exceeds context " +
                     std::to_string(config.context_len));
  }
  for (auto id : tokens.ids) {
    if (id < 0 || static_cast<std::uint32_t>(id) >= config.vocab_size) {
      throw ShapeError("token id " + std::to_string(id) + " outside vocabulary");
    }
  }
}

// Runs the network up to the final LayerNorm output (n x H).
template <typename T>
void forward_hidden(const ModelConfig& config, const ParameterLayout& layout, std::span<const T> weights,
                    const TokenSequence& tokens, ForwardCache<T>& cache) {
  const T* w = weights.data();
  const auto n = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index H = config.hidden;
  const Eigen::Index F = static_cast<Eigen::Index>(config.ffn_mult) * H;
  const Eigen::Index d = config.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  ConstMap<T> tok(w + layout.token_embedding, config.vocab_size, H);
  ConstMap<T> pos(w + layout.position_embedding, config.context_len, H);

  Matrix<T> x(n, H);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = tok.row(tokens.ids[static_cast<std::size_t>(i)]) + pos.row(i);

  cache.layers.resize(config.layers);
  for (std::uint32_t l = 0; l < config.layers; ++l) {
    const auto& o = layout.layers[l];
    auto& c = cache.layers[l];
    c.x_in = x;
    layer_norm_forward(c.x_in, w + o.ln1_gamma, w + o.ln1_beta, c.xhat1, c.rstd1, c.a);
    linear(c.a, w + o.wq, w + o.bq, H, H, c.q);
    linear(c.a, w + o.wk, w + o.bk, H, H, c.k);
    linear(c.a, w + o.wv, w + o.bv, H, H, c.v);
    c.ctx.resize(n, H);
    c.probs.resize(config.heads);
    for (std::uint32_t h = 0; h < config.heads; ++h) {
      const Eigen::Index col = h * d;
      c.probs[h].resize(n, n);
      attention_head(c.q.middleCols(col, d), c.k.middleCols(col, d), c.v.middleCols(col, d), scale, c.probs[h],
                     c.ctx.middleCols(col, d));
    }
    Matrix<T> attn_out;
    linear(c.ctx, w + o.wo, w + o.bo, H, H, attn_out);
    c.x_mid = c.x_in + attn_out;
    layer_norm_forward(c.x_mid, w + o.ln2_gamma, w + o.ln2_beta, c.xhat2, c.rstd2, c.m);
    linear(c.m, w + o.w1, w + o.b1, H, F, c.u);
    c.g = c.u.unaryExpr([](T value) { return gelu(value); });
    Matrix<T> ffn_out;
    linear(c.g, w + o.w2, w + o.b2, F, H, ffn_out);
    x = c.x_mid + ffn_out;
  }
  cache.x_last = std::move(x);
  layer_norm_forward(cache.x_last, w + layout.final_gamma, w + layout.final_beta, cache.xhat_final,
                     cache.rstd_final, cache.xf);
}

template <typename T>
Matrix<T> logits_from_hidden(const ModelConfig& config, const ParameterLayout& layout, std::span<const T> weights,
                             const Matrix<T>& xf) {
  ConstMap<T> tok(weights.data() + layout.token_embedding, config.vocab_size, config.hidden);
  Matrix<T> logits(xf.rows(), static_cast<Eigen::Index>(config.vocab_size));
  logits.noalias() = xf * tok.transpose();
  return logits;
}

// Fills dlogits = weight_i * (softmax_i - onehot(target_i)) and returns the
// weighted cross-entropy.
template <typename T>
T loss_rows(const Matrix<T>& logits, std::span<const TokenId> targets, std::span<const T> position_weights,
            Matrix<T>* dlogits) {
  const auto n = logits.rows();
  const auto V = logits.cols();
  if (targets.size() != static_cast<std::size_t>(n) || position_weights.size() != static_cast<std::size_t>(n)) {
    throw ShapeError("targets/weights must have one entry per position");
  }
  if (dlogits) dlogits->setZero(n, V);
  T loss = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const T weight = position_weights[static_cast<std::size_t>(i)];
    if (weight == T(0)) continue;
    const auto target = targets[static_cast<std::size_t>(i)];
    if (target < 0 || target >= V) throw ShapeError("target id outside vocabulary");
    const T max = logits.row(i).maxCoeff();
    const RowVec<T> e = (logits.row(i).array() - max).exp();
    const T sum = e.sum();
    loss += weight * (std::log(sum) + max - logits(i, target));
    if (dlogits) {
      dlogits->row(i) = e * (weight / sum);
      (*dlogits)(i, target) -= weight;
    }
  }
  return loss;
}

}  // namespace

template <typename T>
T weighted_loss(const ModelConfig& config, std::span<const T> weights, const TokenSequence& inputs,
                std::span<const TokenId> targets, std::span<const T> position_weights) {
  check_inputs(config, weights, inputs);
  const auto layout = make_layout(config);
  ForwardCache<T> cache;
  forward_hidden(config, layout, weights, inputs, cache);
  const auto logits = logits_from_hidden(config, layout, weights, cache.xf);
  return loss_rows<T>(logits, targets, position_weights, nullptr);
}

template <typename T>
T accumulate_gradient(const ModelConfig& config, std::span<const T> weights, const TokenSequence& inputs,
                      std::span<const TokenId> targets, std::span<const T> position_weights, std::span<T> grad,
                      GradientFault fault) {
  check_inputs(config, weights, inputs);
  const auto layout = make_layout(config);
  if (grad.size() != layout.total) throw ShapeError("gradient buffer does not match config");
  ForwardCache<T> cache;
  forward_hidden(config, layout, weights, inputs, cache);
  const auto logits = logits_from_hidden(config, layout, weights, cache.xf);
  Matrix<T> dlogits;
  const T loss = loss_rows<T>(logits, targets, position_weights, &dlogits);

  const T* w = weights.data();
  T* gw = grad.data();
  const auto n = static_cast<Eigen::Index>(inputs.size());
  const Eigen::Index H = config.hidden;
  const Eigen::Index V = config.vocab_size;
  const Eigen::Index F = static_cast<Eigen::Index>(config.ffn_mult) * H;
  const Eigen::Index d = config.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(d));

  ConstMap<T> tok(w + layout.token_embedding, V, H);
  MutMap<T> dtok(gw + layout.token_embedding, V, H);
  MutMap<T> dpos(gw + layout.position_embedding, config.context_len, H);

  // Tied head.
  dtok.noalias() += dlogits.transpose() * cache.xf;
  Matrix<T> dxf = dlogits * tok;
  Matrix<T> dx;
  layer_norm_backward(dxf, cache.xhat_final, cache.rstd_final, w + layout.final_gamma, gw + layout.final_gamma,
                      gw + layout.final_beta, dx);

  for (std::uint32_t li = config.layers; li-- > 0;) {
    const auto& o = layout.layers[li];
    const auto& c = cache.layers[li];

    // x_out = x_mid + gelu(m W1 + b1) W2 + b2
    MutMap<T>(gw + o.w2, F, H).noalias() += c.g.transpose() * dx;
    MutRowMap<T>(gw + o.b2, H) += dx.colwise().sum();
    Matrix<T> dg = dx * ConstMap<T>(w + o.w2, F, H).transpose();
    Matrix<T> du(n, F);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < F; ++j) du(i, j) = dg(i, j) * gelu_derivative(c.u(i, j), fault);
    }
    MutMap<T>(gw + o.w1, H, F).noalias() += c.m.transpose() * du;
    MutRowMap<T>(gw + o.b1, F) += du.colwise().sum();
    Matrix<T> dm = du * ConstMap<T>(w + o.w1, H, F).transpose();
    Matrix<T> dx_ln2;
    layer_norm_backward(dm, c.xhat2, c.rstd2, w + o.ln2_gamma, gw + o.ln2_gamma, gw + o.ln2_beta, dx_ln2);
    Matrix<T> dx_mid = dx + dx_ln2;

    // x_mid = x_in + ctx Wo + bo
    MutMap<T>(gw + o.wo, H, H).noalias() += c.ctx.transpose() * dx_mid;
    MutRowMap<T>(gw + o.bo, H) += dx_mid.colwise().sum();
    Matrix<T> dctx = dx_mid * ConstMap<T>(w + o.wo, H, H).transpose();

    Matrix<T> dq(n, H), dk(n, H), dv(n, H);
    for (std::uint32_t h = 0; h < config.heads; ++h) {
      const Eigen::Index col = h * d;
      const auto& P = c.probs[h];
      const auto dctx_h = dctx.middleCols(col, d);
      Matrix<T> dP = dctx_h * c.v.middleCols(col, d).transpose();
      dv.middleCols(col, d).noalias() = P.transpose() * dctx_h;
      Matrix<T> dS(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const T dot = P.row(i).dot(dP.row(i));
        dS.row(i) = P.row(i).cwiseProduct((dP.row(i).array() - dot).matrix());
      }
      dq.middleCols(col, d).noalias() = (dS * c.k.middleCols(col, d)) * scale;
      dk.middleCols(col, d).noalias() = (dS.transpose() * c.q.middleCols(col, d)) * scale;
    }
    MutMap<T>(gw + o.wq, H, H).noalias() += c.a.transpose() * dq;
    MutMap<T>(gw + o.wk, H, H).noalias() += c.a.transpose() * dk;
    MutMap<T>(gw + o.wv, H, H).noalias() += c.a.transpose() * dv;
    MutRowMap<T>(gw + o.bq, H) += dq.colwise().sum();
    MutRowMap<T>(gw + o.bk, H) += dk.colwise().sum();
    MutRowMap<T>(gw + o.bv, H) += dv.colwise().sum();
    Matrix<T> da = dq * ConstMap<T>(w + o.wq, H, H).transpose();
    da.noalias() += dk * ConstMap<T>(w + o.wk, H, H).transpose();
    da.noalias() += dv * ConstMap<T>(w + o.wv, H, H).transpose();
    Matrix<T> dx_ln1;
    layer_norm_backward(da, c.xhat1, c.rstd1, w + o.ln1_gamma, gw + o.ln1_gamma, gw + o.ln1_beta, dx_ln1);
    dx = dx_mid + dx_ln1;
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    dtok.row(inputs.ids[static_cast<std::size_t>(i)]) += dx.row(i);
    dpos.row(i) += dx.row(i);
  }
  return loss;
}

template float accumulate_gradient<float>(const ModelConfig&, std::span<const float>, const TokenSequence&,
                                          std::span<const TokenId>, std::span<const float>, std::span<float>,
                                          GradientFault);
template double accumulate_gradient<double>(const ModelConfig&, std::span<const double>, const TokenSequence&,
                                            std::span<const TokenId>, std::span<const double>, std::span<double>,
                                            GradientFault);
template float weighted_loss<float>(const ModelConfig&, std::span<const float>, const TokenSequence&,
                                    std::span<const TokenId>, std::span<const float>);
template double weighted_loss<double>(const ModelConfig&, std::span<const double>, const TokenSequence&,
                                      std::span<const TokenId>, std::span<const double>);

MatrixF causal_attention(const MatrixF& q, const MatrixF& k, const MatrixF& v, MatrixF* attention) {
  if (q.rows() != k.rows() || q.rows() != v.rows() || q.cols() != k.cols() || q.cols() != v.cols()) {
    throw ShapeError("q, k, v must share sequence length and head dimension");
  }
  if (q.rows() == 0 || q.cols() == 0) throw ShapeError("empty attention input");
  MatrixF probs(q.rows(), q.rows());
  MatrixF out(q.rows(), v.cols());
  attention_head(q, k, v, 1.0f / std::sqrt(static_cast<float>(q.cols())), probs, out);
  if (attention) *attention = std::move(probs);
  return out;
}

MatrixF forward(const TransformerModel& model, const TokenSequence& tokens) {
  std::span<const float> weights(model.weights);
  check_inputs(model.config, weights, tokens);
  ForwardCache<float> cache;
  forward_hidden(model.config, model.layout, weights, tokens, cache);
  return logits_from_hidden(model.config, model.layout, weights, cache.xf);
}

Eigen::VectorXf last_logits(const TransformerModel& model, const TokenSequence& tokens) {
  std::span<const float> weights(model.weights);
  check_inputs(model.config, weights, tokens);
  ForwardCache<float> cache;
  forward_hidden(model.config, model.layout, weights, tokens, cache);
  ConstMap<float> tok(model.weights.data() + model.layout.token_embedding, model.config.vocab_size,
                      model.config.hidden);
  return tok * cache.xf.row(cache.xf.rows() - 1).transpose();
}

// ---------------------------------------------------------------------------

std::uint64_t count_params(const TransformerModel& model) {
  std::uint64_t total = 0;
  for (const auto& tensor : model.layout.tensors) total += tensor.rows * tensor.cols;
  return total;
}

std::uint64_t param_count_formula(const ModelConfig& config) {
  const std::uint64_t H = config.hidden;
  const std::uint64_t F = config.ffn_mult * H;
  const std::uint64_t attention = 4 * (H * H + H);
  const std::uint64_t ffn = H * F + F + F * H + H;
  const std::uint64_t norms = 4 * H;
  return config.vocab_size * H + config.context_len * H + config.layers * (attention + ffn + norms) + 2 * H;
}

SizeEstimate estimate_size(double c, std::int64_t layers, std::int64_t hidden) {
  if (!(c > 0.0) || layers <= 0 || hidden <= 0) {
    throw ConfigError("size estimate requires positive c, L and H");
  }
  const long double value = static_cast<long double>(c) * layers * static_cast<long double>(hidden) * hidden;
  return {c, static_cast<std::uint32_t>(layers), static_cast<std::uint32_t>(hidden),
          static_cast<std::uint64_t>(std::llround(value))};
}

CalibratedConstant calibrate_c(double known_params, std::int64_t layers, std::int64_t hidden) {
  if (!(known_params > 0.0) || layers <= 0 || hidden <= 0) {
    throw ConfigError("calibration requires positive parameter count, L and H");
  }
  const double raw = known_params / (static_cast<double>(layers) * static_cast<double>(hidden) *
                                     static_cast<double>(hidden));
  return {raw, static_cast<std::int64_t>(std::llround(raw))};
}

// ---------------------------------------------------------------------------

namespace {

void put_u32(std::ostream& out, std::uint32_t value) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(value), static_cast<unsigned char>(value >> 8),
                                  static_cast<unsigned char>(value >> 16), static_cast<unsigned char>(value >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw DataError("truncated checkpoint header");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

}  // namespace

void save_checkpoint(const TransformerModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, sizeof(kMagic));
  const auto& c = model.config;
  for (auto field : {c.layers, c.hidden, c.heads, c.vocab_size, c.context_len, c.ffn_mult}) put_u32(out, field);
  for (float value : model.weights) {
    std::uint32_t bits;
    std::memcpy(&bits, &value, sizeof(bits));
    put_u32(out, bits);
  }
  if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

TransformerModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  ModelConfig config;
  config.layers = get_u32(in);
  config.hidden = get_u32(in);
  config.heads = get_u32(in);
  config.vocab_size = get_u32(in);
  config.context_len = get_u32(in);
  config.ffn_mult = get_u32(in);
  try {
    config.validate(true);
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint config invalid: ") + e.what());
  }
  TransformerModel model{config, make_layout(config), {}};
  model.weights.resize(model.layout.total);
  for (auto& value : model.weights) {
    const auto bits = get_u32(in);
    std::memcpy(&value, &bits, sizeof(value));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint has trailing bytes");
  return model;
}

}  // namespace tabsyn
