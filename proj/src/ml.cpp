#include "tabsyn/ml.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "tabsyn/error.hpp"

namespace tabsyn {

std::vector<int> Dataset2D::class_labels() const {
  std::vector<int> out(rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(labels(static_cast<Eigen::Index>(i)));
  return out;
}

void Dataset2D::validate() const {
  if (features.rows() < 1) throw DataError("dataset needs at least one row");
  if (labels.size() != features.rows()) throw ShapeError("one label per feature row required");
  if (!features.allFinite() || !labels.allFinite()) throw DataError("dataset holds non-finite entries");
  if (n_classes > 0) {
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
      const double y = labels(i);
      if (y != std::floor(y) || y < 0 || y >= static_cast<double>(n_classes)) {
        throw DataError("class label outside 0.." + std::to_string(n_classes - 1));
      }
    }
  }
}

Dataset2D to_dataset(const DataTable& table, const TableSchema& reference, const FeatureOptions& options) {
  if (table.schema.size() != reference.size()) throw DataError("table and reference schema differ in width");
  const auto raw = table.normalized ? denormalize(table) : table;
  const auto target = reference.target_index();

  std::size_t width = 0;
  for (std::size_t c = 0; c < reference.size(); ++c) {
    if (c == target && !options.include_target) continue;
    const auto& column = reference.columns[c];
    width += column.kind == ColumnKind::categorical ? column.categories.size() : 1;
  }

  Dataset2D out;
  out.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(raw.size()), static_cast<Eigen::Index>(width));
  out.labels.resize(static_cast<Eigen::Index>(raw.size()));
  const auto& target_column = reference.columns[target];
  out.n_classes = reference.task == Task::classification ? target_column.categories.size() : 0;

  auto numeric = [&](const Cell& cell, const ColumnSpec& column) {
    const auto* value = std::get_if<double>(&cell);
    if (!value) throw DataError("column '" + column.name + "' holds a non-numeric cell");
    return *value;
  };
  auto category = [&](const Cell& cell, const ColumnSpec& column) {
    const auto* value = std::get_if<Category>(&cell);
    if (!value || value->index >= column.categories.size()) {
      throw DataError("column '" + column.name + "' holds an unencoded or out-of-range category");
    }
    return value->index;
  };

  const double scale = std::pow(10.0, std::max(options.quantize_decimals, 0));
  for (std::size_t r = 0; r < raw.size(); ++r) {
    const auto& row = raw.rows[r];
    const auto i = static_cast<Eigen::Index>(r);
    Eigen::Index offset = 0;
    for (std::size_t c = 0; c < reference.size(); ++c) {
      const auto& column = reference.columns[c];
      if (c == target) {
        out.labels(i) = column.kind == ColumnKind::categorical ? category(row[c], column) : numeric(row[c], column);
        if (!options.include_target) continue;
      }
      if (column.kind == ColumnKind::categorical) {
        out.features(i, offset + category(row[c], column)) = 1.0;
        offset += static_cast<Eigen::Index>(column.categories.size());
      } else {
        double value = numeric(row[c], column);
        if (options.standardize) {
          value = column.zero_variance ? 0.0 : (value - column.mean) / column.std_dev;
          if (options.quantize_decimals >= 0) value = std::round(value * scale) / scale;
        }
        out.features(i, offset++) = value;
      }
    }
  }
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Logistic regression

Eigen::MatrixXd LogisticModel::probabilities(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd logits = x * weights;
  logits.rowwise() += bias.transpose();
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double max = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - max).exp();
    logits.row(i) /= logits.row(i).sum();
  }
  return logits;
}

std::vector<int> LogisticModel::predict(const Eigen::MatrixXd& x) const {
  const auto p = probabilities(x);
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    p.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

LogisticModel fit_logistic(const Dataset2D& train, double l2, std::size_t iters) {
  train.validate();
  if (train.n_classes < 2) throw DataError("logistic regression needs a classification dataset");
  const auto labels = train.class_labels();
  if (std::adjacent_find(labels.begin(), labels.end(), std::not_equal_to<>()) == labels.end()) {
    throw DataError("logistic regression needs at least two classes in the training data");
  }
  if (!(l2 >= 0.0)) throw ConfigError("l2 must be >= 0");
  const auto n = train.features.rows();
  const auto d = train.features.cols();
  const auto k = static_cast<Eigen::Index>(train.n_classes);

  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, labels[static_cast<std::size_t>(i)]) = 1.0;

  // 1 / Lipschitz bound of the mean softmax cross-entropy.
  const double mean_sq = (train.features.rowwise().squaredNorm().array() + 1.0).mean();
  const double step = 1.0 / (0.5 * mean_sq + l2);

  LogisticModel model{Eigen::MatrixXd::Zero(d, k), Eigen::VectorXd::Zero(k)};
  for (std::size_t it = 0; it < iters; ++it) {
    const Eigen::MatrixXd residual = (model.probabilities(train.features) - onehot) / static_cast<double>(n);
    const Eigen::MatrixXd grad_w = train.features.transpose() * residual + l2 * model.weights;
    const Eigen::VectorXd grad_b = residual.colwise().sum().transpose();
    model.weights -= step * grad_w;
    model.bias -= step * grad_b;
  }
  return model;
}

// ---------------------------------------------------------------------------
// Linear regression

Eigen::VectorXd LinearModel::predict(const Eigen::MatrixXd& x) const {
  return (x * coefficients).array() + intercept;
}

LinearModel fit_linear(const Dataset2D& train, double l2) {
  train.validate();
  const auto n = train.features.rows();
  const auto d = train.features.cols();
  if (n < d) throw DataError("linear regression needs at least as many rows as features");
  if (!(l2 >= 0.0)) throw ConfigError("l2 must be >= 0");
  Eigen::MatrixXd a(n, d + 1);
  a << train.features, Eigen::VectorXd::Ones(n);
  Eigen::MatrixXd gram = a.transpose() * a;
  gram.diagonal().head(d).array() += l2;
  const Eigen::LDLT<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success || !(solver.rcond() > 1e-15)) {
    throw NumericError("degenerate Gram matrix in linear regression (rcond " + std::to_string(solver.rcond()) + ")");
  }
  const Eigen::VectorXd beta = solver.solve(a.transpose() * train.labels);
  return {beta.head(d), beta(d)};
}

// ---------------------------------------------------------------------------
// Random forest

void ForestConfig::validate() const {
  if (n_trees < 1 || max_depth < 1 || min_samples_leaf < 1) {
    throw ConfigError("forest n_trees, max_depth and min_samples_leaf must be positive");
  }
}

nlohmann::json to_json(const ForestConfig& config) {
  return {{"n_trees", config.n_trees},
          {"max_depth", config.max_depth},
          {"min_samples_leaf", config.min_samples_leaf},
          {"features_per_split", config.features_per_split},
          {"seed", config.seed},
          {"bootstrap", config.bootstrap}};
}

ForestConfig forest_config_from_json(const nlohmann::json& json) {
  ForestConfig config;
  config.n_trees = json.value("n_trees", config.n_trees);
  config.max_depth = json.value("max_depth", config.max_depth);
  config.min_samples_leaf = json.value("min_samples_leaf", config.min_samples_leaf);
  config.features_per_split = json.value("features_per_split", config.features_per_split);
  config.seed = json.value("seed", config.seed);
  config.bootstrap = json.value("bootstrap", config.bootstrap);
  config.validate();
  return config;
}

const TreeNode& DecisionTree::leaf(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const TreeNode* node = &nodes.front();
  while (node->feature >= 0) node = &nodes[static_cast<std::size_t>(x(node->feature) <= node->threshold ? node->left : node->right)];
  return *node;
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const Dataset2D& data, const ForestConfig& config, Task task, std::mt19937_64& rng)
      : data_(data), config_(config), task_(task), rng_(rng) {
    const auto d = data.dims();
    per_split_ = config.features_per_split > 0
                     ? std::min<std::size_t>(config.features_per_split, d)
                     : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
    per_split_ = std::max<std::size_t>(per_split_, 1);
    features_.resize(d);
    std::iota(features_.begin(), features_.end(), std::size_t{0});
  }

  DecisionTree build(std::vector<std::size_t> samples) {
    tree_.nodes.clear();
    grow(samples, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double score = std::numeric_limits<double>::infinity();
  };

  double label(std::size_t i) const { return data_.labels(static_cast<Eigen::Index>(i)); }
  double value(std::size_t i, std::size_t f) const {
    return data_.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f));
  }

  bool pure(const std::vector<std::size_t>& samples) const {
    const double first = label(samples.front());
    return std::all_of(samples.begin(), samples.end(), [&](std::size_t i) { return label(i) == first; });
  }

  int make_leaf(const std::vector<std::size_t>& samples) {
    TreeNode node;
    if (task_ == Task::classification) {
      node.counts.assign(data_.n_classes, 0.0);
      for (auto i : samples) node.counts[static_cast<std::size_t>(label(i))] += 1.0;
    } else {
      double sum = 0.0;
      for (auto i : samples) sum += label(i);
      node.value = sum / static_cast<double>(samples.size());
    }
    tree_.nodes.push_back(std::move(node));
    return static_cast<int>(tree_.nodes.size() - 1);
  }

  // Weighted child impurity: n_l*gini_l + n_r*gini_r, or SSE_l + SSE_r.
  void scan_feature(const std::vector<std::size_t>& samples, std::size_t f, Split& best) const {
    std::vector<std::pair<double, std::size_t>> sorted;
    sorted.reserve(samples.size());
    for (auto i : samples) sorted.emplace_back(value(i, f), i);
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const std::size_t min_leaf = config_.min_samples_leaf;

    if (task_ == Task::classification) {
      std::vector<double> left(data_.n_classes, 0.0), right(data_.n_classes, 0.0);
      for (auto i : samples) right[static_cast<std::size_t>(label(i))] += 1.0;
      double left_sq = 0.0, right_sq = 0.0;
      for (double c : right) right_sq += c * c;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const auto y = static_cast<std::size_t>(label(sorted[k].second));
        left_sq += 2.0 * left[y] + 1.0;
        right_sq -= 2.0 * right[y] - 1.0;
        left[y] += 1.0;
        right[y] -= 1.0;
        const std::size_t n_left = k + 1;
        if (n_left < min_leaf || n - n_left < min_leaf || sorted[k].first == sorted[k + 1].first) continue;
        const double nl = static_cast<double>(n_left), nr = static_cast<double>(n - n_left);
        const double score = nl - left_sq / nl + nr - right_sq / nr;
        if (score < best.score) best = {f, 0.5 * (sorted[k].first + sorted[k + 1].first), score};
      }
    } else {
      double total = 0.0, total_sq = 0.0;
      for (auto i : samples) {
        total += label(i);
        total_sq += label(i) * label(i);
      }
      double left = 0.0, left_sq = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const double y = label(sorted[k].second);
        left += y;
        left_sq += y * y;
        const std::size_t n_left = k + 1;
        if (n_left < min_leaf || n - n_left < min_leaf || sorted[k].first == sorted[k + 1].first) continue;
        const double nl = static_cast<double>(n_left), nr = static_cast<double>(n - n_left);
        const double right = total - left;
        const double score = (left_sq - left * left / nl) + (total_sq - left_sq - right * right / nr);
        if (score < best.score) best = {f, 0.5 * (sorted[k].first + sorted[k + 1].first), score};
      }
    }
  }

  int grow(const std::vector<std::size_t>& samples, std::size_t depth) {
    if (depth >= config_.max_depth || samples.size() < 2 * static_cast<std::size_t>(config_.min_samples_leaf) ||
        pure(samples)) {
      return make_leaf(samples);
    }
    for (std::size_t i = 0; i < per_split_; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, features_.size() - 1);
      std::swap(features_[i], features_[pick(rng_)]);
    }
    Split best;
    for (std::size_t i = 0; i < per_split_; ++i) scan_feature(samples, features_[i], best);
    if (!std::isfinite(best.score)) return make_leaf(samples);

    std::vector<std::size_t> left, right;
    for (auto i : samples) (value(i, best.feature) <= best.threshold ? left : right).push_back(i);
    const auto index = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes[static_cast<std::size_t>(index)].feature = static_cast<int>(best.feature);
    tree_.nodes[static_cast<std::size_t>(index)].threshold = best.threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    tree_.nodes[static_cast<std::size_t>(index)].left = l;
    tree_.nodes[static_cast<std::size_t>(index)].right = r;
    return index;
  }

  const Dataset2D& data_;
  const ForestConfig& config_;
  Task task_;
  std::mt19937_64& rng_;
  std::size_t per_split_ = 1;
  std::vector<std::size_t> features_;
  DecisionTree tree_;
};

std::mt19937_64 tree_rng(std::uint64_t seed, std::size_t tree, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tree), static_cast<std::uint32_t>(tree >> 32), purpose};
  return std::mt19937_64(seq);
}

}  // namespace

Forest fit_forest(const Dataset2D& train, const ForestConfig& config, Task task) {
  train.validate();
  config.validate();
  if (train.rows() < 2) throw DataError("forest needs at least two rows");
  if (task == Task::classification && train.n_classes < 1) throw DataError("classification forest needs classes");

  Forest forest;
  forest.task = task;
  forest.n_classes = task == Task::classification ? train.n_classes : 0;

  // Per-class index lists so that each class draws its bootstrap sample from
  // an identically seeded stream.
  std::vector<std::vector<std::size_t>> groups;
  if (task == Task::classification) {
    groups.resize(train.n_classes);
    const auto labels = train.class_labels();
    for (std::size_t i = 0; i < labels.size(); ++i) groups[static_cast<std::size_t>(labels[i])].push_back(i);
  } else {
    groups.emplace_back(train.rows());
    std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
  }

  for (std::size_t t = 0; t < config.n_trees; ++t) {
    std::vector<std::size_t> samples;
    samples.reserve(train.rows());
    for (const auto& group : groups) {
      if (!config.bootstrap) {
        samples.insert(samples.end(), group.begin(), group.end());
        continue;
      }
      if (group.empty()) continue;
      auto rng = tree_rng(config.seed, t, 0x626f6f74u);
      std::uniform_int_distribution<std::size_t> pick(0, group.size() - 1);
      for (std::size_t k = 0; k < group.size(); ++k) samples.push_back(group[pick(rng)]);
    }
    auto rng = tree_rng(config.seed, t, 0x73706c74u);
    TreeBuilder builder(train, config, task, rng);
    forest.trees.push_back(builder.build(std::move(samples)));
  }
  return forest;
}

Eigen::MatrixXd Forest::votes(const Eigen::MatrixXd& x) const {
  if (task != Task::classification) throw ConfigError("votes are defined for classification forests");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), static_cast<Eigen::Index>(n_classes));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (const auto& tree : trees) {
      const auto& counts = tree.leaf(x.row(i)).counts;
      const double top = *std::max_element(counts.begin(), counts.end());
      const double tied = static_cast<double>(std::count(counts.begin(), counts.end(), top));
      for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == top) out(i, static_cast<Eigen::Index>(c)) += 1.0 / tied;
      }
    }
  }
  return out;
}

std::vector<int> Forest::predict_classes(const Eigen::MatrixXd& x) const {
  const auto v = votes(x);
  std::vector<int> out(static_cast<std::size_t>(v.rows()));
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    Eigen::Index best = 0;
    v.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

Eigen::VectorXd Forest::predict_values(const Eigen::MatrixXd& x) const {
  if (task != Task::regression) throw ConfigError("predict_values is defined for regression forests");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (const auto& tree : trees) out(i) += tree.leaf(x.row(i)).value;
    out(i) /= static_cast<double>(trees.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

void check_lengths(std::size_t pred, std::size_t truth) {
  if (pred != truth) throw ShapeError("prediction and truth lengths differ");
  if (pred == 0) throw ShapeError("metrics need at least one prediction");
}

}  // namespace

double accuracy(std::span<const int> pred, std::span<const int> truth) {
  check_lengths(pred.size(), truth.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double macro_f1(std::span<const int> pred, std::span<const int> truth, std::size_t n_classes) {
  check_lengths(pred.size(), truth.size());
  if (n_classes == 0) throw ShapeError("macro-F1 needs at least one class");
  std::vector<double> tp(n_classes, 0.0), fp(n_classes, 0.0), fn(n_classes, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || truth[i] < 0 || static_cast<std::size_t>(pred[i]) >= n_classes ||
        static_cast<std::size_t>(truth[i]) >= n_classes) {
      throw ShapeError("label outside 0.." + std::to_string(n_classes - 1));
    }
    const auto p = static_cast<std::size_t>(pred[i]), t = static_cast<std::size_t>(truth[i]);
    if (p == t) {
      tp[p] += 1.0;
    } else {
      fp[p] += 1.0;
      fn[t] += 1.0;
    }
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const double precision = tp[c] + fp[c] > 0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
    const double recall = tp[c] + fn[c] > 0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
    sum += precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  return sum / static_cast<double>(n_classes);
}

double r_squared(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw ShapeError("prediction and truth lengths differ");
  if (truth.size() < 2) throw ShapeError("R^2 needs at least two values");
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) throw DataError("R^2 is undefined for constant truth");
  return 1.0 - ss_res / ss_tot;
}

}  // namespace tabsyn
