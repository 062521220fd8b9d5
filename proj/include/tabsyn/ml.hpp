#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "tabsyn/dataset.hpp"

namespace tabsyn {

// Row-major design matrix plus labels. Classification labels are class
// indices 0..n_classes-1 stored as doubles; n_classes is 0 for regression.
struct Dataset2D {
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
  std::size_t n_classes = 0;

  std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(features.cols()); }
  std::vector<int> class_labels() const;
  void validate() const;  // throws DataError
};

struct FeatureOptions {
  bool include_target = false;
  // z-score continuous columns with the reference statistics; otherwise keep
  // original units.
  bool standardize = true;
  // Rounds standardized values to this many decimals (negative = off).
  int quantize_decimals = -1;
};

// One-hot categoricals and continuous columns, in schema order. Continuous
// statistics and category lists come from `reference`; the table may be in
// original or normalized units.
Dataset2D to_dataset(const DataTable& table, const TableSchema& reference, const FeatureOptions& options = {});

// Multinomial logistic regression: full-batch gradient descent on mean
// cross-entropy + l2/2 * |W|^2 (bias excluded), zero initialization.
struct LogisticModel {
  Eigen::MatrixXd weights;  // d x K
  Eigen::VectorXd bias;     // K

  Eigen::MatrixXd probabilities(const Eigen::MatrixXd& x) const;
  std::vector<int> predict(const Eigen::MatrixXd& x) const;
};
LogisticModel fit_logistic(const Dataset2D& train, double l2 = 1e-4, std::size_t iters = 500);

// Ridge regression with an unpenalized intercept.
struct LinearModel {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};
LinearModel fit_linear(const Dataset2D& train, double l2 = 1e-8);

struct ForestConfig {
  std::uint32_t n_trees = 100;
  std::uint32_t max_depth = 12;
  std::uint32_t min_samples_leaf = 2;
  std::uint32_t features_per_split = 0;  // 0 = ceil(sqrt(d))
  std::uint64_t seed = 0;
  bool bootstrap = true;

  void validate() const;
  bool operator==(const ForestConfig&) const = default;
};
nlohmann::json to_json(const ForestConfig& config);
ForestConfig forest_config_from_json(const nlohmann::json& json);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;           // leaf mean (regression)
  std::vector<double> counts;   // leaf class counts (classification)
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  const TreeNode& leaf(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct Forest {
  Task task = Task::classification;
  std::size_t n_classes = 0;
  std::vector<DecisionTree> trees;

  // Each tree casts one vote for its leaf majority; a tied leaf splits its
  // vote evenly among the tied classes.
  Eigen::MatrixXd votes(const Eigen::MatrixXd& x) const;
  std::vector<int> predict_classes(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd predict_values(const Eigen::MatrixXd& x) const;
};

// CART trees, Gini (classification) or squared error (regression). Bootstrap
// resamples are drawn per class for classification.
Forest fit_forest(const Dataset2D& train, const ForestConfig& config, Task task);

double accuracy(std::span<const int> pred, std::span<const int> truth);
// Classes absent from both pred and truth contribute 0; zero-denominator
// precision or recall is 0.
double macro_f1(std::span<const int> pred, std::span<const int> truth, std::size_t n_classes);
double r_squared(std::span<const double> pred, std::span<const double> truth);

}  // namespace tabsyn
