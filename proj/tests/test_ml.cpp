#include <cmath>
#include <limits>
#include <random>

#include <Eigen/SVD>

#include "doctest.h"
#include "tabsyn/error.hpp"
#include "tabsyn/fixtures.hpp"
#include "tabsyn/ml.hpp"

using namespace tabsyn;

namespace {

Dataset2D make(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::size_t classes) {
  Dataset2D d;
  d.features = x;
  d.labels = y;
  d.n_classes = classes;
  return d;
}

Dataset2D xor_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 2);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = u(rng);
    x(i, 1) = u(rng);
    y(i) = (x(i, 0) > 0) != (x(i, 1) > 0) ? 1.0 : 0.0;
  }
  return make(x, y, 2);
}

std::vector<int> labels_of(const Dataset2D& d) { return d.class_labels(); }

// Exhaustive best split of a 1-D classification problem by weighted Gini,
// thresholds at midpoints of consecutive distinct values.
double best_gini_threshold(const Eigen::VectorXd& x, const Eigen::VectorXd& y, std::size_t classes) {
  std::vector<std::pair<double, int>> points;
  for (Eigen::Index i = 0; i < x.size(); ++i) points.emplace_back(x(i), static_cast<int>(y(i)));
  std::sort(points.begin(), points.end());
  double best = std::numeric_limits<double>::infinity(), threshold = 0.0;
  for (std::size_t cut = 1; cut < points.size(); ++cut) {
    if (points[cut].first == points[cut - 1].first) continue;
    std::vector<double> left(classes, 0.0), right(classes, 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) (i < cut ? left : right)[static_cast<std::size_t>(points[i].second)] += 1;
    auto gini = [](const std::vector<double>& counts) {
      double n = 0, sq = 0;
      for (double c : counts) n += c;
      for (double c : counts) sq += (c / n) * (c / n);
      return n * (1.0 - sq);
    };
    const double impurity = gini(left) + gini(right);
    if (impurity < best - 1e-12) {
      best = impurity;
      threshold = 0.5 * (points[cut - 1].first + points[cut].first);
    }
  }
  return threshold;
}

double train_accuracy(const Forest& forest, const Dataset2D& d) {
  const auto pred = forest.predict_classes(d.features);
  return accuracy(pred, labels_of(d));
}

}  // namespace

TEST_CASE("metrics") {
  using V = std::vector<int>;
  SUBCASE("accuracy") {
    CHECK(accuracy(V{0, 1, 2}, V{0, 1, 2}) == 1.0);
    CHECK(accuracy(V{1, 1}, V{0, 0}) == 0.0);
    CHECK(accuracy(V{0, 1, 1, 1}, V{0, 0, 1, 1}) == 0.75);
    CHECK_THROWS_AS(accuracy(V{0}, V{0, 1}), ShapeError);
    CHECK_THROWS(accuracy(V{}, V{}));
  }
  SUBCASE("macro_f1") {
    // Hand confusion matrix: class 0 P=1 R=1/2 F1=2/3; class 1 P=2/3 R=1 F1=0.8.
    CHECK(macro_f1(V{0, 1, 1, 1}, V{0, 0, 1, 1}, 2) == doctest::Approx((2.0 / 3.0 + 0.8) / 2.0).epsilon(1e-12));
    CHECK(macro_f1(V{0, 1, 1, 1}, V{0, 0, 1, 1}, 2) == doctest::Approx(0.7333).epsilon(1e-4));
    CHECK(macro_f1(V{0, 1, 2}, V{0, 1, 2}, 3) == 1.0);
    CHECK(macro_f1(V{1, 1, 1}, V{0, 0, 0}, 2) == 0.0);
    // Absent class 2 contributes 0 and is averaged.
    CHECK(macro_f1(V{0, 1}, V{0, 1}, 3) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(macro_f1(V{0}, V{0, 1}, 2), ShapeError);
  }
  SUBCASE("macro_f1 equals accuracy on perfect predictions") {
    const V truth{0, 2, 1, 1, 0, 2};
    CHECK(macro_f1(truth, truth, 3) == accuracy(truth, truth));
  }
  SUBCASE("r_squared") {
    using D = std::vector<double>;
    CHECK(r_squared(D{1, 2, 3}, D{1, 2, 3}) == 1.0);
    CHECK(r_squared(D{2.5, 2.5, 2.5, 2.5}, D{1, 2, 3, 4}) == doctest::Approx(0.0));
    CHECK(r_squared(D{1, 2, 3, 5}, D{1, 2, 3, 4}) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK_THROWS_AS(r_squared(D{1, 2}, D{3, 3}), DataError);
    CHECK_THROWS_AS(r_squared(D{1, 2}, D{1, 2, 3}), ShapeError);
  }
}

TEST_CASE("fit_logistic") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.5);
  Eigen::MatrixXd x(40, 2);
  Eigen::VectorXd y(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    const double center = i < 20 ? -2.0 : 2.0;
    x(i, 0) = center + noise(rng);
    x(i, 1) = center + noise(rng);
    y(i) = i < 20 ? 0 : 1;
  }
  const auto data = make(x, y, 2);
  SUBCASE("separable blobs") {
    const auto model = fit_logistic(data);
    CHECK(accuracy(model.predict(x), labels_of(data)) >= 0.95);
    const Eigen::MatrixXd p = model.probabilities(x);
    for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0));
  }
  SUBCASE("duplicated data gives the same weights") {
    Eigen::MatrixXd x2(80, 2);
    x2 << x, x;
    Eigen::VectorXd y2(80);
    y2 << y, y;
    const auto a = fit_logistic(data);
    const auto b = fit_logistic(make(x2, y2, 2));
    CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((a.bias - b.bias).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("single class is an error") {
    CHECK_THROWS_AS(fit_logistic(make(x, Eigen::VectorXd::Zero(40), 2)), DataError);
  }
  SUBCASE("three classes") {
    Eigen::MatrixXd x3(60, 1);
    Eigen::VectorXd y3(60);
    for (Eigen::Index i = 0; i < 60; ++i) {
      y3(i) = static_cast<double>(i / 20);
      x3(i, 0) = 4.0 * y3(i) + noise(rng);
    }
    const auto model = fit_logistic(make(x3, y3, 3), 1e-4, 3000);
    CHECK(accuracy(model.predict(x3), make(x3, y3, 3).class_labels()) >= 0.9);
  }
}

TEST_CASE("fit_linear") {
  SUBCASE("exact line") {
    Eigen::MatrixXd x(5, 1);
    x << -2, 0, 1, 3, 7;
    const Eigen::VectorXd y = (2.0 * x.col(0)).array() + 1.0;
    const auto model = fit_linear(make(x, y, 0));
    CHECK(std::abs(model.coefficients(0) - 2.0) < 1e-6);
    CHECK(std::abs(model.intercept - 1.0) < 1e-6);
  }
  SUBCASE("constant target") {
    Eigen::MatrixXd x(4, 1);
    x << 1, 2, 3, 4;
    const auto model = fit_linear(make(x, Eigen::VectorXd::Constant(4, 5.0), 0));
    CHECK(std::abs(model.coefficients(0)) < 1e-6);
    CHECK(std::abs(model.intercept - 5.0) < 1e-6);
  }
  SUBCASE("pseudo-inverse oracle on random 50x3 systems") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> n(0.0, 1.0);
      Eigen::MatrixXd x(50, 3);
      Eigen::VectorXd y(50);
      for (Eigen::Index i = 0; i < 50; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = n(rng);
        y(i) = n(rng) * 3.0 + x(i, 0);
      }
      Eigen::MatrixXd design(50, 4);
      design << x, Eigen::VectorXd::Ones(50);
      const Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Eigen::VectorXd s = svd.singularValues();
      const Eigen::MatrixXd pinv = svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
      const Eigen::VectorXd beta = pinv * y;
      const auto model = fit_linear(make(x, y, 0));
      CHECK((model.coefficients - beta.head(3)).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(std::abs(model.intercept - beta(3)) < 1e-6);
    }
  }
  SUBCASE("degenerate systems") {
    CHECK_THROWS_AS(fit_linear(make(Eigen::MatrixXd::Ones(2, 3), Eigen::VectorXd::Ones(2), 0)), DataError);
    Eigen::MatrixXd collinear(6, 2);
    collinear << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10, 6, 12;
    CHECK_THROWS_AS(fit_linear(make(collinear, Eigen::VectorXd::LinSpaced(6, 0, 1), 0), 0.0), NumericError);
  }
}

TEST_CASE("fit_forest") {
  SUBCASE("XOR") {
    const auto data = xor_data(200, 3);
    ForestConfig config;
    config.seed = 1;
    CHECK(train_accuracy(fit_forest(data, config, Task::classification), data) >= 0.95);
  }
  SUBCASE("ensemble no worse than one tree on XOR") {
    const auto data = xor_data(200, 4);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      ForestConfig forest, tree;
      forest.seed = tree.seed = seed;
      tree.n_trees = 1;
      CHECK(train_accuracy(fit_forest(data, forest, Task::classification), data) >=
            train_accuracy(fit_forest(data, tree, Task::classification), data));
    }
  }
  SUBCASE("constant labels") {
    auto data = xor_data(50, 5);
    data.labels.setConstant(1.0);
    const auto forest = fit_forest(data, ForestConfig{}, Task::classification);
    for (int p : forest.predict_classes(xor_data(30, 6).features)) CHECK(p == 1);
    auto reg = data;
    reg.n_classes = 0;
    reg.labels.setConstant(2.5);
    const auto values = fit_forest(reg, ForestConfig{}, Task::regression).predict_values(reg.features);
    for (Eigen::Index i = 0; i < values.size(); ++i) CHECK(values(i) == 2.5);
  }
  SUBCASE("depth-1 stump matches the exhaustive Gini search") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(0.0, 10.0);
      std::bernoulli_distribution flip(0.2);
      Eigen::MatrixXd x(60, 1);
      Eigen::VectorXd y(60);
      const double cut = u(rng);
      for (Eigen::Index i = 0; i < 60; ++i) {
        x(i, 0) = u(rng);
        y(i) = (x(i, 0) > cut) != flip(rng) ? 1.0 : 0.0;
      }
      ForestConfig config;
      config.n_trees = 1;
      config.max_depth = 1;
      config.min_samples_leaf = 1;
      config.bootstrap = false;
      config.seed = seed;
      const auto forest = fit_forest(make(x, y, 2), config, Task::classification);
      REQUIRE(forest.trees.size() == 1);
      const auto& root = forest.trees[0].nodes[0];
      REQUIRE(root.feature == 0);
      CHECK(root.threshold == doctest::Approx(best_gini_threshold(x.col(0), y, 2)).epsilon(1e-12));
    }
  }
  SUBCASE("regression forest fits a linear signal") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd x(300, 2);
    Eigen::VectorXd y(300);
    for (Eigen::Index i = 0; i < 300; ++i) {
      x(i, 0) = n(rng);
      x(i, 1) = n(rng);
      y(i) = 2.0 * x(i, 0) - x(i, 1);
    }
    const auto forest = fit_forest(make(x, y, 0), ForestConfig{}, Task::regression);
    const Eigen::VectorXd pred = forest.predict_values(x);
    CHECK(r_squared(std::vector<double>(pred.data(), pred.data() + pred.size()),
                    std::vector<double>(y.data(), y.data() + y.size())) > 0.9);
  }
  SUBCASE("deterministic per seed") {
    const auto data = xor_data(100, 9);
    ForestConfig config;
    config.seed = 12;
    const auto a = fit_forest(data, config, Task::classification);
    const auto b = fit_forest(data, config, Task::classification);
    CHECK(a.votes(data.features) == b.votes(data.features));
  }
  SUBCASE("config validation and serialization") {
    ForestConfig config;
    config.n_trees = 0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config.n_trees = 7;
    config.seed = 99;
    CHECK(forest_config_from_json(to_json(config)) == config);
  }
}

TEST_CASE("to_dataset") {
  const auto raw = linear_fixture(40, 2);
  const auto split = preprocess(raw, 0.25, 1);
  const auto data = to_dataset(split.train, split.train.schema);
  CHECK(data.n_classes == 0);
  CHECK(data.rows() == 30);
  CHECK(data.dims() == 2 + 3);  // x1, x2, one-hot group
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    CHECK(data.features.row(i).tail(3).sum() == 1.0);
  }
  // Continuous features are z-scores, so they average to zero on train.
  CHECK(std::abs(data.features.col(0).mean()) < 1e-9);
  // Regression labels stay in original units.
  const auto original = denormalize(split.train);
  CHECK(data.labels(0) == doctest::Approx(std::get<double>(original.rows[0][3])));
  const auto with_target = to_dataset(split.train, split.train.schema, FeatureOptions{true, true, 4});
  CHECK(with_target.dims() == 6);
  const double v = with_target.features(0, 0);
  CHECK(v == doctest::Approx(std::round(v * 1e4) / 1e4).epsilon(1e-15));
}
