#include "tabsyn/eval.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "tabsyn/textual_codec.hpp"

namespace tabsyn {

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::train: return "train";
    case Phase::generate: return "generate";
    case Phase::total: return "total";
  }
  return "total";
}

Phase phase_from_string(std::string_view text) {
  if (text == "train") return Phase::train;
  if (text == "generate") return Phase::generate;
  if (text == "total") return Phase::total;
  throw ConfigError("unknown phase '" + std::string(text) + "'");
}

void RuntimeStat::add(double seconds) {
  repetitions.push_back(seconds);
  mean_seconds = std::accumulate(repetitions.begin(), repetitions.end(), 0.0) / static_cast<double>(repetitions.size());
}

nlohmann::json to_json(const RuntimeStat& stat) {
  return {{"phase", to_string(stat.phase)}, {"repetitions", stat.repetitions}, {"mean_seconds", stat.mean_seconds}};
}

RuntimeStat runtime_stat_from_json(const nlohmann::json& json) {
  RuntimeStat stat;
  stat.phase = phase_from_string(json.at("phase").get<std::string>());
  stat.repetitions = json.at("repetitions").get<std::vector<double>>();
  stat.mean_seconds = json.at("mean_seconds").get<double>();
  return stat;
}

std::mutex& timing_mutex() {
  static std::mutex mutex;
  return mutex;
}

double time_seconds(const std::function<void()>& workload) {
  const auto start = std::chrono::steady_clock::now();
  workload();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

RuntimeStat measure_runtime(const std::function<void()>& workload, std::size_t repetitions, Phase phase) {
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
  RuntimeStat stat;
  stat.phase = phase;
  std::lock_guard lock(timing_mutex());
  for (std::size_t r = 0; r < repetitions; ++r) {
    try {
      stat.add(time_seconds(workload));
    } catch (const std::exception& e) {
      throw MeasurementError(std::string("workload failed in repetition ") + std::to_string(r + 1) + ": " + e.what(),
                             stat);
    }
  }
  return stat;
}

// ---------------------------------------------------------------------------
// Utility

nlohmann::json to_json(const UtilityConfig& config) {
  return {{"forest", to_json(config.forest)},
          {"seeds", config.seeds},
          {"logistic_l2", config.logistic_l2},
          {"logistic_iters", config.logistic_iters},
          {"linear_l2", config.linear_l2}};
}

UtilityConfig utility_config_from_json(const nlohmann::json& json) {
  UtilityConfig config;
  if (json.contains("forest")) config.forest = forest_config_from_json(json.at("forest"));
  config.seeds = json.value("seeds", config.seeds);
  config.logistic_l2 = json.value("logistic_l2", config.logistic_l2);
  config.logistic_iters = json.value("logistic_iters", config.logistic_iters);
  config.linear_l2 = json.value("linear_l2", config.linear_l2);
  return config;
}

const MetricComparison& UtilityResult::find(std::string_view learner, std::string_view metric) const {
  for (const auto& m : metrics) {
    if (m.learner == learner && m.metric == metric) return m;
  }
  throw DataError("no utility metric " + std::string(learner) + "/" + std::string(metric));
}

nlohmann::json to_json(const UtilityResult& result) {
  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& m : result.metrics) {
    metrics.push_back(
        {{"learner", m.learner}, {"metric", m.metric}, {"real", m.real}, {"synthetic", m.synthetic}, {"delta", m.delta}});
  }
  return {{"task", to_string(result.task)},
          {"metrics", std::move(metrics)},
          {"seeds", result.seeds},
          {"n_train", result.n_train},
          {"n_test", result.n_test}};
}

UtilityResult utility_result_from_json(const nlohmann::json& json) {
  UtilityResult result;
  result.task = task_from_string(json.at("task").get<std::string>());
  for (const auto& m : json.at("metrics")) {
    result.metrics.push_back({m.at("learner").get<std::string>(), m.at("metric").get<std::string>(),
                              m.at("real").get<double>(), m.at("synthetic").get<double>(),
                              m.at("delta").get<double>()});
  }
  result.seeds = json.at("seeds").get<std::size_t>();
  result.n_train = json.at("n_train").get<std::size_t>();
  result.n_test = json.at("n_test").get<std::size_t>();
  return result;
}

bool same_structure(const TableSchema& a, const TableSchema& b) {
  if (a.target_column != b.target_column || a.task != b.task || a.size() != b.size()) return false;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const auto& x = a.columns[c];
    const auto& y = b.columns[c];
    if (x.name != y.name || x.kind != y.kind || x.categories != y.categories) return false;
  }
  return true;
}

namespace {

struct ArmScores {
  std::vector<double> values;  // one per (learner, metric) in report order
};

ArmScores score_arm(const Dataset2D& train, const Dataset2D& test, Task task, const UtilityConfig& config) {
  ArmScores out;
  const auto seeds = static_cast<double>(config.seeds);
  if (task == Task::classification) {
    const auto truth = test.class_labels();
    const auto labels = train.class_labels();
    // A single-class arm cannot fit a logistic model; it predicts its one class.
    const bool single = std::adjacent_find(labels.begin(), labels.end(), std::not_equal_to<>()) == labels.end();
    const auto logistic = single ? std::vector<int>(truth.size(), labels.front())
                                 : fit_logistic(train, config.logistic_l2, config.logistic_iters).predict(test.features);
    double forest_acc = 0.0, forest_f1 = 0.0;
    for (std::size_t s = 0; s < config.seeds; ++s) {
      auto forest_config = config.forest;
      forest_config.seed = config.forest.seed + s;
      const auto pred = fit_forest(train, forest_config, task).predict_classes(test.features);
      forest_acc += accuracy(pred, truth);
      forest_f1 += macro_f1(pred, truth, test.n_classes);
    }
    // Logistic regression is deterministic; its seed mean is the single fit.
    out.values = {accuracy(logistic, truth), macro_f1(logistic, truth, test.n_classes), forest_acc / seeds,
                  forest_f1 / seeds};
  } else {
    const std::vector<double> truth(test.labels.data(), test.labels.data() + test.labels.size());
    const Eigen::VectorXd linear = fit_linear(train, config.linear_l2).predict(test.features);
    double forest_r2 = 0.0;
    for (std::size_t s = 0; s < config.seeds; ++s) {
      auto forest_config = config.forest;
      forest_config.seed = config.forest.seed + s;
      const Eigen::VectorXd pred = fit_forest(train, forest_config, task).predict_values(test.features);
      forest_r2 += r_squared(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())), truth);
    }
    out.values = {r_squared(std::span<const double>(linear.data(), static_cast<std::size_t>(linear.size())), truth),
                  forest_r2 / seeds};
  }
  return out;
}

}  // namespace

UtilityResult evaluate_utility(const DataTable& real_train, const DataTable& synth_train, const DataTable& real_test,
                               const UtilityConfig& config) {
  if (!same_structure(real_train.schema, synth_train.schema) || !same_structure(real_train.schema, real_test.schema)) {
    throw DataError("utility evaluation needs tables sharing one schema");
  }
  if (real_train.size() != synth_train.size()) {
    throw DataError("synthetic training arm has " + std::to_string(synth_train.size()) + " rows, real arm " +
                    std::to_string(real_train.size()) + "; equal sizes required");
  }
  if (config.seeds < 1) throw ConfigError("utility seeds must be >= 1");
  const auto& reference = real_train.schema;
  const auto task = reference.task;
  const auto real = to_dataset(real_train, reference);
  const auto synth = to_dataset(synth_train, reference);
  const auto test = to_dataset(real_test, reference);

  const auto real_scores = score_arm(real, test, task, config);
  const auto synth_scores = score_arm(synth, test, task, config);

  UtilityResult result;
  result.task = task;
  result.seeds = config.seeds;
  result.n_train = real_train.size();
  result.n_test = real_test.size();
  const std::vector<std::pair<std::string, std::string>> names =
      task == Task::classification
          ? std::vector<std::pair<std::string, std::string>>{{"logistic", "accuracy"},
                                                             {"logistic", "macro_f1"},
                                                             {"forest", "accuracy"},
                                                             {"forest", "macro_f1"}}
          : std::vector<std::pair<std::string, std::string>>{{"linear", "r2"}, {"forest", "r2"}};
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double r = real_scores.values[i], s = synth_scores.values[i];
    result.metrics.push_back({names[i].first, names[i].second, r, s, s - r});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Similarity

nlohmann::json to_json(const SimilarityConfig& config) {
  return {{"forest", to_json(config.forest)}, {"test_fraction", config.test_fraction}, {"min_rows", config.min_rows}};
}

SimilarityConfig similarity_config_from_json(const nlohmann::json& json) {
  SimilarityConfig config;
  if (json.contains("forest")) config.forest = forest_config_from_json(json.at("forest"));
  config.test_fraction = json.value("test_fraction", config.test_fraction);
  config.min_rows = json.value("min_rows", config.min_rows);
  return config;
}

nlohmann::json to_json(const SimilarityResult& result) {
  return {{"discriminator_accuracy", result.discriminator_accuracy},
          {"n_real", result.n_real},
          {"n_synth", result.n_synth},
          {"n_per_class", result.n_per_class},
          {"n_test", result.n_test},
          {"protocol", result.protocol}};
}

SimilarityResult similarity_result_from_json(const nlohmann::json& json) {
  SimilarityResult result;
  result.discriminator_accuracy = json.at("discriminator_accuracy").get<double>();
  result.n_real = json.at("n_real").get<std::size_t>();
  result.n_synth = json.at("n_synth").get<std::size_t>();
  result.n_per_class = json.at("n_per_class").get<std::size_t>();
  result.n_test = json.at("n_test").get<std::size_t>();
  result.protocol = json.at("protocol").get<std::string>();
  return result;
}

namespace {

// The same stream serves both classes so that swapping real and synthetic
// reproduces the same selections.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

std::string format_fraction(double value) {
  char buffer[32];
  const auto end = std::to_chars(buffer, buffer + sizeof buffer, value, std::chars_format::general, 3).ptr;
  return std::string(buffer, end);
}

}  // namespace

SimilarityResult discriminator_similarity(const DataTable& real, const DataTable& synth, std::uint64_t seed,
                                          const SimilarityConfig& config) {
  if (!same_structure(real.schema, synth.schema)) throw DataError("similarity needs tables sharing one schema");
  if (real.size() < config.min_rows || synth.size() < config.min_rows) {
    throw DataError("similarity needs at least " + std::to_string(config.min_rows) + " rows per table");
  }
  if (!(config.test_fraction > 0.0 && config.test_fraction < 1.0)) {
    throw ConfigError("similarity test_fraction must lie in (0, 1)");
  }
  // Continuous cells are compared at the textual codec's resolution.
  const FeatureOptions options{true, true, kNumberPrecision};
  const std::array<Dataset2D, 2> sides{to_dataset(real, real.schema, options), to_dataset(synth, real.schema, options)};

  const std::size_t m = std::min(real.size(), synth.size());
  const auto n_test = static_cast<std::size_t>(std::llround(config.test_fraction * static_cast<double>(m)));
  if (n_test < 1 || n_test >= m) throw DataError("similarity split leaves an empty fold");

  std::array<std::vector<std::size_t>, 2> train_rows, test_rows;
  for (std::size_t cls = 0; cls < 2; ++cls) {
    auto kept = permutation(sides[cls].rows(), seed, 0x62616cu);
    kept.resize(m);
    std::sort(kept.begin(), kept.end());
    const auto split = permutation(m, seed, 0x73706cu);
    for (std::size_t i = 0; i < m; ++i) (i < n_test ? test_rows : train_rows)[cls].push_back(kept[split[i]]);
  }

  auto assemble = [&](const std::array<std::vector<std::size_t>, 2>& rows) {
    Dataset2D out;
    const auto n = static_cast<Eigen::Index>(rows[0].size() + rows[1].size());
    out.features.resize(n, sides[0].features.cols());
    out.labels.resize(n);
    out.n_classes = 2;
    Eigen::Index k = 0;
    for (std::size_t cls = 0; cls < 2; ++cls) {
      for (auto r : rows[cls]) {
        out.features.row(k) = sides[cls].features.row(static_cast<Eigen::Index>(r));
        out.labels(k++) = static_cast<double>(cls);
      }
    }
    return out;
  };
  const auto train_set = assemble(train_rows);
  const auto test_set = assemble(test_rows);

  auto forest_config = config.forest;
  forest_config.seed = seed;
  const auto votes = fit_forest(train_set, forest_config, Task::classification).votes(test_set.features);
  double correct = 0.0;
  for (Eigen::Index i = 0; i < votes.rows(); ++i) {
    const auto truth = static_cast<Eigen::Index>(test_set.labels(i));
    const double mine = votes(i, truth), other = votes(i, 1 - truth);
    correct += mine > other ? 1.0 : (mine == other ? 0.5 : 0.0);
  }

  SimilarityResult result;
  result.discriminator_accuracy = correct / static_cast<double>(votes.rows());
  result.n_real = real.size();
  result.n_synth = synth.size();
  result.n_per_class = m;
  result.n_test = static_cast<std::size_t>(votes.rows());
  result.protocol = "codec-resolution z-scores; balanced by downsampling; stratified " + format_fraction(1.0 - config.test_fraction) + "/" +
                    format_fraction(config.test_fraction) + " split; random forest; ties count 0.5";
  return result;
}

}  // namespace tabsyn
