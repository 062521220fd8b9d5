#pragma once

#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabsyn/dataset.hpp"
#include "tabsyn/error.hpp"
#include "tabsyn/ml.hpp"

namespace tabsyn {

enum class Phase { train, generate, total };
std::string_view to_string(Phase phase);
Phase phase_from_string(std::string_view text);

struct RuntimeStat {
  Phase phase = Phase::total;
  std::vector<double> repetitions;  // seconds
  double mean_seconds = 0.0;

  void add(double seconds);
  bool operator==(const RuntimeStat&) const = default;
};
nlohmann::json to_json(const RuntimeStat& stat);
RuntimeStat runtime_stat_from_json(const nlohmann::json& json);

// Held by every timed workload so that no two are measured concurrently.
std::mutex& timing_mutex();

class MeasurementError : public Error {
 public:
  MeasurementError(const std::string& message, RuntimeStat partial) : Error(message), partial_(std::move(partial)) {}
  const RuntimeStat& partial() const { return partial_; }

 private:
  RuntimeStat partial_;
};

// Wall seconds of one call on a monotonic clock; takes no lock.
double time_seconds(const std::function<void()>& workload);

// Runs `workload` `repetitions` times under the timing lock on a monotonic
// clock. A throwing workload surfaces as MeasurementError carrying the
// repetitions completed so far.
RuntimeStat measure_runtime(const std::function<void()>& workload, std::size_t repetitions = 5,
                            Phase phase = Phase::total);

struct UtilityConfig {
  ForestConfig forest;
  std::size_t seeds = 5;
  double logistic_l2 = 1e-4;
  std::size_t logistic_iters = 500;
  double linear_l2 = 1e-8;

  bool operator==(const UtilityConfig&) const = default;
};
nlohmann::json to_json(const UtilityConfig& config);
UtilityConfig utility_config_from_json(const nlohmann::json& json);

struct MetricComparison {
  std::string learner;  // logistic | linear | forest
  std::string metric;   // accuracy | macro_f1 | r2
  double real = 0.0;
  double synthetic = 0.0;
  double delta = 0.0;  // synthetic - real

  bool operator==(const MetricComparison&) const = default;
};

struct UtilityResult {
  Task task = Task::classification;
  std::vector<MetricComparison> metrics;
  std::size_t seeds = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;

  const MetricComparison& find(std::string_view learner, std::string_view metric) const;
  bool operator==(const UtilityResult&) const = default;
};
nlohmann::json to_json(const UtilityResult& result);
UtilityResult utility_result_from_json(const nlohmann::json& json);

// Both arms are scored on `real_test`. Features use real_train's schema
// statistics. Metrics are means over `seeds` learner seeds.
UtilityResult evaluate_utility(const DataTable& real_train, const DataTable& synth_train, const DataTable& real_test,
                               const UtilityConfig& config = {});

struct SimilarityConfig {
  ForestConfig forest;
  double test_fraction = 0.3;
  std::size_t min_rows = 20;

  bool operator==(const SimilarityConfig&) const = default;
};
nlohmann::json to_json(const SimilarityConfig& config);
SimilarityConfig similarity_config_from_json(const nlohmann::json& json);

struct SimilarityResult {
  double discriminator_accuracy = 0.0;
  std::size_t n_real = 0;
  std::size_t n_synth = 0;
  std::size_t n_per_class = 0;  // after balancing
  std::size_t n_test = 0;
  std::string protocol;

  bool operator==(const SimilarityResult&) const = default;
};
nlohmann::json to_json(const SimilarityResult& result);
SimilarityResult similarity_result_from_json(const nlohmann::json& json);

// real = 0, synth = 1; continuous features are z-scores (real's statistics)
// rounded to the codec's four decimals; the larger side is downsampled, each class is split
// 70/30, a forest is fit on the 70% and scored on the 30%. A test row whose
// votes tie counts as half correct.
SimilarityResult discriminator_similarity(const DataTable& real, const DataTable& synth, std::uint64_t seed,
                                          const SimilarityConfig& config = {});

// Schemas agree on column names, kinds, categories, target and task
// (normalization statistics may differ).
bool same_structure(const TableSchema& a, const TableSchema& b);

}  // namespace tabsyn
