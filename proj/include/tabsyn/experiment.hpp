#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabsyn/dataset.hpp"
#include "tabsyn/eval.hpp"
#include "tabsyn/sampler.hpp"
#include "tabsyn/tokenizer.hpp"
#include "tabsyn/trainer.hpp"
#include "tabsyn/transformer.hpp"

namespace tabsyn {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

// single_table redraws the column order of every row each epoch;
// relational keeps the schema order fixed (the parent-table model of the
// two-table pipeline).
enum class ToolMode { single_table, relational };
std::string_view to_string(ToolMode mode);
ToolMode tool_mode_from_string(std::string_view text);

struct GridPoint {
  std::uint32_t layers = 2;
  std::uint32_t hidden = 32;
  std::uint32_t heads = 4;
  std::optional<std::size_t> train_rows;  // truncates the training split

  bool operator==(const GridPoint&) const = default;
};

struct DatasetSpec {
  std::filesystem::path path;  // CSV; resolved against the config directory
  std::string fixture;         // built-in generator instead of a file
  std::size_t rows = 500;      // fixture rows
  std::uint64_t fixture_seed = 0;
  std::string target;
  Task task = Task::classification;

  std::string name() const;
  bool operator==(const DatasetSpec&) const = default;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  DatasetSpec dataset;
  ToolMode tool_mode = ToolMode::single_table;
  std::vector<GridPoint> grid;
  std::uint32_t ffn_mult = 4;
  TrainConfig train;
  SampleConfig sample;
  std::size_t repetitions = 5;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  bool evaluate = true;
  UtilityConfig utility;
  SimilarityConfig similarity;
  std::optional<double> size_constant;
  std::filesystem::path output_dir = "results";

  // Propagates `seed` into the train, sample and learner configurations.
  void apply_seed(std::uint64_t value);
  void validate() const;  // throws ConfigError naming the field
};

nlohmann::json to_json(const ExperimentConfig& config);
// Strict: unknown keys are rejected with the closest known key suggested.
ExperimentConfig config_from_json(const nlohmann::json& json, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// Levenshtein distance, used for key suggestions.
std::size_t edit_distance(std::string_view a, std::string_view b);

// ---------------------------------------------------------------------------
// Single-table pipeline shared by the sweep and the CLI.

struct PreparedData {
  DataTable raw;
  Split split;  // normalized with train statistics
  Vocab vocab;
  std::uint32_t context_len = 0;
};
PreparedData prepare_data(const ExperimentConfig& config);
DataTable load_dataset(const DatasetSpec& spec);

ModelConfig architecture(const GridPoint& point, const PreparedData& data, std::uint32_t ffn_mult);

TrainResult fit_table(const DataTable& train, const Vocab& vocab, const ModelConfig& model_config,
                      const TrainConfig& train_config, ToolMode mode);

// ---------------------------------------------------------------------------
// Reports

struct EvalReport {
  std::string point_id;
  nlohmann::json config;  // echo of every setting that shaped the point
  std::string dataset;
  ToolMode tool_mode = ToolMode::single_table;
  GridPoint point;
  std::string status = "ok";  // ok | failed
  std::string failure_reason;
  std::uint64_t exact_params = 0;
  SizeEstimate size_estimate;
  std::vector<RuntimeStat> runtime;  // train, generate, total
  std::vector<double> epoch_loss;
  std::uint64_t tokens_seen = 0;
  std::optional<GenerationStats> generation;
  std::optional<UtilityResult> utility;
  std::optional<SimilarityResult> similarity;
  std::map<std::string, std::string> versions;

  bool ok() const { return status == "ok"; }
  const RuntimeStat* runtime_for(Phase phase) const;
  bool operator==(const EvalReport&) const = default;
};

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& json);
// Report JSON with wall-clock measurements removed.
nlohmann::json without_timing(const EvalReport& report);

// Echo of the shared settings plus one grid point; its hash names the point.
nlohmann::json point_echo(const ExperimentConfig& config, const GridPoint& point);
std::string point_hash(const nlohmann::json& echo);

struct SweepOptions {
  bool parallel = false;
  std::size_t max_new_points = std::numeric_limits<std::size_t>::max();  // stop early (simulated interruption)
  std::function<void(const std::string&)> log;
};

struct SweepOutcome {
  std::vector<EvalReport> reports;  // grid order; points never reached are absent
  std::size_t executed = 0;
  std::size_t skipped = 0;
};

// Completed points are cached in <output_dir>/points/<id>.json and skipped on
// rerun; failed points are retried. All reports are also written to
// <output_dir>/reports.json.
SweepOutcome run_sweep(const ExperimentConfig& config, const SweepOptions& options = {});

std::vector<EvalReport> load_reports(const std::filesystem::path& directory);

enum class ReportFormat { json, csv };
ReportFormat report_format_from_string(std::string_view text);
std::string render_csv(const std::vector<EvalReport>& reports);
std::filesystem::path emit_report(const std::vector<EvalReport>& reports, ReportFormat format,
                                  const std::filesystem::path& directory);

enum class PlotDimension { runtime, utility, similarity };
std::string_view to_string(PlotDimension dimension);
PlotDimension plot_dimension_from_string(std::string_view text);
std::string render_svg(const std::vector<EvalReport>& reports, PlotDimension dimension);
std::filesystem::path emit_plot(const std::vector<EvalReport>& reports, PlotDimension dimension,
                                const std::filesystem::path& directory);

}  // namespace tabsyn
