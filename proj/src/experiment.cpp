#include "tabsyn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "tabsyn/fixtures.hpp"

namespace tabsyn {

using nlohmann::json;

std::string_view to_string(ToolMode mode) {
  return mode == ToolMode::single_table ? "single_table" : "relational";
}

ToolMode tool_mode_from_string(std::string_view text) {
  if (text == "single_table") return ToolMode::single_table;
  if (text == "relational") return ToolMode::relational;
  throw ConfigError("tool_mode: unknown value '" + std::string(text) + "' (expected single_table or relational)");
}

std::string DatasetSpec::name() const {
  return fixture.empty() ? path.filename().string() : "fixture:" + fixture + "/" + std::to_string(rows);
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diagonal = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diagonal + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diagonal = up;
    }
  }
  return row[b.size()];
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

void check_keys(const json& object, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!object.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : object.items()) {
    const auto& key = item.key();
    if (std::find(allowed.begin(), allowed.end(), key) != allowed.end()) continue;
    std::string_view best;
    std::size_t best_distance = std::numeric_limits<std::size_t>::max();
    for (auto candidate : allowed) {
      const auto d = edit_distance(key, candidate);
      if (d < best_distance) {
        best_distance = d;
        best = candidate;
      }
    }
    std::string message = "unknown key '" + key + "' in " + where;
    if (best_distance <= std::max<std::size_t>(2, key.size() / 3)) message += "; did you mean '" + std::string(best) + "'?";
    throw ConfigError(message);
  }
}

template <typename T>
void read(const json& object, const char* key, T& out, const std::string& where) {
  if (!object.contains(key)) return;
  try {
    out = object.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type (" + object.at(key).dump() + ")");
  }
}

json train_json(const TrainConfig& config) {
  auto j = to_json(config);
  j.erase("seed");
  return j;
}

json sample_json(const SampleConfig& config) {
  auto j = to_json(config);
  j.erase("seed");
  return j;
}

json forest_json(const ForestConfig& config) {
  auto j = to_json(config);
  j.erase("seed");
  return j;
}

json point_json(const GridPoint& point) {
  json j = {{"layers", point.layers}, {"hidden", point.hidden}, {"heads", point.heads}};
  if (point.train_rows) j["train_rows"] = *point.train_rows;
  return j;
}

GridPoint point_from_json(const json& j, const std::string& where) {
  check_keys(j, {"layers", "hidden", "heads", "train_rows"}, where);
  GridPoint point;
  read(j, "layers", point.layers, where);
  read(j, "hidden", point.hidden, where);
  read(j, "heads", point.heads, where);
  if (j.contains("train_rows")) {
    std::size_t rows = 0;
    read(j, "train_rows", rows, where);
    point.train_rows = rows;
  }
  return point;
}

ForestConfig parse_forest(const json& j, const std::string& where) {
  check_keys(j, {"n_trees", "max_depth", "min_samples_leaf", "features_per_split", "bootstrap"}, where);
  ForestConfig config;
  read(j, "n_trees", config.n_trees, where);
  read(j, "max_depth", config.max_depth, where);
  read(j, "min_samples_leaf", config.min_samples_leaf, where);
  read(j, "features_per_split", config.features_per_split, where);
  read(j, "bootstrap", config.bootstrap, where);
  return config;
}

}  // namespace

void ExperimentConfig::apply_seed(std::uint64_t value) {
  seed = value;
  train.seed = value;
  sample.seed = value;
  utility.forest.seed = value;
  similarity.forest.seed = value;
}

void ExperimentConfig::validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw ConfigError("schema_version: unsupported value " + std::to_string(schema_version));
  }
  if (dataset.path.empty() == dataset.fixture.empty()) {
    throw ConfigError("dataset: exactly one of 'path' and 'fixture' is required");
  }
  if (!dataset.path.empty() && dataset.target.empty()) throw ConfigError("dataset.target: required");
  if (grid.empty()) throw ConfigError("grid: at least one grid point is required");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& p = grid[i];
    const auto where = "grid[" + std::to_string(i) + "]";
    if (p.layers < 1) throw ConfigError(where + ".layers: must be >= 1");
    if (p.hidden < 1) throw ConfigError(where + ".hidden: must be >= 1");
    if (p.heads < 1) throw ConfigError(where + ".heads: must be >= 1");
    if (p.hidden % p.heads != 0) {
      throw ConfigError(where + ".hidden: " + std::to_string(p.hidden) + " is not divisible by heads " +
                        std::to_string(p.heads));
    }
  }
  if (ffn_mult < 1) throw ConfigError("ffn_mult: must be >= 1");
  if (repetitions < 1) throw ConfigError("repetitions: must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction: must lie in (0, 1)");
  if (size_constant && !(*size_constant > 0.0)) throw ConfigError("size_constant: must be > 0");
  try {
    train.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  try {
    sample.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("sample: ") + e.what());
  }
  utility.forest.validate();
  similarity.forest.validate();
  if (utility.seeds < 1) throw ConfigError("utility.seeds: must be >= 1");
  if (!(similarity.test_fraction > 0.0 && similarity.test_fraction < 1.0)) {
    throw ConfigError("similarity.test_fraction: must lie in (0, 1)");
  }
}

json to_json(const ExperimentConfig& config) {
  json dataset = {{"target", config.dataset.target}, {"task", to_string(config.dataset.task)}};
  if (!config.dataset.fixture.empty()) {
    dataset["fixture"] = config.dataset.fixture;
    dataset["rows"] = config.dataset.rows;
    dataset["fixture_seed"] = config.dataset.fixture_seed;
  } else {
    dataset["path"] = config.dataset.path.string();
  }
  json grid = json::array();
  for (const auto& point : config.grid) grid.push_back(point_json(point));
  json j = {{"schema_version", config.schema_version},
            {"dataset", std::move(dataset)},
            {"tool_mode", to_string(config.tool_mode)},
            {"grid", std::move(grid)},
            {"ffn_mult", config.ffn_mult},
            {"train", train_json(config.train)},
            {"sample", sample_json(config.sample)},
            {"repetitions", config.repetitions},
            {"seed", config.seed},
            {"test_fraction", config.test_fraction},
            {"evaluate", config.evaluate},
            {"utility",
             {{"forest", forest_json(config.utility.forest)},
              {"seeds", config.utility.seeds},
              {"logistic_l2", config.utility.logistic_l2},
              {"logistic_iters", config.utility.logistic_iters},
              {"linear_l2", config.utility.linear_l2}}},
            {"similarity",
             {{"forest", forest_json(config.similarity.forest)},
              {"test_fraction", config.similarity.test_fraction},
              {"min_rows", config.similarity.min_rows}}},
            {"output_dir", config.output_dir.string()}};
  if (config.size_constant) j["size_constant"] = *config.size_constant;
  return j;
}

ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j,
             {"schema_version", "dataset", "tool_mode", "grid", "ffn_mult", "train", "sample", "repetitions", "seed",
              "test_fraction", "evaluate", "utility", "similarity", "size_constant", "output_dir"},
             "config");
  ExperimentConfig config;
  read(j, "schema_version", config.schema_version, "config");

  if (!j.contains("dataset")) throw ConfigError("dataset: required");
  const auto& d = j.at("dataset");
  check_keys(d, {"path", "fixture", "rows", "fixture_seed", "target", "task"}, "dataset");
  std::string path, task = "classification";
  read(d, "path", path, "dataset");
  read(d, "fixture", config.dataset.fixture, "dataset");
  read(d, "rows", config.dataset.rows, "dataset");
  read(d, "fixture_seed", config.dataset.fixture_seed, "dataset");
  read(d, "target", config.dataset.target, "dataset");
  read(d, "task", task, "dataset");
  try {
    config.dataset.task = task_from_string(task);
  } catch (const Error&) {
    throw ConfigError("dataset.task: unknown value '" + task + "'");
  }
  if (!path.empty()) {
    config.dataset.path = path;
    if (config.dataset.path.is_relative() && !base_dir.empty()) config.dataset.path = base_dir / config.dataset.path;
  }
  if (!config.dataset.fixture.empty()) {
    const auto sample = named_fixture(config.dataset.fixture, 1, 0).schema;
    if (!config.dataset.target.empty() && config.dataset.target != sample.target_column) {
      throw ConfigError("dataset.target: fixture '" + config.dataset.fixture + "' has target '" + sample.target_column +
                        "'");
    }
    if (d.contains("task") && config.dataset.task != sample.task) {
      throw ConfigError("dataset.task: fixture '" + config.dataset.fixture + "' is " + std::string(to_string(sample.task)));
    }
    config.dataset.target = sample.target_column;
    config.dataset.task = sample.task;
  }

  if (j.contains("tool_mode")) {
    std::string mode;
    read(j, "tool_mode", mode, "config");
    config.tool_mode = tool_mode_from_string(mode);
  }
  if (!j.contains("grid") || !j.at("grid").is_array()) throw ConfigError("grid: required list of grid points");
  for (std::size_t i = 0; i < j.at("grid").size(); ++i) {
    config.grid.push_back(point_from_json(j.at("grid")[i], "grid[" + std::to_string(i) + "]"));
  }
  read(j, "ffn_mult", config.ffn_mult, "config");

  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t, {"epochs", "batch_size", "learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon", "grad_clip_norm"},
               "train");
    read(t, "epochs", config.train.epochs, "train");
    read(t, "batch_size", config.train.batch_size, "train");
    read(t, "learning_rate", config.train.learning_rate, "train");
    read(t, "adam_beta1", config.train.beta1, "train");
    read(t, "adam_beta2", config.train.beta2, "train");
    read(t, "adam_epsilon", config.train.epsilon, "train");
    read(t, "grad_clip_norm", config.train.grad_clip_norm, "train");
  }
  if (j.contains("sample")) {
    const auto& s = j.at("sample");
    check_keys(s, {"temperature", "max_tokens", "max_attempts_per_row"}, "sample");
    read(s, "temperature", config.sample.temperature, "sample");
    read(s, "max_tokens", config.sample.max_tokens, "sample");
    read(s, "max_attempts_per_row", config.sample.max_attempts_per_row, "sample");
  }
  read(j, "repetitions", config.repetitions, "config");
  std::uint64_t seed = 0;
  read(j, "seed", seed, "config");
  read(j, "test_fraction", config.test_fraction, "config");
  read(j, "evaluate", config.evaluate, "config");
  if (j.contains("utility")) {
    const auto& u = j.at("utility");
    check_keys(u, {"forest", "seeds", "logistic_l2", "logistic_iters", "linear_l2"}, "utility");
    if (u.contains("forest")) config.utility.forest = parse_forest(u.at("forest"), "utility.forest");
    read(u, "seeds", config.utility.seeds, "utility");
    read(u, "logistic_l2", config.utility.logistic_l2, "utility");
    read(u, "logistic_iters", config.utility.logistic_iters, "utility");
    read(u, "linear_l2", config.utility.linear_l2, "utility");
  }
  if (j.contains("similarity")) {
    const auto& s = j.at("similarity");
    check_keys(s, {"forest", "test_fraction", "min_rows"}, "similarity");
    if (s.contains("forest")) config.similarity.forest = parse_forest(s.at("forest"), "similarity.forest");
    read(s, "test_fraction", config.similarity.test_fraction, "similarity");
    read(s, "min_rows", config.similarity.min_rows, "similarity");
  }
  if (j.contains("size_constant")) {
    double c = 0.0;
    read(j, "size_constant", c, "config");
    config.size_constant = c;
  }
  if (j.contains("output_dir")) {
    std::string out;
    read(j, "output_dir", out, "config");
    config.output_dir = out;
  }
  config.apply_seed(seed);
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in '" + path.string() + "': " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Pipeline

DataTable load_dataset(const DatasetSpec& spec) {
  if (!spec.fixture.empty()) return named_fixture(spec.fixture, spec.rows, spec.fixture_seed);
  return load_csv(spec.path, spec.target, spec.task);
}

namespace {

std::vector<RowSentence> identity_sentences(const DataTable& table) {
  const auto order = ColumnOrder::identity(table.schema.size());
  std::vector<RowSentence> out;
  out.reserve(table.size());
  for (const auto& row : table.rows) out.push_back(row_to_text(row, table.schema, order));
  return out;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData data;
  data.raw = load_dataset(config.dataset);
  data.split = preprocess(data.raw, config.test_fraction, config.seed);
  if (data.split.train.empty()) throw DataError("training split is empty");
  const auto sentences = identity_sentences(data.split.train);
  data.vocab = build_vocab(sentences);
  std::size_t longest = 0;
  for (const auto& sentence : sentences) longest = std::max(longest, encode(sentence, data.vocab, true).size());
  data.context_len = static_cast<std::uint32_t>(longest);
  return data;
}

ModelConfig architecture(const GridPoint& point, const PreparedData& data, std::uint32_t ffn_mult) {
  ModelConfig config;
  config.layers = point.layers;
  config.hidden = point.hidden;
  config.heads = point.heads;
  config.vocab_size = static_cast<std::uint32_t>(data.vocab.size());
  config.context_len = data.context_len;
  config.ffn_mult = ffn_mult;
  return config;
}

TrainResult fit_table(const DataTable& train_table, const Vocab& vocab, const ModelConfig& model_config,
                      const TrainConfig& train_config, ToolMode mode) {
  if (!train_table.normalized) throw DataError("training table must be normalized");
  const auto& schema = train_table.schema;
  auto model = init_model(model_config, train_config.seed);
  if (mode == ToolMode::relational) {
    std::vector<TokenSequence> corpus;
    for (const auto& sentence : identity_sentences(train_table)) corpus.push_back(encode(sentence, vocab, true));
    return train(std::move(model), corpus, train_config);
  }
  const auto seed = train_config.seed;
  CorpusProvider provider = [&train_table, &schema, &vocab, seed](std::size_t epoch) {
    std::vector<TrainingExample> examples;
    examples.reserve(train_table.size());
    for (std::size_t r = 0; r < train_table.size(); ++r) {
      const auto order = permute_order(schema, splitmix(seed ^ splitmix(epoch * 0x100000001b3ULL + r)));
      examples.push_back({encode(row_to_text(train_table.rows[r], schema, order), vocab, true), {}});
    }
    return examples;
  };
  return train(std::move(model), provider, train_config);
}

// ---------------------------------------------------------------------------
// Reports

const RuntimeStat* EvalReport::runtime_for(Phase phase) const {
  for (const auto& stat : runtime) {
    if (stat.phase == phase) return &stat;
  }
  return nullptr;
}

json to_json(const EvalReport& report) {
  json runtime = json::array();
  for (const auto& stat : report.runtime) runtime.push_back(to_json(stat));
  return {{"schema_version", kReportSchemaVersion},
          {"point_id", report.point_id},
          {"dataset", report.dataset},
          {"tool_mode", to_string(report.tool_mode)},
          {"point", point_json(report.point)},
          {"status", report.status},
          {"failure_reason", report.failure_reason},
          {"exact_params", report.exact_params},
          {"size_estimate",
           {{"c", report.size_estimate.c},
            {"layers", report.size_estimate.layers},
            {"hidden", report.size_estimate.hidden},
            {"estimated_params", report.size_estimate.estimated_params}}},
          {"runtime", std::move(runtime)},
          {"epoch_loss", report.epoch_loss},
          {"tokens_seen", report.tokens_seen},
          {"generation", report.generation ? to_json(*report.generation) : json(nullptr)},
          {"utility", report.utility ? to_json(*report.utility) : json(nullptr)},
          {"similarity", report.similarity ? to_json(*report.similarity) : json(nullptr)},
          {"versions", report.versions},
          {"config", report.config}};
}

EvalReport eval_report_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
      throw DataError("unsupported report schema_version " + j.at("schema_version").dump());
    }
    EvalReport report;
    report.point_id = j.at("point_id").get<std::string>();
    report.dataset = j.at("dataset").get<std::string>();
    report.tool_mode = tool_mode_from_string(j.at("tool_mode").get<std::string>());
    report.point = point_from_json(j.at("point"), "point");
    report.status = j.at("status").get<std::string>();
    report.failure_reason = j.at("failure_reason").get<std::string>();
    report.exact_params = j.at("exact_params").get<std::uint64_t>();
    const auto& size = j.at("size_estimate");
    report.size_estimate = {size.at("c").get<double>(), size.at("layers").get<std::uint32_t>(),
                            size.at("hidden").get<std::uint32_t>(), size.at("estimated_params").get<std::uint64_t>()};
    for (const auto& stat : j.at("runtime")) report.runtime.push_back(runtime_stat_from_json(stat));
    report.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
    report.tokens_seen = j.at("tokens_seen").get<std::uint64_t>();
    if (!j.at("generation").is_null()) report.generation = generation_stats_from_json(j.at("generation"));
    if (!j.at("utility").is_null()) report.utility = utility_result_from_json(j.at("utility"));
    if (!j.at("similarity").is_null()) report.similarity = similarity_result_from_json(j.at("similarity"));
    report.versions = j.at("versions").get<std::map<std::string, std::string>>();
    report.config = j.at("config");
    return report;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report JSON: ") + e.what());
  }
}

json without_timing(const EvalReport& report) {
  auto j = to_json(report);
  j.erase("runtime");
  return j;
}

json point_echo(const ExperimentConfig& config, const GridPoint& point) {
  auto j = to_json(config);
  j.erase("grid");
  j.erase("output_dir");
  j.erase("size_constant");
  j["point"] = point_json(point);
  j["similarity"]["protocol"] = "codec-resolution z-scores; balanced by downsampling; stratified split; random forest; ties count 0.5";
  j["generated_rows"] = "equal to training rows";
  return j;
}

std::string point_hash(const json& echo) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : echo.dump()) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(hash));
  return buffer;
}

namespace {

std::map<std::string, std::string> versions() {
  return {{"tabsyn", kVersion},
          {"report_schema", std::to_string(kReportSchemaVersion)},
          {"checkpoint_format", "TSYN1"}};
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw DataError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::optional<EvalReport> cached_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    auto report = eval_report_from_json(json::parse(in));
    if (report.ok()) return report;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

EvalReport run_point(const ExperimentConfig& config, const PreparedData& data, const GridPoint& point,
                     const json& echo) {
  EvalReport report;
  report.config = echo;
  report.point_id = point_hash(echo);
  report.dataset = config.dataset.name();
  report.tool_mode = config.tool_mode;
  report.point = point;
  report.versions = versions();

  const auto model_config = architecture(point, data, config.ffn_mult);
  try {
    report.exact_params = count_params(init_model(model_config, config.seed));
    const auto train_table = point.train_rows ? take_rows(data.split.train, std::min(*point.train_rows, data.split.train.size()))
                                              : data.split.train;
    RuntimeStat train_time{Phase::train, {}, 0.0}, generate_time{Phase::generate, {}, 0.0}, total_time{Phase::total, {}, 0.0};
    std::optional<TrainResult> fitted;
    std::optional<GeneratedTable> generated;
    for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
      std::lock_guard lock(timing_mutex());
      const double t_train = time_seconds([&] {
        fitted.emplace(fit_table(train_table, data.vocab, model_config, config.train, config.tool_mode));
      });
      double t_generate = 0.0;
      try {
        t_generate = time_seconds([&] {
          generated.emplace(generate_table(fitted->model, data.vocab, train_table.schema, train_table.size(), config.sample));
        });
      } catch (const GenerationError& e) {
        report.generation = e.stats();
        throw;
      }
      train_time.add(t_train);
      generate_time.add(t_generate);
      total_time.add(t_train + t_generate);
    }
    report.runtime = {train_time, generate_time, total_time};
    report.epoch_loss = fitted->trace.epoch_loss;
    report.tokens_seen = fitted->trace.tokens_seen;
    report.generation = generated->stats;
    if (config.evaluate) {
      report.utility = evaluate_utility(train_table, generated->table, data.split.test, config.utility);
      report.similarity = discriminator_similarity(train_table, generated->table, config.seed, config.similarity);
    }
  } catch (const std::exception& e) {
    report.status = "failed";
    report.failure_reason = e.what();
    report.runtime.clear();
  }
  return report;
}

}  // namespace

SweepOutcome run_sweep(const ExperimentConfig& config, const SweepOptions& options) {
  config.validate();
  std::mutex log_mutex;
  auto log = [&](const std::string& message) {
    if (!options.log) return;
    std::lock_guard lock(log_mutex);
    options.log(message);
  };

  const auto data = prepare_data(config);
  const auto points_dir = config.output_dir / "points";
  std::filesystem::create_directories(points_dir);

  // Family constant: calibrated on the largest grid point unless given.
  double c = 0.0;
  if (config.size_constant) {
    c = *config.size_constant;
  } else {
    const auto largest = std::max_element(config.grid.begin(), config.grid.end(), [](const auto& a, const auto& b) {
      return static_cast<double>(a.layers) * a.hidden * a.hidden < static_cast<double>(b.layers) * b.hidden * b.hidden;
    });
    const auto params = param_count_formula(architecture(*largest, data, config.ffn_mult));
    c = static_cast<double>(calibrate_c(static_cast<double>(params), largest->layers, largest->hidden).rounded);
    if (c <= 0.0) c = 1.0;
  }

  const auto n = config.grid.size();
  std::vector<std::optional<EvalReport>> results(n);
  std::vector<json> echoes(n);
  std::vector<std::size_t> pending;
  SweepOutcome outcome;
  for (std::size_t i = 0; i < n; ++i) {
    echoes[i] = point_echo(config, config.grid[i]);
    const auto id = point_hash(echoes[i]);
    if (auto cached = cached_report(points_dir / (id + ".json"))) {
      results[i] = std::move(*cached);
      ++outcome.skipped;
      log("point " + std::to_string(i) + " (" + id + ") cached, skipped");
    } else if (pending.size() < options.max_new_points) {
      pending.push_back(i);
    }
  }

  auto work = [&](std::size_t i) {
    const auto& p = config.grid[i];
    log("point " + std::to_string(i) + ": L=" + std::to_string(p.layers) + " H=" + std::to_string(p.hidden) +
        " A=" + std::to_string(p.heads));
    auto report = run_point(config, data, p, echoes[i]);
    if (!report.ok()) log("point " + std::to_string(i) + " failed: " + report.failure_reason);
    write_file(points_dir / (report.point_id + ".json"), to_json(report).dump(2) + "\n");
    results[i] = std::move(report);
  };

  if (options.parallel && pending.size() > 1) {
    std::atomic<std::size_t> next{0};
    const auto workers = std::min<std::size_t>(pending.size(), std::max(2u, std::thread::hardware_concurrency()));
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          for (std::size_t k; (k = next++) < pending.size();) work(pending[k]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& thread : threads) thread.join();
    for (const auto& error : errors) {
      if (error) std::rethrow_exception(error);
    }
  } else {
    for (auto i : pending) work(i);
  }
  outcome.executed = pending.size();

  for (auto& result : results) {
    if (!result) continue;
    result->size_estimate = estimate_size(c, result->point.layers, result->point.hidden);
    outcome.reports.push_back(std::move(*result));
  }
  json all = json::array();
  for (const auto& report : outcome.reports) all.push_back(to_json(report));
  write_file(config.output_dir / "reports.json", all.dump(2) + "\n");
  return outcome;
}

std::vector<EvalReport> load_reports(const std::filesystem::path& directory) {
  const auto path = directory / "reports.json";
  std::ifstream in(path);
  if (!in) throw DataError("no reports.json in '" + directory.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("malformed '" + path.string() + "': " + e.what());
  }
  if (!j.is_array()) throw DataError("'" + path.string() + "' must hold an array of reports");
  std::vector<EvalReport> reports;
  for (const auto& item : j) reports.push_back(eval_report_from_json(item));
  return reports;
}

ReportFormat report_format_from_string(std::string_view text) {
  if (text == "json") return ReportFormat::json;
  if (text == "csv") return ReportFormat::csv;
  throw ConfigError("unknown report format '" + std::string(text) + "' (expected json or csv)");
}

namespace {

std::string number(double value) {
  char buffer[32];
  const auto end = std::to_chars(buffer, buffer + sizeof buffer, value).ptr;
  return std::string(buffer, end);
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n\r") == std::string::npos) return text;
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

const std::vector<std::pair<std::string, std::string>>& utility_columns() {
  static const std::vector<std::pair<std::string, std::string>> columns{
      {"logistic", "accuracy"}, {"logistic", "macro_f1"}, {"forest", "accuracy"},
      {"forest", "macro_f1"},   {"linear", "r2"},         {"forest", "r2"}};
  return columns;
}

}  // namespace

std::string render_csv(const std::vector<EvalReport>& reports) {
  std::vector<std::string> header{"point_id",     "dataset",        "tool_mode",     "layers",        "hidden",
                                  "heads",        "status",         "exact_params",  "size_c",        "size_estimate",
                                  "train_mean_s", "generate_mean_s", "total_mean_s", "final_loss",    "rows_emitted",
                                  "rejection_rate"};
  for (const auto& [learner, metric] : utility_columns()) {
    for (const char* arm : {"real", "synthetic", "delta"}) header.push_back(learner + "_" + metric + "_" + arm);
  }
  header.push_back("similarity_accuracy");
  header.push_back("failure_reason");

  std::ostringstream out;
  out << "# columns:";
  for (const auto& name : header) out << ' ' << name;
  out << '\n';
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& r : reports) {
    std::vector<std::string> row{r.point_id,
                                 r.dataset,
                                 std::string(to_string(r.tool_mode)),
                                 std::to_string(r.point.layers),
                                 std::to_string(r.point.hidden),
                                 std::to_string(r.point.heads),
                                 r.status,
                                 std::to_string(r.exact_params),
                                 number(r.size_estimate.c),
                                 std::to_string(r.size_estimate.estimated_params)};
    for (auto phase : {Phase::train, Phase::generate, Phase::total}) {
      const auto* stat = r.runtime_for(phase);
      row.push_back(stat ? number(stat->mean_seconds) : "");
    }
    row.push_back(r.epoch_loss.empty() ? "" : number(r.epoch_loss.back()));
    row.push_back(r.generation ? std::to_string(r.generation->rows_emitted) : "");
    row.push_back(r.generation ? number(r.generation->rejection_rate()) : "");
    for (const auto& [learner, metric] : utility_columns()) {
      const MetricComparison* m = nullptr;
      if (r.utility) {
        for (const auto& candidate : r.utility->metrics) {
          if (candidate.learner == learner && candidate.metric == metric) m = &candidate;
        }
      }
      row.push_back(m ? number(m->real) : "");
      row.push_back(m ? number(m->synthetic) : "");
      row.push_back(m ? number(m->delta) : "");
    }
    row.push_back(r.similarity ? number(r.similarity->discriminator_accuracy) : "");
    row.push_back(r.failure_reason);
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_field(row[i]);
    out << '\n';
  }
  return out.str();
}

std::filesystem::path emit_report(const std::vector<EvalReport>& reports, ReportFormat format,
                                  const std::filesystem::path& directory) {
  if (reports.empty()) throw DataError("no reports to emit");
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw DataError("cannot create output directory '" + directory.string() + "': " + ec.message());
  std::filesystem::path path;
  std::string content;
  if (format == ReportFormat::json) {
    json all = json::array();
    for (const auto& report : reports) all.push_back(to_json(report));
    path = directory / "report.json";
    content = all.dump(2) + "\n";
  } else {
    path = directory / "report.csv";
    content = render_csv(reports);
  }
  write_file(path, content);
  return path;
}

}  // namespace tabsyn
