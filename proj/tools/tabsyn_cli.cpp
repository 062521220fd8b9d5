#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "tabsyn/dataset.hpp"
#include "tabsyn/eval.hpp"
#include "tabsyn/experiment.hpp"
#include "tabsyn/fixtures.hpp"
#include "tabsyn/relational.hpp"
#include "tabsyn/sampler.hpp"

using namespace tabsyn;
using nlohmann::json;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool quiet = false;
};

void info(const Globals& g, const std::string& message) {
  if (!g.quiet) std::cerr << message << '\n';
}

std::filesystem::path out_dir(const Globals& g, const std::filesystem::path& fallback) {
  return g.out_dir.empty() ? fallback : std::filesystem::path(g.out_dir);
}

ExperimentConfig configured(const Globals& g, const std::string& path) {
  auto config = load_config(path);
  if (g.seed) config.apply_seed(*g.seed);
  if (!g.out_dir.empty()) config.output_dir = g.out_dir;
  return config;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

int cmd_fit(const Globals& g, const std::string& config_path, std::size_t point_index) {
  const auto config = configured(g, config_path);
  if (point_index >= config.grid.size()) throw ConfigError("--point: grid has " + std::to_string(config.grid.size()) + " points");
  const auto data = prepare_data(config);
  const auto model_config = architecture(config.grid[point_index], data, config.ffn_mult);
  info(g, "training L=" + std::to_string(model_config.layers) + " H=" + std::to_string(model_config.hidden) + " on " +
              std::to_string(data.split.train.size()) + " rows");
  const auto result = fit_table(data.split.train, data.vocab, model_config, config.train, config.tool_mode);
  const auto dir = config.output_dir;
  std::filesystem::create_directories(dir);
  save_checkpoint(result.model, dir / "model.bin");
  data.vocab.save(dir / "vocab.json");
  save_schema(data.split.train.schema, dir / "schema.json");
  write_json(dir / "fit.json", {{"trace", to_json(result.trace)},
                                {"params", count_params(result.model)},
                                {"config", point_echo(config, config.grid[point_index])}});
  info(g, "final loss " + std::to_string(result.trace.epoch_loss.empty() ? 0.0 : result.trace.epoch_loss.back()) +
              "; checkpoint written to " + (dir / "model.bin").string());
  return 0;
}

int cmd_sample(const Globals& g, const std::string& checkpoint, std::size_t rows, double temperature,
               const std::vector<std::string>& givens_text) {
  const std::filesystem::path path(checkpoint);
  const auto model = load_checkpoint(path);
  const auto vocab = Vocab::load(path.parent_path() / "vocab.json");
  const auto schema = load_schema(path.parent_path() / "schema.json");
  std::vector<std::pair<std::string, std::string>> givens;
  for (const auto& item : givens_text) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("--given expects column=value, got '" + item + "'");
    givens.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  SampleConfig config;
  config.temperature = temperature;
  config.seed = g.seed.value_or(0);
  const auto generated = generate_conditional(model, vocab, schema, givens, rows, config);
  const auto dir = out_dir(g, ".");
  std::filesystem::create_directories(dir);
  write_csv(generated.table, dir / "synthetic.csv");
  write_json(dir / "generation.json", to_json(generated.stats));
  info(g, std::to_string(generated.stats.rows_emitted) + " rows written to " + (dir / "synthetic.csv").string() +
              " (rejection rate " + std::to_string(generated.stats.rejection_rate()) + ")");
  return 0;
}

int cmd_evaluate(const Globals& g, const std::string& real_path, const std::string& synth_path,
                 const std::string& target, const std::string& task, double test_fraction) {
  const auto seed = g.seed.value_or(0);
  const auto real = load_csv(real_path, target, task_from_string(task));
  const auto split = preprocess(real, test_fraction, seed);
  auto synth = load_csv_with_schema(synth_path, split.train.schema);
  if (synth.size() < split.train.size()) {
    throw DataError("synthetic table has " + std::to_string(synth.size()) + " rows; the real training split needs " +
                    std::to_string(split.train.size()));
  }
  synth = take_rows(synth, split.train.size());
  UtilityConfig utility;
  utility.forest.seed = seed;
  const auto u = evaluate_utility(split.train, synth, split.test, utility);
  const auto s = discriminator_similarity(split.train, synth, seed);
  const auto dir = out_dir(g, ".");
  std::filesystem::create_directories(dir);
  write_json(dir / "evaluation.json", {{"utility", to_json(u)}, {"similarity", to_json(s)}, {"seed", seed}});
  if (!g.quiet) {
    for (const auto& m : u.metrics) {
      std::cout << m.learner << ' ' << m.metric << ": real " << m.real << ", synthetic " << m.synthetic << ", delta "
                << m.delta << '\n';
    }
    std::cout << "discriminator accuracy: " << s.discriminator_accuracy << '\n';
  }
  return 0;
}

int cmd_sweep(const Globals& g, const std::string& config_path, bool parallel) {
  const auto config = configured(g, config_path);
  SweepOptions options;
  options.parallel = parallel;
  if (!g.quiet) options.log = [](const std::string& message) { std::cerr << message << '\n'; };
  const auto outcome = run_sweep(config, options);
  std::size_t failed = 0;
  for (const auto& report : outcome.reports) failed += !report.ok();
  info(g, std::to_string(outcome.executed) + " points run, " + std::to_string(outcome.skipped) + " cached, " +
              std::to_string(failed) + " failed; reports in " + (config.output_dir / "reports.json").string());
  return 0;
}

int cmd_report(const Globals& g, const std::string& dir, const std::string& format) {
  const auto path = emit_report(load_reports(dir), report_format_from_string(format), out_dir(g, dir));
  info(g, "wrote " + path.string());
  return 0;
}

int cmd_plot(const Globals& g, const std::string& dir, const std::string& dimension) {
  const auto path = emit_plot(load_reports(dir), plot_dimension_from_string(dimension), out_dir(g, dir));
  info(g, "wrote " + path.string());
  return 0;
}

int cmd_fixture(const Globals& g, const std::string& name, std::size_t rows) {
  const auto seed = g.seed.value_or(0);
  const auto dir = out_dir(g, ".");
  std::filesystem::create_directories(dir);
  if (name == "relational") {
    const auto fixture = relational_fixture(rows, seed);
    save_relational(fixture.tables, fixture.schema, dir);
    info(g, "wrote parent.csv and child.csv to " + dir.string());
    return 0;
  }
  const auto path = dir / (name + ".csv");
  write_csv(named_fixture(name, rows, seed), path);
  info(g, "wrote " + path.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular data synthesis with small decoder-only transformers"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_option = app.add_option("--seed", seed, "Override the random seed");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_flag("--quiet", g.quiet, "Suppress progress messages");

  std::string config_path, checkpoint, real_path, synth_path, dir, target, task = "classification", format = "json",
                                                                     dimension = "runtime", fixture_name;
  std::size_t rows = 0, point = 0, fixture_rows = 500;
  double temperature = 0.7, test_fraction = 0.2;
  std::vector<std::string> givens;
  bool parallel = false;

  auto* fit = app.add_subcommand("fit", "Train a model on one grid point of a config");
  fit->add_option("config", config_path)->required()->check(CLI::ExistingFile);
  fit->add_option("--point", point, "Grid point index");

  auto* sample = app.add_subcommand("sample", "Generate rows from a checkpoint");
  sample->add_option("checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  sample->add_option("-n,--rows", rows, "Rows to generate")->required()->check(CLI::PositiveNumber);
  sample->add_option("--temperature", temperature);
  sample->add_option("--given", givens, "column=value condition (repeatable)");

  auto* evaluate = app.add_subcommand("evaluate", "Utility and similarity of a synthetic CSV");
  evaluate->add_option("real", real_path)->required()->check(CLI::ExistingFile);
  evaluate->add_option("synthetic", synth_path)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--target", target)->required();
  evaluate->add_option("--task", task)->check(CLI::IsMember({"classification", "regression"}));
  evaluate->add_option("--test-fraction", test_fraction);

  auto* sweep = app.add_subcommand("sweep", "Run every grid point of a config");
  sweep->add_option("config", config_path)->required()->check(CLI::ExistingFile);
  sweep->add_flag("--parallel", parallel, "Run untimed phases of grid points concurrently");

  auto* report = app.add_subcommand("report", "Export sweep reports");
  report->add_option("dir", dir)->required()->check(CLI::ExistingDirectory);
  report->add_option("--format", format)->check(CLI::IsMember({"json", "csv"}));

  auto* plot = app.add_subcommand("plot", "Render an SVG chart of sweep reports");
  plot->add_option("dir", dir)->required()->check(CLI::ExistingDirectory);
  plot->add_option("--dimension", dimension)->check(CLI::IsMember({"runtime", "utility", "similarity"}));

  auto* fixture = app.add_subcommand("fixture", "Write a built-in fixture table");
  fixture->add_option("name", fixture_name)->required()->check(CLI::IsMember({"dependency", "linear", "relational"}));
  fixture->add_option("--rows", fixture_rows)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (seed_option->count() > 0) g.seed = seed;

  try {
    if (*fit) return cmd_fit(g, config_path, point);
    if (*sample) return cmd_sample(g, checkpoint, rows, temperature, givens);
    if (*evaluate) return cmd_evaluate(g, real_path, synth_path, target, task, test_fraction);
    if (*sweep) return cmd_sweep(g, config_path, parallel);
    if (*report) return cmd_report(g, dir, format);
    if (*plot) return cmd_plot(g, dir, dimension);
    if (*fixture) return cmd_fixture(g, fixture_name, fixture_rows);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
