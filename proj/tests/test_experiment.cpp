#include <cstdlib>
#include <regex>

#include "doctest.h"
#include "tabsyn/error.hpp"
#include "tabsyn/experiment.hpp"
#include "tabsyn/fixtures.hpp"
#include "test_util.hpp"

using namespace tabsyn;
using nlohmann::json;

namespace {

json small_config_json(const std::filesystem::path& out) {
  return json{{"dataset", {{"fixture", "dependency"}, {"rows", 100}, {"fixture_seed", 1}}},
              {"grid",
               json::array({{{"layers", 1}, {"hidden", 16}, {"heads", 2}},
                            {{"layers", 1}, {"hidden", 32}, {"heads", 4}},
                            {{"layers", 2}, {"hidden", 16}, {"heads", 2}}})},
              {"train", {{"epochs", 60}, {"learning_rate", 3e-3}, {"batch_size", 8}}},
              {"repetitions", 2},
              {"seed", 3},
              {"utility", {{"seeds", 1}, {"forest", {{"n_trees", 10}}}}},
              {"similarity", {{"forest", {{"n_trees", 10}}}}},
              {"output_dir", out.string()}};
}

ExperimentConfig small_config(const std::filesystem::path& out) { return config_from_json(small_config_json(out)); }

std::string config_error(const json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

std::vector<json> untimed(const std::vector<EvalReport>& reports) {
  std::vector<json> out;
  for (const auto& r : reports) out.push_back(without_timing(r));
  return out;
}

// First sweep of the small config, shared by several tests.
const SweepOutcome& baseline_sweep() {
  static const SweepOutcome outcome = run_sweep(small_config(test_util::temp_dir("baseline")));
  return outcome;
}

int run_cli(const std::string& args) {
  const std::string command = std::string("\"") + TABSYN_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("defaults") {
    const auto config = config_from_json(json{{"dataset", {{"fixture", "dependency"}}}, {"grid", json::array({json::object()})}});
    CHECK(config.repetitions == 5);
    CHECK(config.sample.temperature == doctest::Approx(0.7));
    CHECK(config.test_fraction == doctest::Approx(0.2));
    CHECK(config.dataset.target == "label");
    CHECK(config.grid.size() == 1);
    CHECK(config.grid[0] == GridPoint{});
  }
  SUBCASE("round trip") {
    const auto config = small_config("out");
    CHECK(to_json(config_from_json(to_json(config))) == to_json(config));
  }
  SUBCASE("hidden not divisible by heads names the field") {
    auto j = small_config_json("out");
    j["grid"][1] = {{"layers", 1}, {"hidden", 30}, {"heads", 4}};
    const auto message = config_error(j);
    CHECK(message.find("grid[1].hidden") != std::string::npos);
    CHECK(message.find("30") != std::string::npos);
  }
  SUBCASE("misspelled key suggests the closest") {
    auto j = small_config_json("out");
    j["grid"][0] = {{"layrs", 1}, {"hidden", 16}, {"heads", 2}};
    const auto message = config_error(j);
    CHECK(message.find("layrs") != std::string::npos);
    CHECK(message.find("did you mean 'layers'") != std::string::npos);
    j = small_config_json("out");
    j["repetitons"] = 3;
    CHECK(config_error(j).find("did you mean 'repetitions'") != std::string::npos);
  }
  SUBCASE("other errors") {
    auto j = small_config_json("out");
    j["repetitions"] = "five";
    CHECK(config_error(j).find("repetitions") != std::string::npos);
    j = small_config_json("out");
    j.erase("grid");
    CHECK(config_error(j).find("grid") != std::string::npos);
    j = small_config_json("out");
    j["dataset"] = {{"fixture", "dependency"}, {"path", "x.csv"}};
    CHECK_FALSE(config_error(j).empty());
    j = small_config_json("out");
    j["test_fraction"] = 1.5;
    CHECK(config_error(j).find("test_fraction") != std::string::npos);
  }
  SUBCASE("relative paths resolve against the config directory") {
    const auto dir = test_util::temp_dir("cfgpath");
    test_util::write_file(dir / "c.json", json{{"dataset", {{"path", "data.csv"}, {"target", "y"}}},
                                               {"grid", json::array({json::object()})}}
                                              .dump());
    CHECK(load_config(dir / "c.json").dataset.path == dir / "data.csv");
  }
  SUBCASE("edit distance") {
    CHECK(edit_distance("layrs", "layers") == 1);
    CHECK(edit_distance("kitten", "sitting") == 3);
    CHECK(edit_distance("", "abc") == 3);
  }
  SUBCASE("apply_seed propagates") {
    auto config = small_config("out");
    config.apply_seed(11);
    CHECK(config.train.seed == 11);
    CHECK(config.sample.seed == 11);
    CHECK(config.utility.forest.seed == 11);
    CHECK(config.similarity.forest.seed == 11);
  }
}

TEST_CASE("run_sweep") {
  const auto& base = baseline_sweep();
  SUBCASE("one complete report per grid point") {
    REQUIRE(base.reports.size() == 3);
    CHECK(base.executed == 3);
    CHECK(base.skipped == 0);
    for (const auto& r : base.reports) {
      INFO(r.failure_reason);
      REQUIRE(r.ok());
      REQUIRE(r.runtime.size() == 3);
      CHECK(r.runtime_for(Phase::total)->repetitions.size() == 2);
      for (std::size_t k = 0; k < 2; ++k) {
        CHECK(r.runtime_for(Phase::total)->repetitions[k] ==
              doctest::Approx(r.runtime_for(Phase::train)->repetitions[k] + r.runtime_for(Phase::generate)->repetitions[k]));
      }
      CHECK(r.exact_params > 0);
      CHECK(r.size_estimate.estimated_params > 0);
      REQUIRE(r.generation);
      CHECK(r.generation->rows_emitted == r.generation->rows_requested);
      CHECK(r.utility);
      CHECK(r.similarity);
      CHECK(r.epoch_loss.size() == 60);
      CHECK(r.dataset == base.reports[0].dataset);
    }
    CHECK(base.reports[0].point == GridPoint{1, 16, 2, std::nullopt});
    CHECK(base.reports[0].point_id != base.reports[1].point_id);
  }
  SUBCASE("rerun skips every completed point") {
    const auto dir = test_util::temp_dir("rerun");
    const auto first = run_sweep(small_config(dir));
    const auto second = run_sweep(small_config(dir));
    CHECK(second.executed == 0);
    CHECK(second.skipped == 3);
    CHECK(second.reports == first.reports);
    CHECK(load_reports(dir) == first.reports);
  }
  SUBCASE("same seed reproduces everything but timing") {
    const auto again = run_sweep(small_config(test_util::temp_dir("again")));
    CHECK(untimed(again.reports) == untimed(base.reports));
  }
  SUBCASE("interrupted then resumed equals uninterrupted") {
    const auto dir = test_util::temp_dir("resume");
    SweepOptions options;
    options.max_new_points = 1;
    const auto partial = run_sweep(small_config(dir), options);
    CHECK(partial.executed == 1);
    CHECK(partial.reports.size() == 1);
    const auto resumed = run_sweep(small_config(dir));
    CHECK(resumed.executed == 2);
    CHECK(resumed.skipped == 1);
    CHECK(untimed(resumed.reports) == untimed(base.reports));
  }
  SUBCASE("a failing point is recorded and the sweep completes") {
    auto config = small_config(test_util::temp_dir("failing"));
    config.grid[1].train_rows = 0;
    const auto outcome = run_sweep(config);
    REQUIRE(outcome.reports.size() == 3);
    CHECK(outcome.reports[0].ok());
    CHECK_FALSE(outcome.reports[1].ok());
    CHECK_FALSE(outcome.reports[1].failure_reason.empty());
    CHECK(outcome.reports[2].ok());
    // Failed points are retried on the next run.
    const auto rerun = run_sweep(config);
    CHECK(rerun.executed == 1);
    CHECK(rerun.skipped == 2);
  }
  SUBCASE("parallel sweep matches sequential") {
    SweepOptions options;
    options.parallel = true;
    const auto parallel = run_sweep(small_config(test_util::temp_dir("parallel")), options);
    CHECK(untimed(parallel.reports) == untimed(base.reports));
  }
  SUBCASE("report serialization") {
    for (const auto& r : base.reports) CHECK(eval_report_from_json(to_json(r)) == r);
    CHECK_FALSE(without_timing(base.reports[0]).dump().find("mean_seconds") != std::string::npos);
  }
}

TEST_CASE("emit_report") {
  const auto& reports = baseline_sweep().reports;
  const auto dir = test_util::temp_dir("emit");
  SUBCASE("csv") {
    const auto path = emit_report(reports, ReportFormat::csv, dir);
    const auto text = test_util::read_file(path);
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0].rfind("# columns:", 0) == 0);
    CHECK(lines[1].rfind("point_id,dataset,", 0) == 0);
    const auto columns = count(lines[1], ",");
    for (std::size_t i = 2; i < 5; ++i) {
      CHECK(lines[i].rfind(reports[i - 2].point_id, 0) == 0);
      CHECK(count(lines[i], ",") == columns);
    }
  }
  SUBCASE("json round trip") {
    const auto path = emit_report(reports, ReportFormat::json, dir);
    std::vector<EvalReport> back;
    for (const auto& j : json::parse(test_util::read_file(path))) back.push_back(eval_report_from_json(j));
    CHECK(back == reports);
  }
  SUBCASE("empty input") { CHECK_THROWS_AS(emit_report({}, ReportFormat::csv, dir), DataError); }
}

TEST_CASE("render_svg") {
  const auto& reports = baseline_sweep().reports;
  SUBCASE("runtime chart: bars plus size line") {
    const auto svg = render_svg(reports, PlotDimension::runtime);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(count(svg, "<rect class=\"bar\"") == 3);
    CHECK(count(svg, "<polyline class=\"size-line\"") == 1);
    CHECK(count(svg, "<circle class=\"size-marker\"") == 3);
    CHECK(count(svg, "class=\"tick log\"") >= 2);
    CHECK(count(svg, "class=\"reference\"") == 0);
  }
  SUBCASE("utility chart has real and synthetic bars") {
    CHECK(count(render_svg(reports, PlotDimension::utility), "<rect class=\"bar\"") == 6);
  }
  SUBCASE("similarity chart has exactly one chance line") {
    const auto svg = render_svg(reports, PlotDimension::similarity);
    CHECK(count(svg, "class=\"reference\"") == 1);
    CHECK(svg.find("stroke-dasharray=\"6 4\" data-y=\"0.5\"") != std::string::npos);
  }
  SUBCASE("single report") {
    const std::vector<EvalReport> one{reports[0]};
    const auto svg = render_svg(one, PlotDimension::runtime);
    CHECK(count(svg, "<rect class=\"bar\"") == 1);
    CHECK(count(svg, "<circle class=\"size-marker\"") == 1);
  }
  SUBCASE("size line rises with model size") {
    const auto svg = render_svg(reports, PlotDimension::runtime);
    std::smatch m;
    REQUIRE(std::regex_search(svg, m, std::regex("class=\"size-line\"[^>]*points=\"([^\"]*)\"")));
    std::vector<double> ys;
    std::istringstream in(m[1].str());
    for (std::string pair; in >> pair;) ys.push_back(std::stod(pair.substr(pair.find(',') + 1)));
    REQUIRE(ys.size() == 3);
    // Estimated size grows with L*H^2 (16^2 < 32^2 and 2*16^2); SVG y grows downward.
    for (std::size_t g = 1; g < 3; ++g) {
      const bool larger = reports[g].size_estimate.estimated_params > reports[0].size_estimate.estimated_params;
      CHECK((ys[g] < ys[0]) == larger);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(render_svg({}, PlotDimension::runtime), DataError);
    auto mixed = reports;
    mixed[1].dataset = "other";
    CHECK_THROWS_AS(render_svg(mixed, PlotDimension::runtime), ConfigError);
  }
  SUBCASE("emit_plot writes a file") {
    const auto path = emit_plot(reports, PlotDimension::similarity, test_util::temp_dir("plot"));
    CHECK(std::filesystem::exists(path));
    CHECK(path.extension() == ".svg");
  }
}

TEST_CASE("command line") {
  const auto dir = test_util::temp_dir("cli");
  const auto q = [](const std::filesystem::path& p) { return "\"" + p.string() + "\""; };
  SUBCASE("usage errors exit 1") {
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") == 1);
    CHECK(run_cli("frobnicate") == 1);
    CHECK(run_cli("sample") == 1);
  }
  SUBCASE("config errors exit 1") {
    auto j = small_config_json(dir / "out");
    j["layrs"] = 2;
    test_util::write_file(dir / "bad.json", j.dump());
    CHECK(run_cli("sweep " + q(dir / "bad.json")) == 1);
  }
  SUBCASE("runtime failures exit 2") {
    test_util::write_file(dir / "missing.json", json{{"dataset", {{"path", "nope.csv"}, {"target", "y"}}},
                                                     {"grid", json::array({json::object()})}}
                                                    .dump());
    CHECK(run_cli("sweep " + q(dir / "missing.json")) == 2);
    test_util::write_file(dir / "real.csv", "a,y\n1,x\n");
    test_util::write_file(dir / "synth.csv", "a,y\n1,x\n");
    CHECK(run_cli("evaluate " + q(dir / "real.csv") + " " + q(dir / "synth.csv") + " --target nope") == 2);
  }
  SUBCASE("fixture, sweep, report and plot") {
    CHECK(run_cli("--quiet --out-dir " + q(dir) + " fixture dependency --rows 60") == 0);
    CHECK(std::filesystem::exists(dir / "dependency.csv"));
    auto j = small_config_json(dir / "sweep");
    j["grid"] = json::array({{{"layers", 1}, {"hidden", 16}, {"heads", 2}}});
    j["repetitions"] = 1;
    test_util::write_file(dir / "ok.json", j.dump());
    CHECK(run_cli("--quiet sweep " + q(dir / "ok.json")) == 0);
    CHECK(std::filesystem::exists(dir / "sweep" / "reports.json"));
    CHECK(run_cli("--quiet report " + q(dir / "sweep") + " --format csv") == 0);
    CHECK(std::filesystem::exists(dir / "sweep" / "report.csv"));
    CHECK(run_cli("--quiet plot " + q(dir / "sweep") + " --dimension runtime") == 0);
  }
}
