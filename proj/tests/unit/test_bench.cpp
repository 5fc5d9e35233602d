#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "depthflow/bench/config.hpp"
#include "depthflow/bench/data.hpp"
#include "depthflow/bench/experiment.hpp"
#include "depthflow/bench/export.hpp"
#include "depthflow/bench/gradcheck.hpp"
#include "depthflow/errors.hpp"

using namespace depthflow;
using namespace depthflow::bench;
using nlohmann::json;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("depthflow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Rows of numbers after the header line.
std::vector<std::vector<double>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

json tiny_config() {
  json j = preset("crossing-vanilla");
  j["data"]["n"] = 8;
  j["model"]["hidden"] = {4};
  j["train"]["epochs"] = 3;
  return j;
}

std::string config_error_path(const json& j) {
  try {
    resolve_runs(j);
    for (const RunSpec& r : resolve_runs(j)) parse_config(r.config);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<none>";
}

// Handcrafted 1-D data-controlled field f(z, x) = -theta (z + x) with no
// hidden layer, so z(s) = -x + 2 x exp(-theta s).
Checkpoint crossing_checkpoint(double theta) {
  json cfg = preset("crossing-datacontrol");
  cfg["model"]["hidden"] = json::array();
  const ExperimentConfig c = parse_config(cfg);
  NodeModel m = build_model(c.model, 1, 1, 0);
  ParamVector p(3);
  p << -theta, -theta, 0.0;
  m.theta = make_constant(p);
  return make_checkpoint(cfg, m);
}

}  // namespace

TEST_CASE("annuli labels follow the radius and classes are balanced") {
  for (Index dim : {1, 2}) {
    DataParams params;
    params.dim = dim;
    params.radius = 0.8;
    const Dataset d = make_dataset("annuli", 200, 3, params);
    REQUIRE(d.inputs.rows() == dim);
    Index inner = 0;
    for (Index k = 0; k < d.size(); ++k) {
      const Eigen::VectorXd x = d.inputs.col(k);
      CHECK(d.targets(0, k) == annuli_label(x, 0.8));
      CHECK((x.norm() < 0.5 * 0.8 || (x.norm() >= 1.5 * 0.8 && x.norm() <= 3.0 * 0.8)));
      if (d.targets(0, k) < 0) ++inner;
    }
    CHECK(inner == 100);
  }
  CHECK(annuli_label(Eigen::Vector2d(1.0, 0.0), 1.0) == 1.0);
}

TEST_CASE("datasets are seeded and validated") {
  const Dataset a = make_dataset("moons", 50, 4);
  const Dataset b = make_dataset("moons", 50, 4);
  const Dataset c = make_dataset("moons", 50, 5);
  CHECK(a.inputs == b.inputs);
  CHECK(a.inputs != c.inputs);
  const Dataset cross = make_dataset("crossing", 11, 0);
  CHECK(cross.targets == -cross.inputs);
  CHECK_THROWS_AS(make_dataset("annuli", 1, 0), DomainError);
  CHECK_THROWS_AS(make_dataset("nope", 10, 0), DomainError);
  for (const std::string& name : dataset_names()) CHECK(make_dataset(name, 16, 1).size() >= 1);
}

TEST_CASE("conditional flow data pairs each prior with the opposite mean") {
  const CnfPairing pair = cnf_pairing();
  CHECK(pair.prior_mean[0] == -1.0);
  CHECK(pair.data_mean[0] == 1.0);
  DataParams params;
  params.sigma = 0.3;
  const Dataset d = make_dataset("cnf-conditional", 4000, 2, params);
  double sum[2] = {0.0, 0.0};
  Index count[2] = {0, 0};
  for (Index k = 0; k < d.size(); ++k) {
    const auto q = static_cast<int>(d.targets(0, k));
    REQUIRE((q == 0 || q == 1));
    sum[q] += d.inputs(0, k);
    ++count[q];
  }
  CHECK(std::abs(sum[0] / count[0] - pair.data_mean[0]) < 0.03);
  CHECK(std::abs(sum[1] / count[1] - pair.data_mean[1]) < 0.03);
}

TEST_CASE("tracking signal") {
  CHECK(tracking_signal(0.25)[0] == doctest::Approx(1.0));
  CHECK(std::abs(tracking_signal(0.25)[1]) < 1e-12);
  const Dataset d = make_dataset("tracking", 101, 0);
  CHECK(d.grid.size() == 101);
  CHECK(d.inputs.col(0).isApprox(tracking_signal(0.0)));
}

TEST_CASE("config errors carry the offending field path") {
  json j = tiny_config();
  j["model"]["activaton"] = "tanh";
  CHECK(config_error_path(j) == "model.activaton");

  j = tiny_config();
  j["model"]["activation"] = "swish";
  CHECK(config_error_path(j) == "model.activation");

  j = tiny_config();
  j["schema_version"] = 2;
  CHECK(config_error_path(j) == "schema_version");

  j = tiny_config();
  j["train"]["epochs"] = "many";
  CHECK(config_error_path(j) == "train.epochs");

  j = tiny_config();
  j["variants"] = {{{"name", "bad"}, {"patch", {{"model", {{"activation", "swish"}}}}}}};
  CHECK(config_error_path(j) == "variants[0].patch.model.activation");

  CHECK_THROWS_AS(preset("no-such-preset"), ConfigError);
  CHECK(config_error_path(tiny_config()) == "<none>");
}

TEST_CASE("every preset resolves and builds") {
  for (const std::string& name : preset_names()) {
    CAPTURE(name);
    CHECK(!preset_description(name).empty());
    const std::vector<RunSpec> runs = resolve_runs(preset(name));
    CHECK(!runs.empty());
    for (const RunSpec& r : runs) CHECK_NOTHROW(parse_config(r.config));
  }
}

TEST_CASE("reports round-trip byte for byte and runs are reproducible") {
  const ExperimentReport a = run_experiment(tiny_config());
  const std::string text = dump_report(a);
  CHECK(dump_report(report_from_json(json::parse(text))) == text);
  CHECK(std::isnan(report_from_json(json::parse(text)).runs[0].accuracy) ==
        std::isnan(a.runs[0].accuracy));

  const ExperimentReport b = run_experiment(tiny_config());
  json ja = to_json(a);
  json jb = to_json(b);
  ja.erase("wall_time");
  jb.erase("wall_time");
  for (auto& r : ja["runs"]) r.erase("wall_time");
  for (auto& r : jb["runs"]) r.erase("wall_time");
  CHECK(ja.dump() == jb.dump());

  const auto dir = scratch("report");
  write_report(a, dir / "report.json");
  CHECK(dump_report(read_report(dir / "report.json")) == text);
}

TEST_CASE("checkpoints restore the exact parameters") {
  const auto dir = scratch("checkpoint");
  const ExperimentReport r = run_experiment(tiny_config(), {.out_dir = dir});
  const Checkpoint c = load_checkpoint(dir / r.runs[0].artifacts.at("checkpoint"));
  const NodeModel m = checkpoint_model(c);
  CHECK(get_params(m) == c.params);
  save_checkpoint(c, dir / "again.json");
  CHECK(load_checkpoint(dir / "again.json").params == c.params);
  CHECK(std::filesystem::exists(dir / r.runs[0].artifacts.at("history")));
}

TEST_CASE("export of a zero field gives constant trajectories") {
  json cfg = preset("annuli-ablation");
  cfg.erase("variants");
  const ExperimentConfig c = parse_config(cfg);
  NodeModel m = build_model(c.model, 2, 1, 0);
  set_params(m, Eigen::VectorXd::Zero(model_param_count(m)));
  GridSpec grid;
  grid.inputs = {Eigen::Vector2d(0.5, -1.0), Eigen::Vector2d(2.0, 0.1)};
  grid.points = 5;
  const auto dir = scratch("export_zero");
  const auto files = export_flow(make_checkpoint(cfg, m), grid, dir);
  CHECK(files.size() == 3);  // constant theta: no theta.csv
  for (const auto& row : read_csv(dir / "trajectories.csv")) {
    const Eigen::VectorXd& x = grid.inputs[static_cast<std::size_t>(row[0])];
    CHECK(row[2] == doctest::Approx(x[0]));
    CHECK(row[3] == doctest::Approx(x[1]));
  }
  for (const auto& row : read_csv(dir / "field.csv")) {
    CHECK(row[4] == 0.0);
    CHECK(row[5] == 0.0);
  }
}

TEST_CASE("handcrafted data-controlled trajectories cross zero at ln 2 / theta") {
  const double theta = 2.0;
  GridSpec grid;
  grid.inputs = {Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, -0.5)};
  grid.tol = {1e-10, 1e-10};
  const auto dir = scratch("export_cross");
  export_flow(crossing_checkpoint(theta), grid, dir);
  const auto rows = read_csv(dir / "trajectories.csv");
  REQUIRE(rows.size() > 4);
  for (const auto& row : rows) {
    const double x = grid.inputs[static_cast<std::size_t>(row[0])][0];
    CHECK(row[2] == doctest::Approx(-x + 2.0 * x * std::exp(-theta * row[1])).epsilon(1e-7));
  }
  // Sign change brackets s* = ln 2 / theta for every sample.
  const double s_star = std::log(2.0) / theta;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][0] != rows[i - 1][0]) continue;
    if (rows[i - 1][2] * rows[i][2] < 0.0) {
      CHECK(rows[i - 1][1] < s_star);
      CHECK(rows[i][1] > s_star);
    }
  }
  for (const auto& row : read_csv(dir / "boundary.csv")) {
    CHECK(row[2] == doctest::Approx(-row[1] + 2.0 * row[1] * std::exp(-theta)).epsilon(1e-6));
  }
}

TEST_CASE("stacked theta export is piecewise constant") {
  json cfg = preset("spirals-depthvar");
  cfg.erase("variants");
  cfg["model"]["parametrization"] = {{"kind", "stacked"}, {"segments", 3}};
  const ExperimentConfig c = parse_config(cfg);
  NodeModel m = build_model(c.model, 2, 1, 0);
  auto& st = std::get<StackedTheta>(m.theta);
  for (std::size_t i = 0; i < st.thetas.size(); ++i) st.thetas[i].setConstant(double(i) + 1.0);
  GridSpec grid;
  grid.s_points = 31;
  grid.points = 3;
  const auto dir = scratch("export_stacked");
  export_flow(make_checkpoint(cfg, m), grid, dir);
  const auto rows = read_csv(dir / "theta.csv");
  REQUIRE(rows.size() == 31);
  for (const auto& row : rows) {
    const double expect = double(segment_index(st, row[0])) + 1.0;
    for (std::size_t k = 1; k < row.size(); ++k) CHECK(row[k] == expect);
  }
  GridSpec bad;
  bad.lo = {0.0};
  bad.hi = {1.0};
  CHECK_THROWS_AS(export_flow(make_checkpoint(cfg, m), bad, dir), ShapeError);
}

TEST_CASE("gradcheck passes and detects a corrupted gradient") {
  GradcheckOptions o;
  o.seeds = 1;
  CHECK(all_passed(run_gradcheck(o)));
  o.corrupt = true;
  CHECK_FALSE(all_passed(run_gradcheck(o)));
}
