#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

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

enum Exit { kOk = 0, kConfig = 1, kDiverged = 2, kGradcheck = 3 };

json load_config_arg(const std::string& config, const std::string& preset_name) {
  if (!preset_name.empty()) return json{{"preset", preset_name}};
  if (config.empty()) throw ConfigError("--config", "a config file or --preset is required");
  std::ifstream in(config, std::ios::binary);
  if (!in) throw ConfigError("--config", "cannot open '" + config + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(config, e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"depthflow: Neural ODE training, gradient checks and flow exports"};
  app.require_subcommand(1);

  std::string config, preset_name, out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<double> rtol, atol;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "run an experiment config or preset");
  train->add_option("--config", config, "experiment JSON file");
  train->add_option("--preset", preset_name, "embedded preset name");
  train->add_option("--seed", seed, "override the seed");
  train->add_option("--out-dir", out_dir, "directory for the report and artifacts");
  train->add_option("--tol-rtol", rtol, "solver relative tolerance");
  train->add_option("--tol-atol", atol, "solver absolute tolerance");
  train->add_flag("--quiet", quiet, "suppress progress output");

  int seeds = 20;
  bool corrupt = false;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the adjoint");
  grad->add_option("--seeds", seeds, "problems per cell")->check(CLI::PositiveNumber);
  grad->add_option("--tol-rtol", rtol, "solver relative tolerance");
  grad->add_option("--tol-atol", atol, "solver absolute tolerance");
  grad->add_flag("--corrupt", corrupt, "perturb the adjoint gradients (harness self-test)");
  grad->add_flag("--quiet", quiet, "print only the summary line");

  std::string checkpoint;
  std::vector<double> lo, hi;
  long points = 25, s_points = 11;
  auto* export_cmd = app.add_subcommand("export-flow", "write trajectory, field, boundary and theta CSVs");
  export_cmd->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();
  export_cmd->add_option("--out-dir", out_dir, "output directory");
  export_cmd->add_option("--lo", lo, "grid lower bounds, one per dimension");
  export_cmd->add_option("--hi", hi, "grid upper bounds, one per dimension");
  export_cmd->add_option("--points", points, "grid points per dimension")->check(CLI::PositiveNumber);
  export_cmd->add_option("--s-points", s_points, "depth samples")->check(CLI::Range(2L, 100000L));
  export_cmd->add_option("--tol-rtol", rtol, "solver relative tolerance");
  export_cmd->add_option("--tol-atol", atol, "solver absolute tolerance");
  export_cmd->add_flag("--quiet", quiet, "no output");

  std::string name, out_file;
  long n = 0;
  DataParams dp;
  auto* data = app.add_subcommand("make-data", "write a dataset as CSV");
  data->add_option("--name", name, "dataset name")->required();
  data->add_option("--n", n, "number of samples")->required();
  data->add_option("--seed", seed, "random seed");
  data->add_option("--radius", dp.radius, "annuli radius");
  data->add_option("--dim", dp.dim, "annuli dimension");
  data->add_option("--noise", dp.noise, "moons / spirals noise");
  data->add_option("--sigma", dp.sigma, "cnf-conditional std");
  data->add_option("--out", out_file, "output CSV (stdout when empty)");

  std::string show;
  auto* presets = app.add_subcommand("presets", "list embedded presets");
  presets->add_option("--show", show, "print one preset as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      json cfg = load_config_arg(config, preset_name);
      json patch = json::object();
      if (seed) patch["seed"] = *seed;
      if (rtol) patch["solver"]["rtol"] = *rtol;
      if (atol) patch["solver"]["atol"] = *atol;
      if (!patch.empty()) cfg.merge_patch(patch);
      RunOptions opt;
      opt.out_dir = out_dir;
      opt.quiet = quiet;
      const ExperimentReport r = run_experiment(cfg, opt);
      if (!quiet) {
        for (const RunResult& run : r.runs) {
          std::cout << fmt::format("{:<20} loss {:<12.6g} accuracy {:<8.4g} nfe {:<8.4g}",
                                   run.name, run.final_loss, run.accuracy,
                                   run.nfe_trace.empty() ? 0.0 : run.nfe_trace.back());
          for (const auto& [k, v] : run.metrics) std::cout << fmt::format(" {}={:.6g}", k, v);
          std::cout << "\n";
        }
        std::cout << "report: " << (std::filesystem::path(out_dir) / "report.json").string()
                  << "\n";
      }
      return r.diverged() ? kDiverged : kOk;
    }
    if (*grad) {
      GradcheckOptions o;
      o.seeds = seeds;
      o.corrupt = corrupt;
      if (rtol) o.tol.rtol = *rtol;
      if (atol) o.tol.atol = *atol;
      const auto cells = run_gradcheck(o);
      const bool ok = all_passed(cells);
      if (!quiet) std::cout << format_gradcheck(cells);
      std::cout << (ok ? "gradcheck: all cells passed\n" : "gradcheck: FAILED\n");
      return ok ? kOk : kGradcheck;
    }
    if (*export_cmd) {
      GridSpec g;
      g.lo = lo;
      g.hi = hi;
      g.points = points;
      g.s_points = s_points;
      if (rtol) g.tol.rtol = *rtol;
      if (atol) g.tol.atol = *atol;
      const auto files = export_flow(load_checkpoint(checkpoint), g, out_dir);
      if (!quiet) {
        for (const auto& f : files) std::cout << f.string() << "\n";
      }
      return kOk;
    }
    if (*data) {
      const Dataset d = make_dataset(name, n, seed.value_or(0), dp);
      std::string csv;
      if (d.name == "tracking") {
        csv = "s,beta_0,beta_1\n";
        for (std::size_t i = 0; i < d.grid.size(); ++i) {
          const Index c = static_cast<Index>(i);
          csv += fmt::format("{},{},{}\n", fmt_double(d.grid[i]), fmt_double(d.signal(0, c)),
                             fmt_double(d.signal(1, c)));
        }
      } else {
        csv = "sample";
        for (Index i = 0; i < d.inputs.rows(); ++i) csv += fmt::format(",x_{}", i);
        for (Index i = 0; i < d.targets.rows(); ++i) csv += fmt::format(",y_{}", i);
        csv += "\n";
        for (Index k = 0; k < d.size(); ++k) {
          csv += fmt::format("{}", k);
          for (Index i = 0; i < d.inputs.rows(); ++i) csv += "," + fmt_double(d.inputs(i, k));
          for (Index i = 0; i < d.targets.rows(); ++i) csv += "," + fmt_double(d.targets(i, k));
          csv += "\n";
        }
      }
      if (out_file.empty()) {
        std::cout << csv;
      } else {
        std::ofstream out(out_file, std::ios::binary);
        if (!out) throw Error("cannot write " + out_file);
        out << csv;
      }
      return kOk;
    }
    if (*presets) {
      if (!show.empty()) {
        std::cout << preset(show).dump(2) << "\n";
      } else {
        for (const auto& p : preset_names()) {
          std::cout << fmt::format("{:<24} {}\n", p, preset_description(p));
        }
      }
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const StiffnessError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }
  return kOk;
}
