#pragma once

// Running experiments, reports and checkpoints.

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthflow/bench/config.hpp"

namespace depthflow::bench {

struct RunResult {
  std::string name;
  nlohmann::json config;
  double final_loss = 0.0;
  double accuracy = 0.0;  // NaN when not a sign task
  std::vector<double> nfe_trace;
  std::vector<EpochRecord> history;
  /// Task-specific numbers (e.g. extrapolation_mse, sample_mean_q1).
  std::map<std::string, double> metrics;
  std::map<std::string, std::string> artifacts;
  bool diverged = false;
  std::string error;
  double wall_time = 0.0;
};

struct ExperimentReport {
  std::string name;
  nlohmann::json config;
  std::vector<RunResult> runs;
  double wall_time = 0.0;

  bool diverged() const;
  const RunResult& run(const std::string& name) const;
};

nlohmann::json to_json(const ExperimentReport& r);
ExperimentReport report_from_json(const nlohmann::json& j);
std::string dump_report(const ExperimentReport& r);
void write_report(const ExperimentReport& r, const std::filesystem::path& path);
ExperimentReport read_report(const std::filesystem::path& path);

struct RunOptions {
  /// Empty means no files are written.
  std::filesystem::path out_dir;
  bool quiet = true;
  std::function<void(const std::string& line)> log;
};

/// Resolves presets and variants, then trains and evaluates every run.
ExperimentReport run_experiment(const nlohmann::json& config, const RunOptions& options = {});
ExperimentReport run_experiment_file(const std::filesystem::path& path,
                                     const RunOptions& options = {});
RunResult run_single(const std::string& name, const nlohmann::json& config,
                     const RunOptions& options = {});

/// A trained model together with the configuration that rebuilds it.
struct Checkpoint {
  nlohmann::json config;
  std::string kind = "node";  // node | cnf
  Index input_dim = 0;
  Index output_dim = 0;
  Eigen::VectorXd params;
};

nlohmann::json to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Throws ConfigError when the checkpoint is not a Neural ODE model.
NodeModel checkpoint_model(const Checkpoint& c);
Checkpoint make_checkpoint(const nlohmann::json& config, const NodeModel& model);

/// 17 significant digits, the format used by every CSV artifact.
std::string fmt_double(double v);

}  // namespace depthflow::bench
