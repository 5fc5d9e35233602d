#pragma once

// Experiment configuration: JSON schema, embedded presets and typed view.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthflow/bench/data.hpp"
#include "depthflow/cnf.hpp"
#include "depthflow/models.hpp"
#include "depthflow/train.hpp"

namespace depthflow::bench {

inline constexpr int kSchemaVersion = 1;

struct DataConfig {
  std::string name;
  Index n = 0;
  std::uint64_t seed = 0;
  DataParams params;
};

struct ParamConfig {
  std::string kind = "constant";  // constant | galerkin | stacked
  BasisKind basis = BasisKind::Fourier;
  Index harmonics = 1;  // fourier
  Index size = 3;       // polynomial, chebyshev
  double period = 0.0;  // basis span, 0 means the model depth
  bool periodic = false;
  double noise_scale = 0.0;
  Index segments = 1;  // stacked
};

struct ModelConfig {
  InputMode input_mode = InputMode::Autonomous;
  std::vector<Index> hidden;
  Activation activation = Activation::Tanh;
  Activation final_activation = Activation::Identity;
  AugmentKind augment = AugmentKind::None;
  Index extra = 0;
  Index order = 1;
  bool input_layer = false;
  Index input_layer_dim = 0;  // 0 means the kind's default
  bool input_layer_identity = false;
  bool input_layer_trainable = true;
  ParamConfig param;
  double depth = 1.0;
  std::string output = "linear";  // linear | identity
  bool adaptive = false;
  Index adaptive_hidden = 8;
};

struct TrainSection {
  long epochs = 0;
  Index batch_size = 0;
  OptimizerConfig optimizer;
  LrSchedule schedule;
  LossKind loss = LossKind::Mse;
  Regularizer regularizer;
};

struct EvalConfig {
  double extrapolate_to = 3.0;
  Index grid_points = 101;
  Index samples = 4000;
  Index quadrature_points = 4001;
  double quadrature_lo = -8.0;
  double quadrature_hi = 8.0;
};

struct ExperimentConfig {
  std::string name;
  std::string description;
  std::uint64_t seed = 0;
  DataConfig data;
  ModelConfig model;
  TrainSection train;
  Tolerance tol{1e-5, 1e-5};
  EvalConfig eval;
};

/// One resolved run of an experiment file: its name and full JSON.
struct RunSpec {
  std::string name;
  nlohmann::json config;
};

/// Throws ConfigError with the offending field path.
ExperimentConfig parse_config(const nlohmann::json& j);

/// Applies "preset" references and expands "variants" into runs. Each
/// variant is the base config merge-patched with the variant's "patch".
std::vector<RunSpec> resolve_runs(const nlohmann::json& j);

const std::vector<std::string>& preset_names();
/// Throws ConfigError for unknown names.
nlohmann::json preset(const std::string& name);
std::string preset_description(const std::string& name);

NodeModel build_model(const ModelConfig& cfg, Index n_x, Index n_y, std::uint64_t seed);
Cnf1d build_cnf(const ExperimentConfig& cfg);
TrainConfig train_config(const ExperimentConfig& cfg);

}  // namespace depthflow::bench
