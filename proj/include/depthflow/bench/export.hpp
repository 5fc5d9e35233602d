#pragma once

// Plot-ready CSV exports of a trained Neural ODE.

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "depthflow/bench/experiment.hpp"

namespace depthflow::bench {

struct GridSpec {
  /// Per-dimension bounds; empty means [-3, 3] in every dimension. When
  /// given, the size must match the grid dimension (n_z for field.csv, n_x
  /// for boundary.csv).
  std::vector<double> lo;
  std::vector<double> hi;
  Index points = 25;    // per dimension
  Index s_points = 11;  // depth samples for trajectories, field and theta
  /// Trajectory starts; empty means up to 32 samples of the checkpoint's data.
  std::vector<Eigen::VectorXd> inputs;
  Tolerance tol{1e-6, 1e-6};
};

/// Writes trajectories.csv, field.csv (n_z <= 2), boundary.csv (n_x <= 2)
/// and theta.csv (depth-variant models). Returns the files written.
std::vector<std::filesystem::path> export_flow(const Checkpoint& checkpoint,
                                               const GridSpec& grid,
                                               const std::filesystem::path& out_dir);

}  // namespace depthflow::bench
