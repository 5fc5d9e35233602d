#pragma once

// Synthetic datasets for the benchmark presets.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "depthflow/mlp.hpp"

namespace depthflow::bench {

struct DataParams {
  double radius = 1.0;  // annuli
  Index dim = 2;        // annuli: 1 or 2
  double noise = 0.1;   // moons, spirals
  double sigma = 0.3;   // cnf-conditional
  Index initial_conditions = 1;  // tracking
  double spread = 0.0;           // tracking: perturbation of extra starts
};

/// Samples are columns. For tracking, `inputs` holds initial conditions and
/// `signal` the reference sampled on `grid`. For cnf-conditional, targets
/// hold the prior index (0 or 1) of each sample.
struct Dataset {
  std::string name;
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
  std::vector<double> grid;
  Eigen::MatrixXd signal;

  Index size() const { return inputs.cols(); }
};

Dataset make_dataset(const std::string& name, Index n, std::uint64_t seed,
                     const DataParams& params = {});

const std::vector<std::string>& dataset_names();

/// -1 inside the radius, +1 on or outside it.
double annuli_label(const Eigen::VectorXd& x, double radius);

/// beta(s) = (sin 2 pi s, cos 2 pi s).
Eigen::VectorXd tracking_signal(double s);

/// Prior means and the data mean paired with each prior.
struct CnfPairing {
  double prior_mean[2];
  double data_mean[2];
};
CnfPairing cnf_pairing();

}  // namespace depthflow::bench
