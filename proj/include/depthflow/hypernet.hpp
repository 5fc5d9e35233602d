#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "depthflow/mlp.hpp"

namespace depthflow {

/// Integration-depth network g(x) = |1 + w_o^T relu(W_i x + b_i) + b_o|.
struct DepthHypernet {
  FieldSpec spec;  // n_x -> hidden (relu) -> 1 (identity)
  ParamVector omega;

  static DepthHypernet make(Index input_dim, Index hidden, std::uint64_t seed);
  /// All-zero weights: g(x) = 1 everywhere.
  static DepthHypernet zeros(Index input_dim, Index hidden);
};

/// Raw network value 1 + w_o^T relu(...) + b_o before the absolute value.
double depth_preactivation(const DepthHypernet& net, const Eigen::VectorXd& x);

/// s*_x = g(x) >= 0.
double eval_depth(const DepthHypernet& net, const Eigen::VectorXd& x);

/// d g(x) / d omega scaled by `upstream` (zero subgradient where g = 0).
Eigen::VectorXd eval_depth_vjp(const DepthHypernet& net, const Eigen::VectorXd& x,
                               double upstream);

}  // namespace depthflow
