#pragma once

// Finite-difference self-check of the adjoint gradients.

#include <string>
#include <vector>

#include "depthflow/ode.hpp"

namespace depthflow::bench {

struct GradcheckOptions {
  int seeds = 20;
  Tolerance tol{1e-8, 1e-8};
  /// Tolerance of the forward solves inside the finite differences.
  Tolerance fd_tol{1e-11, 1e-11};
  double fd_step = 1e-5;
  double threshold = 1e-4;
  double reduction_threshold = 1e-8;
  /// Perturbs every adjoint gradient; the sweep must then fail.
  bool corrupt = false;
};

struct GradcheckCell {
  std::string variant;        // vanilla | depth-concat | data-controlled | higher-order
  std::string parametrization;  // constant | galerkin | stacked, or a reduction name
  std::string loss;           // terminal | integral | theta-dependent
  double max_rel_error = 0.0;
  double threshold = 0.0;
  int problems = 0;
  bool passed = false;
};

std::vector<GradcheckCell> run_gradcheck(const GradcheckOptions& options = {});
bool all_passed(const std::vector<GradcheckCell>& cells);
std::string format_gradcheck(const std::vector<GradcheckCell>& cells);

}  // namespace depthflow::bench
