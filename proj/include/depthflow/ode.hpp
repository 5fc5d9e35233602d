#pragma once

// Fixed-step RK4 and adaptive Dormand-Prince 5(4) integrators. Spans may run
// backwards (s_end < s_start).

#include <functional>
#include <vector>

#include <Eigen/Core>

namespace depthflow {

/// dz = f(s, z). `dz` is resized by the callee as needed.
using FieldFn =
    std::function<void(double s, const Eigen::VectorXd& z, Eigen::VectorXd& dz)>;

struct Tolerance {
  double rtol = 1e-6;
  double atol = 1e-6;
};

struct IvpProblem {
  FieldFn field;
  Eigen::VectorXd z0;
  double s_start = 0.0;
  double s_end = 1.0;
  double rtol = 1e-6;
  double atol = 1e-6;

  void set_tolerance(const Tolerance& t) {
    rtol = t.rtol;
    atol = t.atol;
  }
};

struct Solution {
  std::vector<double> grid;
  std::vector<Eigen::VectorXd> states;
  Eigen::VectorXd terminal;
  long nfe = 0;
  long rejected = 0;
};

struct SolveOptions {
  /// Keep every accepted state; otherwise only the endpoints are stored.
  bool record = true;
  long max_steps = 2'000'000;
};

Solution rk4_integrate(const IvpProblem& problem, long n_steps,
                       const SolveOptions& options = {});

/// Dormand-Prince 5(4) with FSAL, mixed-tolerance RMS error norm, and
/// step-factor clamped to [0.2, 10] (safety 0.9, exponent 1/5).
Solution dopri5_integrate(const IvpProblem& problem,
                          const SolveOptions& options = {});

/// Hairer-style starting step from the scaled norms of z0, f(z0) and one
/// trial evaluation; falls back to |span|/100 on degenerate norms.
double initial_step(const IvpProblem& problem);

}  // namespace depthflow
