#include "depthflow/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "depthflow/errors.hpp"

namespace depthflow {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                 a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b_hat (5th minus embedded 4th order weights).
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;
constexpr double kMinStepFraction = 1e-12;

double rms_scaled(const Eigen::VectorXd& v, const Eigen::VectorXd& scale) {
  if (v.size() == 0) return 0.0;
  return std::sqrt((v.array() / scale.array()).square().mean());
}

struct CountingField {
  const FieldFn& f;
  long& nfe;
  void operator()(double s, const Eigen::VectorXd& z, Eigen::VectorXd& dz) const {
    ++nfe;
    f(s, z, dz);
  }
};

double initial_step_impl(const CountingField& f, const IvpProblem& p,
                         const Eigen::VectorXd& f0) {
  const double span = std::abs(p.s_end - p.s_start);
  const double fallback = span / 100.0;
  const Eigen::VectorXd scale =
      (p.atol + p.rtol * p.z0.array().abs()).matrix();
  const double d0 = rms_scaled(p.z0, scale);
  const double d1 = rms_scaled(f0, scale);
  if (!(d1 > 1e-15) || !std::isfinite(d1)) return fallback;
  const double h0 = (d0 < 1e-5) ? std::min(1e-6, span) : 0.01 * d0 / d1;
  const double dir = p.s_end >= p.s_start ? 1.0 : -1.0;
  const Eigen::VectorXd z1 = p.z0 + dir * h0 * f0;
  Eigen::VectorXd f1;
  f(p.s_start + dir * h0, z1, f1);
  const double d2 = rms_scaled(f1 - f0, scale) / h0;
  double h1;
  if (std::max(d1, d2) <= 1e-15) {
    h1 = std::max(1e-6, h0 * 1e-3);
  } else {
    h1 = std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
  }
  double h = std::min(100.0 * h0, h1);
  if (!std::isfinite(h) || !(h > 0.0)) return fallback;
  return std::min(h, span);
}

void check_problem(const IvpProblem& p) {
  if (!p.field) throw DomainError("ivp: missing vector field");
  if (!std::isfinite(p.s_start) || !std::isfinite(p.s_end)) {
    throw DomainError("ivp: non-finite integration span");
  }
  if (!p.z0.allFinite()) {
    throw DivergenceError("ivp: non-finite initial state", p.s_start);
  }
}

}  // namespace

double initial_step(const IvpProblem& problem) {
  check_problem(problem);
  long nfe = 0;
  const CountingField f{problem.field, nfe};
  Eigen::VectorXd f0;
  f(problem.s_start, problem.z0, f0);
  return initial_step_impl(f, problem, f0);
}

Solution rk4_integrate(const IvpProblem& problem, long n_steps,
                       const SolveOptions& options) {
  check_problem(problem);
  if (n_steps < 1) throw DomainError("rk4: n_steps must be at least 1");
  Solution sol;
  const CountingField f{problem.field, sol.nfe};
  const double h = (problem.s_end - problem.s_start) / static_cast<double>(n_steps);
  Eigen::VectorXd z = problem.z0;
  Eigen::VectorXd k1, k2, k3, k4;
  sol.grid.push_back(problem.s_start);
  sol.states.push_back(z);
  for (long i = 0; i < n_steps; ++i) {
    const double s = problem.s_start + static_cast<double>(i) * h;
    f(s, z, k1);
    f(s + 0.5 * h, z + 0.5 * h * k1, k2);
    f(s + 0.5 * h, z + 0.5 * h * k2, k3);
    f(s + h, z + h * k3, k4);
    z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double s_next =
        i + 1 == n_steps ? problem.s_end
                         : problem.s_start + static_cast<double>(i + 1) * h;
    if (!z.allFinite()) {
      throw DivergenceError(
          fmt::format("rk4: state became non-finite at depth {}", s_next), s_next);
    }
    if (options.record || i + 1 == n_steps) {
      sol.grid.push_back(s_next);
      sol.states.push_back(z);
    }
  }
  sol.terminal = z;
  return sol;
}

Solution dopri5_integrate(const IvpProblem& problem,
                          const SolveOptions& options) {
  check_problem(problem);
  if (!(problem.rtol > 0.0) || !(problem.atol > 0.0)) {
    throw DomainError("dopri5: tolerances must be positive");
  }
  Solution sol;
  const CountingField f{problem.field, sol.nfe};
  const double s0 = problem.s_start;
  const double s1 = problem.s_end;
  Eigen::VectorXd z = problem.z0;
  sol.grid.push_back(s0);
  sol.states.push_back(z);
  if (s0 == s1) {
    sol.terminal = z;
    return sol;
  }
  const double dir = s1 > s0 ? 1.0 : -1.0;
  const double span = std::abs(s1 - s0);
  const double h_min = kMinStepFraction * span;

  Eigen::VectorXd k1, k2, k3, k4, k5, k6, k7, z_new, err, scale;
  f(s0, z, k1);
  if (!k1.allFinite()) {
    throw DivergenceError(
        fmt::format("dopri5: non-finite derivative at depth {}", s0), s0);
  }
  double h = initial_step_impl(f, problem, k1);
  double s = s0;
  bool last_failure_nonfinite = false;
  long steps = 0;

  while (dir * (s1 - s) > 0.0) {
    if (++steps > options.max_steps) {
      throw StiffnessError(
          fmt::format("dopri5: exceeded {} steps at depth {}", options.max_steps, s),
          s);
    }
    bool clipped = false;
    if (h >= std::abs(s1 - s)) {
      h = std::abs(s1 - s);
      clipped = true;
    }
    const double hs = dir * h;
    f(s + c2 * hs, z + hs * (a21 * k1), k2);
    f(s + c3 * hs, z + hs * (a31 * k1 + a32 * k2), k3);
    f(s + c4 * hs, z + hs * (a41 * k1 + a42 * k2 + a43 * k3), k4);
    f(s + c5 * hs, z + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), k5);
    f(s + hs, z + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), k6);
    z_new = z + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const double s_new = clipped ? s1 : s + hs;
    f(s_new, z_new, k7);
    err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    scale = (problem.atol +
             problem.rtol * z.array().abs().max(z_new.array().abs()))
                .matrix();
    double err_norm = rms_scaled(err, scale);
    const bool finite = z_new.allFinite() && k7.allFinite() && std::isfinite(err_norm);
    if (!finite) err_norm = std::numeric_limits<double>::infinity();

    if (err_norm <= 1.0) {
      s = s_new;
      z = z_new;
      k1 = k7;  // FSAL
      last_failure_nonfinite = false;
      if (options.record || dir * (s1 - s) <= 0.0) {
        sol.grid.push_back(s);
        sol.states.push_back(z);
      }
    } else {
      ++sol.rejected;
      last_failure_nonfinite = !finite;
    }
    double factor = err_norm == 0.0 ? kMaxFactor
                                    : kSafety * std::pow(err_norm, -1.0 / 5.0);
    factor = std::clamp(factor, kMinFactor, kMaxFactor);
    h *= factor;
    if (dir * (s1 - s) > 0.0 && h < h_min) {
      if (last_failure_nonfinite) {
        throw DivergenceError(
            fmt::format("dopri5: state became non-finite near depth {}", s), s);
      }
      throw StiffnessError(
          fmt::format("dopri5: step size underflow ({:.3g}) at depth {}", h, s), s);
    }
  }
  if (sol.grid.back() != s1) {
    sol.grid.push_back(s1);
    sol.states.push_back(z);
  }
  sol.terminal = z;
  return sol;
}

}  // namespace depthflow
