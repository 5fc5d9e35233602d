#include "depthflow/adjoint.hpp"

#include <cmath>

#include <fmt/format.h>

#include "depthflow/errors.hpp"

namespace depthflow {

namespace {

double eval_terminal(const LossSpec& loss, const Eigen::VectorXd& z,
                     const ParamVector& theta, Eigen::VectorXd* grad_z,
                     Eigen::VectorXd* grad_theta) {
  if (!loss.terminal) {
    if (grad_z != nullptr) *grad_z = Eigen::VectorXd::Zero(z.size());
    if (grad_theta != nullptr) *grad_theta = Eigen::VectorXd::Zero(theta.size());
    return 0.0;
  }
  if (grad_theta != nullptr) grad_theta->setZero(theta.size());
  return loss.terminal(z, theta, grad_z,
                       loss.theta_dependent ? grad_theta : nullptr);
}

void check_state(const Dynamics& dyn, const Eigen::VectorXd& z0) {
  if (z0.size() != dyn.state_size()) {
    throw ShapeError(fmt::format("initial state has {} entries, dynamics expect {}",
                                 z0.size(), dyn.state_size()));
  }
}

GradientReport run_adjoint(const Dynamics& dyn, const Eigen::VectorXd& z0,
                           const LossSpec& loss, double depth,
                           const Tolerance& tol) {
  check_state(dyn, z0);
  const DepthParametrization& param = dyn.parametrization();
  const auto pieces = depth_pieces(param, depth);
  const Index n = dyn.state_size();
  const Index n_theta = theta_size(param);
  const Index n_coef = coefficient_count(param);

  const ForwardLoss fwd = forward_loss(dyn, z0, loss, depth, tol);

  GradientReport report;
  report.loss = fwd.loss;
  report.blocks = block_count(param);
  report.nfe_forward = fwd.solution.nfe;
  report.terminal_state = fwd.solution.terminal;

  const ParamVector theta_end = eval_theta(param, depth, pieces.back());
  Eigen::VectorXd a_end, dL_dtheta;
  eval_terminal(loss, fwd.solution.terminal, theta_end, &a_end,
                loss.theta_dependent ? &dL_dtheta : nullptr);

  // Joint state [z, a, a_theta].
  Eigen::VectorXd y(2 * n + n_coef);
  y.head(n) = fwd.solution.terminal;
  y.segment(n, n) = a_end;
  y.tail(n_coef).setZero();

  for (auto it = pieces.rbegin(); it != pieces.rend(); ++it) {
    const DepthPiece piece = *it;
    IvpProblem back;
    back.set_tolerance(tol);
    back.z0 = y;
    back.s_start = piece.end;
    back.s_end = piece.begin;
    back.field = [&dyn, &param, &loss, piece, n, n_theta, n_coef](
                     double s, const Eigen::VectorXd& state,
                     Eigen::VectorXd& dstate) {
      const ParamVector theta = eval_theta(param, s, piece);
      const Eigen::VectorXd z = state.head(n);
      const Eigen::VectorXd a = state.segment(n, n);
      Eigen::VectorXd dz, gz, gtheta;
      dyn.eval(s, theta, z, dz);
      dyn.vjp(s, theta, z, a, gz, gtheta);
      if (loss.running) {
        Eigen::VectorXd lz, ltheta;
        loss.running(s, z, theta, &lz,
                     loss.theta_dependent ? &ltheta : nullptr);
        gz += lz;
        if (loss.theta_dependent && ltheta.size() == n_theta) gtheta += ltheta;
      }
      dstate.resize(2 * n + n_coef);
      dstate.head(n) = dz;
      dstate.segment(n, n) = -gz;
      auto dg = dstate.tail(n_coef);
      dg.setZero();
      pullback_theta_grad(param, s, -gtheta, dg, piece.segment);
    };
    const Solution sol = dopri5_integrate(back, {.record = false});
    report.nfe_backward += sol.nfe;
    y = sol.terminal;
  }

  report.grad = y.tail(n_coef);
  if (loss.theta_dependent && dL_dtheta.size() == n_theta) {
    pullback_theta_grad(param, depth, dL_dtheta, report.grad,
                        pieces.back().segment);
  }
  report.adjoint_initial = y.segment(n, n);
  report.grad_depth_bound = depth_bound_grad_at(dyn, fwd.solution.terminal, loss, depth);
  return report;
}

}  // namespace

LossSpec combine(const LossSpec& a, const LossSpec& b) {
  LossSpec out;
  out.theta_dependent = a.theta_dependent || b.theta_dependent;
  if (a.terminal && b.terminal) {
    out.terminal = [a, b](const Eigen::VectorXd& z, const ParamVector& theta,
                          Eigen::VectorXd* gz, Eigen::VectorXd* gt) {
      Eigen::VectorXd gz2, gt2;
      double v = eval_terminal(a, z, theta, gz, gt);
      v += eval_terminal(b, z, theta, gz ? &gz2 : nullptr, gt ? &gt2 : nullptr);
      if (gz != nullptr) *gz += gz2;
      if (gt != nullptr) *gt += gt2;
      return v;
    };
  } else {
    out.terminal = a.terminal ? a.terminal : b.terminal;
    const LossSpec& only = a.terminal ? a : b;
    if (out.terminal && !only.theta_dependent && out.theta_dependent) {
      // Keep grad_theta well-defined when the other term is theta-dependent.
      auto f = out.terminal;
      out.terminal = [f](const Eigen::VectorXd& z, const ParamVector& theta,
                         Eigen::VectorXd* gz, Eigen::VectorXd* gt) {
        if (gt != nullptr) gt->setZero(theta.size());
        return f(z, theta, gz, nullptr);
      };
    }
  }
  auto eval_running = [](const LossSpec& l, double s, const Eigen::VectorXd& z,
                         const ParamVector& theta, Eigen::VectorXd* gz,
                         Eigen::VectorXd* gt) {
    if (gt != nullptr) gt->setZero(theta.size());
    if (!l.running) {
      if (gz != nullptr) gz->setZero(z.size());
      return 0.0;
    }
    return l.running(s, z, theta, gz, l.theta_dependent ? gt : nullptr);
  };
  if (a.running || b.running) {
    out.running = [a, b, eval_running](double s, const Eigen::VectorXd& z,
                                       const ParamVector& theta,
                                       Eigen::VectorXd* gz, Eigen::VectorXd* gt) {
      Eigen::VectorXd gz2, gt2;
      double v = eval_running(a, s, z, theta, gz, gt);
      v += eval_running(b, s, z, theta, gz ? &gz2 : nullptr, gt ? &gt2 : nullptr);
      if (gz != nullptr) *gz += gz2;
      if (gt != nullptr) *gt += gt2;
      return v;
    };
  }
  return out;
}

LossSpec scale(const LossSpec& loss, double c) {
  LossSpec out;
  out.theta_dependent = loss.theta_dependent;
  if (loss.terminal) {
    out.terminal = [f = loss.terminal, c](const Eigen::VectorXd& z,
                                          const ParamVector& theta,
                                          Eigen::VectorXd* gz, Eigen::VectorXd* gt) {
      const double v = f(z, theta, gz, gt);
      if (gz != nullptr) *gz *= c;
      if (gt != nullptr) *gt *= c;
      return c * v;
    };
  }
  if (loss.running) {
    out.running = [f = loss.running, c](double s, const Eigen::VectorXd& z,
                                        const ParamVector& theta,
                                        Eigen::VectorXd* gz, Eigen::VectorXd* gt) {
      const double v = f(s, z, theta, gz, gt);
      if (gz != nullptr) *gz *= c;
      if (gt != nullptr) *gt *= c;
      return c * v;
    };
  }
  return out;
}

ForwardLoss forward_loss(const Dynamics& dyn, const Eigen::VectorXd& z0,
                         const LossSpec& loss, double depth,
                         const Tolerance& tol, const SolveOptions& options) {
  check_state(dyn, z0);
  const DepthParametrization& param = dyn.parametrization();
  const auto pieces = depth_pieces(param, depth);
  const Index n = dyn.state_size();
  const bool quad = static_cast<bool>(loss.running);

  ForwardLoss out;
  Eigen::VectorXd y(n + (quad ? 1 : 0));
  y.head(n) = z0;
  if (quad) y[n] = 0.0;
  out.solution.grid.push_back(0.0);
  out.solution.states.push_back(z0);

  for (const DepthPiece& piece : pieces) {
    IvpProblem p;
    p.set_tolerance(tol);
    p.z0 = y;
    p.s_start = piece.begin;
    p.s_end = piece.end;
    p.field = [&dyn, &param, &loss, piece, n, quad](double s,
                                                    const Eigen::VectorXd& state,
                                                    Eigen::VectorXd& dstate) {
      const ParamVector theta = eval_theta(param, s, piece);
      dstate.resize(state.size());
      if (!quad) {
        dyn.eval(s, theta, state, dstate);
        return;
      }
      const Eigen::VectorXd z = state.head(n);
      Eigen::VectorXd dz;
      dyn.eval(s, theta, z, dz);
      dstate.head(n) = dz;
      dstate[n] = loss.running(s, z, theta, nullptr, nullptr);
    };
    const Solution sol = dopri5_integrate(p, options);
    out.solution.nfe += sol.nfe;
    out.solution.rejected += sol.rejected;
    for (std::size_t i = 1; i < sol.grid.size(); ++i) {
      out.solution.grid.push_back(sol.grid[i]);
      out.solution.states.push_back(sol.states[i].head(n));
    }
    y = sol.terminal;
  }
  out.solution.terminal = y.head(n);
  out.running = quad ? y[n] : 0.0;
  const ParamVector theta_end = eval_theta(param, depth, pieces.back());
  out.terminal = eval_terminal(loss, out.solution.terminal, theta_end, nullptr, nullptr);
  out.loss = out.terminal + out.running;
  return out;
}

GradientReport adjoint_grad(const Dynamics& dyn, const Eigen::VectorXd& z0,
                            const LossSpec& loss, double depth,
                            const Tolerance& tol) {
  return run_adjoint(dyn, z0, loss, depth, tol);
}

GradientReport generalized_adjoint_grad(const Dynamics& dyn,
                                        const Eigen::VectorXd& z0,
                                        const LossSpec& loss, double depth,
                                        const Tolerance& tol) {
  if (!std::holds_alternative<ConstantTheta>(dyn.parametrization())) {
    throw DomainError("generalized_adjoint_grad requires constant parameters");
  }
  return run_adjoint(dyn, z0, loss, depth, tol);
}

GradientReport spectral_adjoint_grad(const Dynamics& dyn,
                                     const Eigen::VectorXd& z0,
                                     const LossSpec& loss, double depth,
                                     const Tolerance& tol) {
  if (!std::holds_alternative<GalerkinTheta>(dyn.parametrization())) {
    throw DomainError("spectral_adjoint_grad requires a Galerkin parametrization");
  }
  return run_adjoint(dyn, z0, loss, depth, tol);
}

GradientReport stacked_adjoint_grad(const Dynamics& dyn,
                                    const Eigen::VectorXd& z0,
                                    const LossSpec& loss, double depth,
                                    const Tolerance& tol) {
  if (!std::holds_alternative<StackedTheta>(dyn.parametrization())) {
    throw DomainError("stacked_adjoint_grad requires stacked parameters");
  }
  return run_adjoint(dyn, z0, loss, depth, tol);
}

double depth_bound_grad_at(const Dynamics& dyn, const Eigen::VectorXd& z_terminal,
                           const LossSpec& loss, double depth) {
  const DepthParametrization& param = dyn.parametrization();
  const auto pieces = depth_pieces(param, depth);
  const ParamVector theta = eval_theta(param, depth, pieces.back());
  Eigen::VectorXd dL;
  eval_terminal(loss, z_terminal, theta, &dL, nullptr);
  double g = 0.0;
  if (dL.size() > 0 && dL.cwiseAbs().maxCoeff() > 0.0) {
    Eigen::VectorXd f;
    dyn.eval(depth, theta, z_terminal, f);
    g += dL.dot(f);
  }
  if (loss.running) g += loss.running(depth, z_terminal, theta, nullptr, nullptr);
  return g;
}

double depth_bound_grad(const Dynamics& dyn, const Eigen::VectorXd& z0,
                        const LossSpec& loss, double depth, const Tolerance& tol) {
  const ForwardLoss fwd = forward_loss(dyn, z0, loss, depth, tol);
  return depth_bound_grad_at(dyn, fwd.solution.terminal, loss, depth);
}

AdaptiveDepthGrad adaptive_depth_grad(const Dynamics& dyn,
                                      const DepthHypernet& net,
                                      const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& z0,
                                      const LossSpec& loss, const Tolerance& tol) {
  AdaptiveDepthGrad out;
  out.depth = eval_depth(net, x);
  if (!(out.depth > 0.0)) {
    throw DomainError(fmt::format("adaptive depth: g(x) = {} is not positive",
                                  out.depth));
  }
  out.report = adjoint_grad(dyn, z0, loss, out.depth, tol);
  out.grad_omega = eval_depth_vjp(net, x, *out.report.grad_depth_bound);
  return out;
}

}  // namespace depthflow
