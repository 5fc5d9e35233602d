#pragma once

// Loss evaluation and adjoint gradients for losses of the form
//   l = L(z(S), theta(S)) + int_0^S l(s, z(s), theta(s)) ds.
// The backward pass integrates (z, a, a_theta) jointly from S to 0, so no
// forward trajectory is stored.

#include <functional>
#include <optional>

#include <Eigen/Core>

#include "depthflow/depth_param.hpp"
#include "depthflow/hypernet.hpp"
#include "depthflow/ode.hpp"

namespace depthflow {

/// A parametrized vector field f_theta(s, z) with its vector-Jacobian
/// products. The state may stack several independent samples.
class Dynamics {
 public:
  virtual ~Dynamics() = default;

  virtual Index state_size() const = 0;
  /// Number of samples stacked in the state, each occupying a contiguous
  /// block of state_size() / batch_size() entries.
  virtual Index batch_size() const { return 1; }
  virtual const DepthParametrization& parametrization() const = 0;

  virtual void eval(double s, const ParamVector& theta, const Eigen::VectorXd& z,
                    Eigen::VectorXd& dz) const = 0;
  /// grad_z = a^T df/dz, grad_theta = a^T df/dtheta (length n_theta).
  virtual void vjp(double s, const ParamVector& theta, const Eigen::VectorXd& z,
                   const Eigen::VectorXd& a, Eigen::VectorXd& grad_z,
                   Eigen::VectorXd& grad_theta) const = 0;
};

/// L(z(S), theta(S)). Gradient outputs are filled when non-null; grad_theta
/// is requested only for theta-dependent losses.
using TerminalLossFn =
    std::function<double(const Eigen::VectorXd& z, const ParamVector& theta,
                         Eigen::VectorXd* grad_z, Eigen::VectorXd* grad_theta)>;
/// l(s, z(s), theta(s)).
using RunningLossFn = std::function<double(
    double s, const Eigen::VectorXd& z, const ParamVector& theta,
    Eigen::VectorXd* grad_z, Eigen::VectorXd* grad_theta)>;

struct LossSpec {
  TerminalLossFn terminal;  // empty means L = 0
  RunningLossFn running;    // empty means l = 0
  bool theta_dependent = false;
};

/// a + b, term by term.
LossSpec combine(const LossSpec& a, const LossSpec& b);
/// c * loss.
LossSpec scale(const LossSpec& loss, double c);

struct ForwardLoss {
  double loss = 0.0;
  double terminal = 0.0;
  double running = 0.0;
  Solution solution;  // state trajectory without the quadrature component
};

ForwardLoss forward_loss(const Dynamics& dyn, const Eigen::VectorXd& z0,
                         const LossSpec& loss, double depth, const Tolerance& tol,
                         const SolveOptions& options = {.record = false});

struct GradientReport {
  double loss = 0.0;
  /// Native layout: block_count blocks of n_theta entries (theta, alpha_j or
  /// theta_i).
  Eigen::VectorXd grad;
  Index blocks = 1;
  std::optional<double> grad_depth_bound;
  long nfe_forward = 0;
  long nfe_backward = 0;
  Eigen::VectorXd terminal_state;
  /// a(0) = dl/dz(0), used to differentiate input maps.
  Eigen::VectorXd adjoint_initial;

  Eigen::Ref<const Eigen::VectorXd> block(Index j) const {
    const Index n = grad.size() / blocks;
    return grad.segment(j * n, n);
  }
};

/// Dispatches on the parametrization held by `dyn`.
GradientReport adjoint_grad(const Dynamics& dyn, const Eigen::VectorXd& z0,
                            const LossSpec& loss, double depth,
                            const Tolerance& tol);

/// Constant theta: a_theta' = -a^T df/dtheta - dl/dtheta, grad = a_theta(0)
/// (+ dL/dtheta).
GradientReport generalized_adjoint_grad(const Dynamics& dyn,
                                        const Eigen::VectorXd& z0,
                                        const LossSpec& loss, double depth,
                                        const Tolerance& tol);
/// Galerkin theta(s): the parameter adjoint is weighted by psi(s) per block.
GradientReport spectral_adjoint_grad(const Dynamics& dyn,
                                     const Eigen::VectorXd& z0,
                                     const LossSpec& loss, double depth,
                                     const Tolerance& tol);
/// Stacked theta: one backward sweep, each segment feeding its own block.
GradientReport stacked_adjoint_grad(const Dynamics& dyn,
                                    const Eigen::VectorXd& z0,
                                    const LossSpec& loss, double depth,
                                    const Tolerance& tol);

/// dl/dS = dL/dz(S) . f(S, z(S)) + l(S, z(S)) given the terminal state.
double depth_bound_grad_at(const Dynamics& dyn, const Eigen::VectorXd& z_terminal,
                           const LossSpec& loss, double depth);
/// Same, solving the forward problem first.
double depth_bound_grad(const Dynamics& dyn, const Eigen::VectorXd& z0,
                        const LossSpec& loss, double depth, const Tolerance& tol);

struct AdaptiveDepthGrad {
  GradientReport report;  // grad_theta over [0, g(x)]; grad_depth_bound set
  double depth = 0.0;
  Eigen::VectorXd grad_omega;
};

/// Gradients for the map x -> phi_{g(x)}(x). `dyn` must already be
/// conditioned on x.
AdaptiveDepthGrad adaptive_depth_grad(const Dynamics& dyn,
                                      const DepthHypernet& net,
                                      const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& z0,
                                      const LossSpec& loss, const Tolerance& tol);

}  // namespace depthflow
