#pragma once

// One-dimensional continuous normalizing flow whose field is conditioned on
// the prior it flows into.

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "depthflow/adjoint.hpp"
#include "depthflow/depth_param.hpp"
#include "depthflow/mlp.hpp"

namespace depthflow {

struct Gaussian1d {
  double mean = 0.0;
  double std = 1.0;
  double log_density(double x) const;
};

/// dz/ds = f_theta([z, c]) with c the mean of the selected prior.
struct Cnf1d {
  FieldSpec field;  // 2 -> ... -> 1, data-controlled with data_dim 1
  DepthParametrization theta;
  std::vector<Gaussian1d> priors;
  double depth = 1.0;

  void validate() const;
  double condition(Index prior) const;

  static Cnf1d make(const std::vector<Index>& hidden, Activation act,
                    std::vector<Gaussian1d> priors, std::uint64_t seed);
};

/// State layout: per sample (z, log det) pairs, stacked.
class CnfDynamics : public Dynamics {
 public:
  CnfDynamics(const Cnf1d& cnf, Eigen::VectorXd conditions);

  Index state_size() const override { return 2 * conditions_.size(); }
  Index batch_size() const override { return conditions_.size(); }
  const DepthParametrization& parametrization() const override { return cnf_.theta; }
  void eval(double s, const ParamVector& theta, const Eigen::VectorXd& z,
            Eigen::VectorXd& dz) const override;
  void vjp(double s, const ParamVector& theta, const Eigen::VectorXd& z,
           const Eigen::VectorXd& a, Eigen::VectorXd& grad_z,
           Eigen::VectorXd& grad_theta) const override;

 private:
  const Cnf1d& cnf_;
  Eigen::VectorXd conditions_;
};

/// log p(x) for each x under the flow into prior `prior`.
Eigen::VectorXd cnf_logprob(const Cnf1d& cnf, const Eigen::VectorXd& x,
                            Index prior, const Tolerance& tol);
double cnf_logprob(const Cnf1d& cnf, double x, Index prior, const Tolerance& tol);

/// z_S ~ q_prior, integrated back to depth 0.
Eigen::VectorXd cnf_sample(const Cnf1d& cnf, Index prior, Index n,
                           std::uint64_t seed, const Tolerance& tol);

struct CnfGrad {
  double nll = 0.0;  // mean negative log-likelihood
  Eigen::VectorXd grad;
  long nfe_forward = 0;
  long nfe_backward = 0;
};

/// Mean NLL of samples x (with their prior indices) and its gradient with
/// respect to the native theta coefficients.
CnfGrad cnf_nll_grad(const Cnf1d& cnf, const Eigen::VectorXd& x,
                     const std::vector<Index>& prior, const Tolerance& tol);
double cnf_nll(const Cnf1d& cnf, const Eigen::VectorXd& x,
               const std::vector<Index>& prior, const Tolerance& tol);

}  // namespace depthflow
