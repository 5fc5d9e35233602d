#include "depthflow/hypernet.hpp"

#include <cmath>

namespace depthflow {

DepthHypernet DepthHypernet::make(Index input_dim, Index hidden,
                                  std::uint64_t seed) {
  DepthHypernet net;
  net.spec = FieldSpec::make(input_dim, 1, {hidden}, Activation::Relu);
  net.omega = init_params(net.spec, seed);
  return net;
}

DepthHypernet DepthHypernet::zeros(Index input_dim, Index hidden) {
  DepthHypernet net;
  net.spec = FieldSpec::make(input_dim, 1, {hidden}, Activation::Relu);
  net.omega = ParamVector::Zero(param_count(net.spec));
  return net;
}

double depth_preactivation(const DepthHypernet& net, const Eigen::VectorXd& x) {
  return 1.0 + mlp_forward(net.spec, net.omega, x)[0];
}

double eval_depth(const DepthHypernet& net, const Eigen::VectorXd& x) {
  return std::abs(depth_preactivation(net, x));
}

Eigen::VectorXd eval_depth_vjp(const DepthHypernet& net,
                               const Eigen::VectorXd& x, double upstream) {
  const double pre = depth_preactivation(net, x);
  const double sign = pre > 0.0 ? 1.0 : (pre < 0.0 ? -1.0 : 0.0);
  Eigen::MatrixXd cot(1, 1);
  cot(0, 0) = sign * upstream;
  return mlp_vjp(net.spec, net.omega, Eigen::MatrixXd(x), cot).grad_params;
}

}  // namespace depthflow
