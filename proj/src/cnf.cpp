#include "depthflow/cnf.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "depthflow/errors.hpp"

namespace depthflow {

double Gaussian1d::log_density(double x) const {
  const double r = (x - mean) / std;
  return -0.5 * r * r - std::log(std) - 0.5 * std::log(2.0 * std::numbers::pi);
}

void Cnf1d::validate() const {
  field.validate();
  if (field.input_mode != InputMode::DataControlled || field.state_dim() != 1 ||
      field.data_dim != 1 || field.output_dim() != 1) {
    throw ShapeError("cnf field must map [z, c] to a scalar");
  }
  depthflow::validate(theta);
  if (theta_size(theta) != param_count(field)) {
    throw ShapeError(fmt::format("cnf theta has {} entries, the field needs {}",
                                 theta_size(theta), param_count(field)));
  }
  if (priors.empty()) throw DomainError("cnf needs at least one prior");
  for (const auto& p : priors) {
    if (!(p.std > 0.0)) throw DomainError("cnf prior std must be positive");
  }
  if (!(depth > 0.0)) throw DomainError("cnf depth must be positive");
}

double Cnf1d::condition(Index prior) const {
  if (prior < 0 || prior >= static_cast<Index>(priors.size())) {
    throw DomainError(fmt::format("prior index {} out of range [0, {})", prior,
                                  priors.size()));
  }
  return priors[static_cast<std::size_t>(prior)].mean;
}

Cnf1d Cnf1d::make(const std::vector<Index>& hidden, Activation act,
                  std::vector<Gaussian1d> priors, std::uint64_t seed) {
  Cnf1d c;
  c.field = FieldSpec::make(1, 1, hidden, act, Activation::Identity,
                            InputMode::DataControlled, 1);
  c.theta = make_constant(init_params(c.field, seed));
  c.priors = std::move(priors);
  return c;
}

CnfDynamics::CnfDynamics(const Cnf1d& cnf, Eigen::VectorXd conditions)
    : cnf_(cnf), conditions_(std::move(conditions)) {}

namespace {

Eigen::MatrixXd cnf_input(const Eigen::VectorXd& state, const Eigen::VectorXd& c) {
  const Index b = c.size();
  Eigen::MatrixXd u(2, b);
  for (Index k = 0; k < b; ++k) u(0, k) = state[2 * k];
  u.row(1) = c.transpose();
  return u;
}

Eigen::MatrixXd unit_z(Index b) {
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(2, b);
  e.row(0).setOnes();
  return e;
}

}  // namespace

void CnfDynamics::eval(double, const ParamVector& theta, const Eigen::VectorXd& z,
                       Eigen::VectorXd& dz) const {
  const Index b = conditions_.size();
  const MlpJvp j = mlp_jvp(cnf_.field, theta, cnf_input(z, conditions_), unit_z(b));
  dz.resize(2 * b);
  for (Index k = 0; k < b; ++k) {
    dz[2 * k] = j.output(0, k);
    dz[2 * k + 1] = j.output_tangent(0, k);
  }
}

void CnfDynamics::vjp(double, const ParamVector& theta, const Eigen::VectorXd& z,
                      const Eigen::VectorXd& a, Eigen::VectorXd& grad_z,
                      Eigen::VectorXd& grad_theta) const {
  // With f' = df/dz: a_z f' + a_l f'' for z, a_z df/dtheta + a_l df'/dtheta
  // for theta; both are the forward derivative of the VJP with cotangent a_l
  // along (e_z, a_z).
  const Index b = conditions_.size();
  Eigen::MatrixXd cot(1, b), cot_t(1, b);
  for (Index k = 0; k < b; ++k) {
    cot_t(0, k) = a[2 * k];
    cot(0, k) = a[2 * k + 1];
  }
  const MlpVjpTangent t = mlp_vjp_tangent(cnf_.field, theta, cnf_input(z, conditions_),
                                          unit_z(b), cot, cot_t);
  grad_z = Eigen::VectorXd::Zero(2 * b);
  for (Index k = 0; k < b; ++k) grad_z[2 * k] = t.grad_input_tangent(0, k);
  grad_theta = t.grad_params_tangent;
}

namespace {

Eigen::VectorXd pack(const Eigen::VectorXd& x) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(2 * x.size());
  for (Index k = 0; k < x.size(); ++k) s[2 * k] = x[k];
  return s;
}

}  // namespace

Eigen::VectorXd cnf_logprob(const Cnf1d& cnf, const Eigen::VectorXd& x, Index prior,
                            const Tolerance& tol) {
  const double c = cnf.condition(prior);
  const Gaussian1d& q = cnf.priors[static_cast<std::size_t>(prior)];
  CnfDynamics dyn(cnf, Eigen::VectorXd::Constant(x.size(), c));
  const ForwardLoss f = forward_loss(dyn, pack(x), LossSpec{}, cnf.depth, tol);
  Eigen::VectorXd out(x.size());
  for (Index k = 0; k < x.size(); ++k) {
    out[k] = q.log_density(f.solution.terminal[2 * k]) + f.solution.terminal[2 * k + 1];
  }
  return out;
}

double cnf_logprob(const Cnf1d& cnf, double x, Index prior, const Tolerance& tol) {
  return cnf_logprob(cnf, Eigen::VectorXd::Constant(1, x), prior, tol)[0];
}

Eigen::VectorXd cnf_sample(const Cnf1d& cnf, Index prior, Index n, std::uint64_t seed,
                           const Tolerance& tol) {
  if (n < 1) throw DomainError("cnf_sample: n must be at least 1");
  const double c = cnf.condition(prior);
  const Gaussian1d& q = cnf.priors[static_cast<std::size_t>(prior)];
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(q.mean, q.std);
  Eigen::VectorXd zs(n);
  for (Index k = 0; k < n; ++k) zs[k] = dist(rng);

  const ParamVector theta = eval_theta(cnf.theta, 0.0);
  const Eigen::MatrixXd cond = Eigen::MatrixXd::Constant(1, n, c);
  IvpProblem p;
  p.set_tolerance(tol);
  p.z0 = zs;
  p.s_start = cnf.depth;
  p.s_end = 0.0;
  const bool constant = std::holds_alternative<ConstantTheta>(cnf.theta);
  p.field = [&cnf, &cond, &theta, constant, n](double s, const Eigen::VectorXd& z,
                                               Eigen::VectorXd& dz) {
    Eigen::MatrixXd u(2, n);
    u.row(0) = z.transpose();
    u.row(1) = cond;
    const Eigen::MatrixXd f =
        mlp_forward(cnf.field, constant ? theta : eval_theta(cnf.theta, s), u);
    dz = f.row(0).transpose();
  };
  return dopri5_integrate(p, {.record = false}).terminal;
}

namespace {

LossSpec nll_loss(const Cnf1d& cnf, const std::vector<Index>& prior) {
  LossSpec loss;
  loss.terminal = [&cnf, &prior](const Eigen::VectorXd& z, const ParamVector&,
                                 Eigen::VectorXd* gz, Eigen::VectorXd*) {
    const Index b = z.size() / 2;
    const double inv_b = 1.0 / static_cast<double>(b);
    double v = 0.0;
    if (gz != nullptr) gz->setZero(z.size());
    for (Index k = 0; k < b; ++k) {
      const Gaussian1d& q = cnf.priors[static_cast<std::size_t>(prior[k])];
      v -= q.log_density(z[2 * k]) + z[2 * k + 1];
      if (gz != nullptr) {
        (*gz)[2 * k] = inv_b * (z[2 * k] - q.mean) / (q.std * q.std);
        (*gz)[2 * k + 1] = -inv_b;
      }
    }
    return v * inv_b;
  };
  return loss;
}

Eigen::VectorXd conditions_for(const Cnf1d& cnf, const Eigen::VectorXd& x,
                               const std::vector<Index>& prior) {
  if (static_cast<Index>(prior.size()) != x.size()) {
    throw ShapeError(fmt::format("{} samples but {} prior indices", x.size(),
                                 prior.size()));
  }
  Eigen::VectorXd c(x.size());
  for (Index k = 0; k < x.size(); ++k) c[k] = cnf.condition(prior[k]);
  return c;
}

}  // namespace

CnfGrad cnf_nll_grad(const Cnf1d& cnf, const Eigen::VectorXd& x,
                     const std::vector<Index>& prior, const Tolerance& tol) {
  CnfDynamics dyn(cnf, conditions_for(cnf, x, prior));
  const GradientReport r = adjoint_grad(dyn, pack(x), nll_loss(cnf, prior), cnf.depth, tol);
  return CnfGrad{r.loss, r.grad, r.nfe_forward, r.nfe_backward};
}

double cnf_nll(const Cnf1d& cnf, const Eigen::VectorXd& x,
               const std::vector<Index>& prior, const Tolerance& tol) {
  CnfDynamics dyn(cnf, conditions_for(cnf, x, prior));
  return forward_loss(dyn, pack(x), nll_loss(cnf, prior), cnf.depth, tol).loss;
}

}  // namespace depthflow
