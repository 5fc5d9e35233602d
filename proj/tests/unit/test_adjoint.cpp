#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "depthflow/adjoint.hpp"
#include "depthflow/errors.hpp"
#include "depthflow/models.hpp"
#include "oracle.hpp"

using namespace depthflow;

namespace {

const Tolerance kTight{1e-10, 1e-10};

// f(s, z) built from closures; used for hand-solvable problems.
class ClosureDynamics : public Dynamics {
 public:
  using EvalFn = std::function<void(double, const ParamVector&, const Eigen::VectorXd&,
                                    Eigen::VectorXd&)>;
  using VjpFn = std::function<void(double, const ParamVector&, const Eigen::VectorXd&,
                                   const Eigen::VectorXd&, Eigen::VectorXd&,
                                   Eigen::VectorXd&)>;
  ClosureDynamics(Index n, DepthParametrization p, EvalFn e, VjpFn v)
      : n_(n), param_(std::move(p)), eval_(std::move(e)), vjp_(std::move(v)) {}
  Index state_size() const override { return n_; }
  const DepthParametrization& parametrization() const override { return param_; }
  void eval(double s, const ParamVector& th, const Eigen::VectorXd& z,
            Eigen::VectorXd& dz) const override {
    eval_(s, th, z, dz);
  }
  void vjp(double s, const ParamVector& th, const Eigen::VectorXd& z,
           const Eigen::VectorXd& a, Eigen::VectorXd& gz,
           Eigen::VectorXd& gt) const override {
    vjp_(s, th, z, a, gz, gt);
  }
  DepthParametrization& param() { return param_; }

 private:
  Index n_;
  DepthParametrization param_;
  EvalFn eval_;
  VjpFn vjp_;
};

// dz/ds = theta (scalar).
ClosureDynamics drift(DepthParametrization p) {
  return ClosureDynamics(
      1, std::move(p),
      [](double, const ParamVector& th, const Eigen::VectorXd&, Eigen::VectorXd& dz) {
        dz = Eigen::VectorXd::Constant(1, th[0]);
      },
      [](double, const ParamVector&, const Eigen::VectorXd&, const Eigen::VectorXd& a,
         Eigen::VectorXd& gz, Eigen::VectorXd& gt) {
        gz = Eigen::VectorXd::Zero(1);
        gt = a;
      });
}

// dz/ds = theta * z (scalar).
ClosureDynamics growth(DepthParametrization p) {
  return ClosureDynamics(
      1, std::move(p),
      [](double, const ParamVector& th, const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
        dz = th[0] * z;
      },
      [](double, const ParamVector& th, const Eigen::VectorXd& z,
         const Eigen::VectorXd& a, Eigen::VectorXd& gz, Eigen::VectorXd& gt) {
        gz = th[0] * a;
        gt = Eigen::VectorXd::Constant(1, a.dot(z));
      });
}

LossSpec running_square() {
  LossSpec l;
  l.running = [](double, const Eigen::VectorXd& z, const ParamVector&,
                 Eigen::VectorXd* gz, Eigen::VectorXd*) {
    if (gz != nullptr) *gz = 2.0 * z;
    return z.squaredNorm();
  };
  return l;
}

LossSpec terminal_sum() {
  LossSpec l;
  l.terminal = [](const Eigen::VectorXd& z, const ParamVector&, Eigen::VectorXd* gz,
                  Eigen::VectorXd*) {
    if (gz != nullptr) *gz = Eigen::VectorXd::Ones(z.size());
    return z.sum();
  };
  return l;
}

LossSpec terminal_mse(Eigen::VectorXd target) {
  LossSpec l;
  l.terminal = [target](const Eigen::VectorXd& z, const ParamVector&,
                        Eigen::VectorXd* gz, Eigen::VectorXd*) {
    const Eigen::VectorXd r = z - target;
    if (gz != nullptr) *gz = (2.0 / r.size()) * r;
    return r.squaredNorm() / r.size();
  };
  return l;
}

// A loss with explicit theta dependence in both terms.
LossSpec theta_loss() {
  LossSpec l;
  l.theta_dependent = true;
  l.terminal = [](const Eigen::VectorXd& z, const ParamVector& th, Eigen::VectorXd* gz,
                  Eigen::VectorXd* gt) {
    if (gz != nullptr) *gz = 2.0 * z;
    if (gt != nullptr) *gt = 0.2 * th;
    return z.squaredNorm() + 0.1 * th.squaredNorm();
  };
  l.running = [](double s, const Eigen::VectorXd& z, const ParamVector& th,
                 Eigen::VectorXd* gz, Eigen::VectorXd* gt) {
    const double c = std::cos(s);
    if (gz != nullptr) *gz = 0.5 * c * th.head(z.size());
    if (gt != nullptr) {
      *gt = Eigen::VectorXd::Zero(th.size());
      gt->head(z.size()) = 0.5 * z * c;
    }
    return 0.5 * c * th.head(z.size()).dot(z);
  };
  return l;
}

// Finite-difference gradient of forward_loss in the native coefficients.
template <class MakeDyn>
Eigen::VectorXd fd_grad(const DepthParametrization& base, MakeDyn make,
                        const Eigen::VectorXd& z0, const LossSpec& loss, double depth) {
  const auto f = [&](const Eigen::VectorXd& coef) {
    DepthParametrization p = base;
    assign_flat(p, coef);
    auto dyn = make(p);
    return forward_loss(dyn, z0, loss, depth, kTight).loss;
  };
  return oracle::central_diff(f, flatten(base));
}

}  // namespace

TEST_CASE("forward_loss examples") {
  ClosureDynamics still = drift(make_constant(ParamVector::Zero(1)));
  CHECK(forward_loss(still, Eigen::VectorXd::Constant(1, 3.0), terminal_sum(), 1.0, kTight)
            .loss == 3.0);
  ClosureDynamics d = drift(make_constant(ParamVector::Ones(1)));
  const ForwardLoss f = forward_loss(d, Eigen::VectorXd::Zero(1), running_square(), 1.0, kTight);
  CHECK(std::abs(f.loss - 1.0 / 3.0) < 1e-9);
  CHECK(f.terminal == 0.0);
  CHECK(f.solution.terminal[0] == doctest::Approx(1.0));
}

TEST_CASE("generalized adjoint: zero loss gives exactly zero gradient") {
  ClosureDynamics d = growth(make_constant(ParamVector::Constant(1, 0.7)));
  const GradientReport r =
      generalized_adjoint_grad(d, Eigen::VectorXd::Ones(1), LossSpec{}, 1.0, kTight);
  CHECK(r.loss == 0.0);
  CHECK(r.grad.size() == 1);
  CHECK(r.grad[0] == 0.0);
}

TEST_CASE("generalized adjoint: hand-derived integral-loss gradient") {
  for (double theta : {1.0, 0.5, -2.0}) {
    ClosureDynamics d = drift(make_constant(ParamVector::Constant(1, theta)));
    const GradientReport r =
        generalized_adjoint_grad(d, Eigen::VectorXd::Zero(1), running_square(), 1.0, kTight);
    CHECK(std::abs(r.grad[0] - 2.0 * theta / 3.0) < 1e-6);
    CHECK(std::abs(r.loss - theta * theta / 3.0) < 1e-8);
    // a(0) = theta * (1 - 0^2)
    CHECK(std::abs(r.adjoint_initial[0] - theta) < 1e-6);
  }
}

TEST_CASE("generalized adjoint: random tanh field against finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    NodeModel m;
    m.input_dim = 2;
    m.field = FieldSpec::make(2, 2, {16}, Activation::Tanh);
    m.theta = make_constant(init_params(m.field, seed));
    m.output = LinearMap::identity(2);
    Eigen::MatrixXd x(2, 3);
    x << 0.3, -0.5, 0.9, 0.1, 0.4, -0.7;
    const Eigen::VectorXd z0 = Eigen::Map<const Eigen::VectorXd>(x.data(), 6);
    const LossSpec loss = terminal_mse(Eigen::VectorXd::LinSpaced(6, -1.0, 1.0));
    NodeDynamics dyn(m, x);
    const GradientReport r = generalized_adjoint_grad(dyn, z0, loss, 1.0, {1e-8, 1e-8});
    const auto f = [&](const Eigen::VectorXd& coef) {
      NodeModel mm = m;
      assign_flat(mm.theta, coef);
      NodeDynamics dd(mm, x);
      return forward_loss(dd, z0, loss, 1.0, kTight).loss;
    };
    CHECK(oracle::rel_err(r.grad, oracle::central_diff(f, flatten(m.theta))) < 1e-4);
  }
}

TEST_CASE("spectral adjoint: constant basis reduces to the constant adjoint") {
  const ParamVector th = ParamVector::Constant(1, 0.8);
  GalerkinTheta g;
  g.basis = BasisSet::polynomial(1, 1.0);
  g.alpha = RowMatrix::Constant(1, 1, 0.8);
  ClosureDynamics dc = growth(make_constant(th));
  ClosureDynamics dg = growth(DepthParametrization(g));
  const LossSpec loss = combine(running_square(), terminal_sum());
  const Eigen::VectorXd z0 = Eigen::VectorXd::Constant(1, 0.5);
  const GradientReport rc = generalized_adjoint_grad(dc, z0, loss, 1.0, kTight);
  const GradientReport rg = spectral_adjoint_grad(dg, z0, loss, 1.0, kTight);
  CHECK(std::abs(rc.grad[0] - rg.grad[0]) < 1e-8);
  CHECK_THROWS_AS(spectral_adjoint_grad(dc, z0, loss, 1.0, kTight), DomainError);

  ClosureDynamics zero = growth(make_galerkin(BasisSet::fourier(1), th, 0.3, 1));
  CHECK(spectral_adjoint_grad(zero, z0, LossSpec{}, 1.0, kTight).grad.isZero(0.0));
}

TEST_CASE("spectral adjoint: fourier drift problem against finite differences") {
  const DepthParametrization base =
      make_galerkin(BasisSet::fourier(1, 1.0), ParamVector::Constant(1, 0.6), 0.5, 4);
  const GradientReport r = spectral_adjoint_grad(drift(base), Eigen::VectorXd::Zero(1),
                                                 running_square(), 1.0, kTight);
  CHECK(r.blocks == 3);
  const Eigen::VectorXd fd =
      fd_grad(base, drift, Eigen::VectorXd::Zero(1), running_square(), 1.0);
  CHECK(oracle::rel_err(r.grad, fd) < 1e-4);
}

TEST_CASE("stacked adjoint: reductions and block decomposition") {
  const ParamVector th = ParamVector::Constant(1, -0.4);
  const LossSpec loss = combine(running_square(), terminal_sum());
  const Eigen::VectorXd z0 = Eigen::VectorXd::Constant(1, 1.2);
  const GradientReport rc =
      generalized_adjoint_grad(growth(make_constant(th)), z0, loss, 1.0, kTight);
  const GradientReport r1 =
      stacked_adjoint_grad(growth(make_stacked(1, 1.0, th)), z0, loss, 1.0, kTight);
  CHECK(std::abs(rc.grad[0] - r1.grad[0]) < 1e-10);

  const GradientReport r2 =
      stacked_adjoint_grad(growth(make_stacked(2, 1.0, th)), z0, loss, 1.0, kTight);
  CHECK(r2.blocks == 2);
  CHECK(std::abs(r2.grad.sum() - rc.grad[0]) < 1e-6);

  StackedTheta st;
  st.grid = {0.0, 0.35, 1.0};
  st.thetas = {ParamVector::Constant(1, 0.9), ParamVector::Constant(1, -1.3)};
  const DepthParametrization sp = st;
  const GradientReport rs = stacked_adjoint_grad(growth(sp), z0, loss, 1.0, kTight);
  CHECK(oracle::rel_err(rs.grad, fd_grad(sp, growth, z0, loss, 1.0)) < 1e-4);
}

TEST_CASE("theta-dependent losses against finite differences") {
  for (int variant = 0; variant < 3; ++variant) {
    DepthParametrization p;
    const ParamVector th = ParamVector::Constant(1, 0.3);
    if (variant == 0) p = make_constant(th);
    if (variant == 1) p = make_galerkin(BasisSet::fourier(1), th, 0.4, 2);
    if (variant == 2) p = make_stacked(3, 1.0, th);
    const Eigen::VectorXd z0 = Eigen::VectorXd::Constant(1, 0.7);
    const GradientReport r = adjoint_grad(growth(p), z0, theta_loss(), 1.0, kTight);
    CHECK(oracle::rel_err(r.grad, fd_grad(p, growth, z0, theta_loss(), 1.0)) < 1e-4);
  }
}

TEST_CASE("gradients are linear in the loss") {
  const DepthParametrization p =
      make_galerkin(BasisSet::fourier(1), ParamVector::Constant(1, 0.5), 0.2, 8);
  const Eigen::VectorXd z0 = Eigen::VectorXd::Constant(1, 0.4);
  const LossSpec loss = combine(running_square(), terminal_sum());
  const GradientReport base = adjoint_grad(growth(p), z0, loss, 1.0, kTight);
  for (double c : {2.0, -1.0}) {
    const GradientReport r = adjoint_grad(growth(p), z0, scale(loss, c), 1.0, kTight);
    CHECK((r.grad - c * base.grad).norm() < 1e-9);
    CHECK(std::abs(r.loss - c * base.loss) < 1e-9);
  }
}

TEST_CASE("depth-bound gradient") {
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  CHECK(depth_bound_grad(drift(make_constant(ParamVector::Zero(1))), one, LossSpec{}, 1.0,
                         kTight) == 0.0);
  const double e = depth_bound_grad(growth(make_constant(ParamVector::Ones(1))), one,
                                    terminal_sum(), 1.0, kTight);
  CHECK(std::abs(e - std::numbers::e) < 1e-6);
  const double four = depth_bound_grad(drift(make_constant(ParamVector::Zero(1))),
                                       Eigen::VectorXd::Constant(1, 2.0), running_square(),
                                       1.0, kTight);
  CHECK(four == doctest::Approx(4.0));
  // Against finite differences in S.
  const LossSpec loss = combine(running_square(), terminal_sum());
  ClosureDynamics g = growth(make_constant(ParamVector::Constant(1, -0.7)));
  const auto f = [&](const Eigen::VectorXd& s) {
    return forward_loss(g, one, loss, s[0], kTight).loss;
  };
  const double fd = oracle::central_diff(f, Eigen::VectorXd::Constant(1, 1.3))[0];
  CHECK(std::abs(depth_bound_grad(g, one, loss, 1.3, kTight) - fd) < 1e-6);
}

TEST_CASE("adaptive depth gradients") {
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.6);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);

  // Zero field and no running loss: dl/dS = 0, so grad_omega = 0.
  DepthHypernet net = DepthHypernet::make(1, 8, 5);
  const AdaptiveDepthGrad z = adaptive_depth_grad(
      drift(make_constant(ParamVector::Zero(1))), net, x, one, terminal_sum(), kTight);
  CHECK(z.grad_omega.isZero(0.0));

  // Fixed g: theta gradient is the fixed-span adjoint over [0, g(x)].
  ClosureDynamics g = growth(make_constant(ParamVector::Constant(1, 0.5)));
  const AdaptiveDepthGrad r = adaptive_depth_grad(g, net, x, one, terminal_sum(), kTight);
  const GradientReport fixed = generalized_adjoint_grad(g, one, terminal_sum(), r.depth, kTight);
  CHECK(std::abs(r.report.grad[0] - fixed.grad[0]) < 1e-8);

  // dz/ds = z, L = z(S): omega gradient against finite differences.
  ClosureDynamics unit = growth(make_constant(ParamVector::Ones(1)));
  const AdaptiveDepthGrad ru = adaptive_depth_grad(unit, net, x, one, terminal_sum(), kTight);
  const auto f = [&](const Eigen::VectorXd& w) {
    DepthHypernet n2 = net;
    n2.omega = w;
    return forward_loss(unit, one, terminal_sum(), eval_depth(n2, x), kTight).loss;
  };
  CHECK(oracle::rel_err(ru.grad_omega, oracle::central_diff(f, net.omega, 1e-7)) < 1e-4);

  DepthHypernet flat = DepthHypernet::zeros(1, 8);
  flat.omega[flat.omega.size() - 1] = -1.0;  // g(x) = |1 - 1| = 0
  CHECK_THROWS_AS(adaptive_depth_grad(unit, flat, x, one, terminal_sum(), kTight),
                  DomainError);
}
