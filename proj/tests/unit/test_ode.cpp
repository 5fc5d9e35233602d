#include <doctest.h>

#include <cmath>
#include <numbers>

#include "depthflow/errors.hpp"
#include "depthflow/ode.hpp"

using namespace depthflow;

namespace {

IvpProblem exp_problem(double tol = 1e-8) {
  IvpProblem p;
  p.field = [](double, const Eigen::VectorXd& z, Eigen::VectorXd& dz) { dz = z; };
  p.z0 = Eigen::VectorXd::Ones(1);
  p.s_start = 0.0;
  p.s_end = 1.0;
  p.rtol = p.atol = tol;
  return p;
}

IvpProblem zero_problem() {
  IvpProblem p;
  p.field = [](double, const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
    dz = Eigen::VectorXd::Zero(z.size());
  };
  p.z0 = Eigen::Vector2d(1.0, 2.0);
  return p;
}

}  // namespace

TEST_CASE("rk4: constant solution and nfe") {
  for (long n : {1L, 7L, 30L}) {
    const Solution s = rk4_integrate(zero_problem(), n);
    CHECK(s.terminal == Eigen::Vector2d(1.0, 2.0));
    CHECK(s.nfe == 4 * n);
    CHECK(s.grid.front() == 0.0);
    CHECK(s.grid.back() == 1.0);
  }
}

TEST_CASE("rk4: exponential and the closed-form linear control system") {
  CHECK(std::abs(rk4_integrate(exp_problem(), 100).terminal[0] - std::numbers::e) < 1e-8);

  const double theta = std::log(4.0);
  const double x = 1.0;
  IvpProblem p;
  p.field = [&](double, const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
    dz = -theta * (z.array() + x).matrix();
  };
  p.z0 = Eigen::VectorXd::Constant(1, x);
  const double exact = x * (2.0 * std::exp(-theta) - 1.0);
  CHECK(exact == doctest::Approx(-0.5));
  CHECK(std::abs(rk4_integrate(p, 100).terminal[0] - exact) < 1e-8);
}

TEST_CASE("rk4: observed convergence order") {
  double err[3];
  const long steps[3] = {25, 50, 100};
  for (int i = 0; i < 3; ++i) {
    err[i] = std::abs(rk4_integrate(exp_problem(), steps[i]).terminal[0] - std::numbers::e);
  }
  CHECK(std::log2(err[0] / err[1]) >= 3.7);
  CHECK(std::log2(err[1] / err[2]) >= 3.7);
}

TEST_CASE("rk4: divergence reports the failing depth") {
  IvpProblem p;
  p.field = [](double, const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
    dz = z.array().square().matrix() * 1e200;
  };
  p.z0 = Eigen::VectorXd::Constant(1, 1e200);
  try {
    rk4_integrate(p, 10);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.depth() > 0.0);
    CHECK(e.depth() <= 1.0);
  }
}

TEST_CASE("dopri5: zero field keeps the state without rejections") {
  const Solution s = dopri5_integrate(zero_problem());
  CHECK(s.terminal == Eigen::Vector2d(1.0, 2.0));
  CHECK(s.rejected == 0);
  CHECK(s.grid.back() == 1.0);
}

TEST_CASE("dopri5: exponential at tight tolerance") {
  const Solution s = dopri5_integrate(exp_problem(1e-8));
  CHECK(std::abs(s.terminal[0] - std::numbers::e) < 1e-6);
  CHECK(s.grid.back() == 1.0);
}

TEST_CASE("dopri5: cosine over a full period") {
  IvpProblem p;
  p.field = [](double s, const Eigen::VectorXd&, Eigen::VectorXd& dz) {
    dz = Eigen::VectorXd::Constant(1, std::cos(2.0 * std::numbers::pi * s));
  };
  p.z0 = Eigen::VectorXd::Zero(1);
  CHECK(std::abs(dopri5_integrate(p).terminal[0]) < 1e-6);
}

TEST_CASE("dopri5: nfe equals the number of field callbacks") {
  long calls = 0;
  IvpProblem p = exp_problem(1e-7);
  const FieldFn inner = p.field;
  p.field = [&](double s, const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
    ++calls;
    inner(s, z, dz);
  };
  const Solution s = dopri5_integrate(p);
  CHECK(s.nfe == calls);
  CHECK(s.nfe > 0);
}

TEST_CASE("dopri5: tightening tolerances does not increase the error") {
  double prev = 1.0;
  for (double tol : {1e-4, 5e-5, 2.5e-5, 1e-6, 1e-8}) {
    const double e = std::abs(dopri5_integrate(exp_problem(tol)).terminal[0] - std::numbers::e);
    CHECK(e <= prev);
    prev = e;
  }
}

TEST_CASE("dopri5: semigroup and reversibility") {
  IvpProblem p;
  p.field = [](double, const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
    dz.resize(2);
    dz[0] = std::sin(z[1]) - 0.3 * z[0];
    dz[1] = std::tanh(z[0]) + 0.1;
  };
  p.z0 = Eigen::Vector2d(0.4, -0.9);
  const double tol = 1e-7;
  p.rtol = p.atol = tol;
  p.s_end = 1.3;
  const Eigen::VectorXd direct = dopri5_integrate(p).terminal;
  IvpProblem first = p;
  first.s_end = 0.6;
  IvpProblem second = p;
  second.z0 = dopri5_integrate(first).terminal;
  second.s_start = 0.6;
  const Eigen::VectorXd split = dopri5_integrate(second).terminal;
  CHECK((split - direct).norm() < 10.0 * (tol + tol * direct.norm()));

  IvpProblem back = p;
  back.z0 = direct;
  back.s_start = 1.3;
  back.s_end = 0.0;
  const Solution rs = dopri5_integrate(back);
  CHECK((rs.terminal - p.z0).norm() < 10.0 * (tol + tol * p.z0.norm()));
  CHECK(rs.grid.back() == 0.0);
  for (std::size_t i = 1; i < rs.grid.size(); ++i) CHECK(rs.grid[i] < rs.grid[i - 1]);
}

TEST_CASE("dopri5: 1-D autonomous flows preserve ordering") {
  IvpProblem p;
  p.field = [](double, const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
    dz = (2.0 * z.array().sin() - z.array().cube()).matrix();
  };
  double prev = -1e300;
  for (double x = -2.0; x <= 2.0; x += 0.1) {
    p.z0 = Eigen::VectorXd::Constant(1, x);
    const double y = dopri5_integrate(p).terminal[0];
    CHECK(y > prev);
    prev = y;
  }
}

TEST_CASE("dopri5: stiffness and divergence errors") {
  IvpProblem blow;
  blow.field = [](double, const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
    dz = z.array().square().matrix();
  };
  blow.z0 = Eigen::VectorXd::Constant(1, 1.0);
  blow.s_end = 2.0;  // finite-time blow-up at s = 1
  CHECK_THROWS_AS(dopri5_integrate(blow), Error);
  bool typed = false;
  try {
    dopri5_integrate(blow);
  } catch (const StiffnessError&) {
    typed = true;
  } catch (const DivergenceError&) {
    typed = true;
  }
  CHECK(typed);

  IvpProblem bad = exp_problem();
  bad.rtol = 0.0;
  CHECK_THROWS_AS(dopri5_integrate(bad), DomainError);
}

TEST_CASE("initial step") {
  CHECK(initial_step(zero_problem()) == doctest::Approx(0.01));
  const double h = initial_step(exp_problem());
  CHECK(h > 0.0);
  CHECK(h <= 1.0);
  CHECK(initial_step(exp_problem()) == h);
}
