#include <doctest.h>

#include <cmath>
#include <numbers>

#include "depthflow/cnf.hpp"
#include "depthflow/errors.hpp"
#include "oracle.hpp"

using namespace depthflow;

namespace {

const Tolerance kTight{1e-10, 1e-10};

double normal_logpdf(double x, double mu, double sd) {
  const double r = (x - mu) / sd;
  return -0.5 * r * r - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

Cnf1d linear_cnf(double a, double b, double c) {
  Cnf1d cnf;
  cnf.field = FieldSpec::make(1, 1, {}, Activation::Identity, Activation::Identity,
                              InputMode::DataControlled, 1);
  ParamVector p(3);
  p << a, b, c;
  cnf.theta = make_constant(p);
  cnf.priors = {{-1.0, 0.5}, {2.0, 0.8}};
  return cnf;
}

}  // namespace

TEST_CASE("gaussian log density") {
  const Gaussian1d g{1.0, 2.0};
  CHECK(g.log_density(0.3) == doctest::Approx(normal_logpdf(0.3, 1.0, 2.0)));
}

TEST_CASE("zero field gives the prior density") {
  const Cnf1d cnf = linear_cnf(0.0, 0.0, 0.0);
  for (double x : {-2.0, 0.0, 0.7}) {
    CHECK(cnf_logprob(cnf, x, 0, kTight) == doctest::Approx(normal_logpdf(x, -1.0, 0.5)));
    CHECK(cnf_logprob(cnf, x, 1, kTight) == doctest::Approx(normal_logpdf(x, 2.0, 0.8)));
  }
}

TEST_CASE("linear field f = z has unit log-determinant") {
  const Cnf1d cnf = linear_cnf(1.0, 0.0, 0.0);
  for (double x : {-1.5, 0.2, 1.0}) {
    const double expect = normal_logpdf(x * std::numbers::e, -1.0, 0.5) + 1.0;
    CHECK(cnf_logprob(cnf, x, 0, kTight) == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("flow density integrates to one") {
  Cnf1d cnf = Cnf1d::make({16, 16}, Activation::Tanh, {{-1.0, 0.5}, {2.0, 0.8}}, 5);
  const Index n = 4001;
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(n, -12.0, 12.0);
  const double h = grid[1] - grid[0];
  for (Index prior : {0, 1}) {
    const Eigen::VectorXd lp = cnf_logprob(cnf, grid, prior, {1e-9, 1e-9});
    const Eigen::VectorXd p = lp.array().exp();
    const double mass = h * (p.sum() - 0.5 * (p[0] + p[n - 1]));
    CHECK(std::abs(mass - 1.0) < 1e-3);
  }
}

TEST_CASE("sampling is deterministic and follows the prior for a zero field") {
  const Cnf1d cnf = linear_cnf(0.0, 0.0, 0.0);
  const Eigen::VectorXd a = cnf_sample(cnf, 1, 4000, 9, kTight);
  const Eigen::VectorXd b = cnf_sample(cnf, 1, 4000, 9, kTight);
  CHECK(a == b);
  const double mean = a.mean();
  CHECK(std::abs(mean - 2.0) < 4.0 * 0.8 / std::sqrt(4000.0));
  const double sd = std::sqrt((a.array() - mean).square().mean());
  CHECK(std::abs(sd - 0.8) < 0.05);
}

TEST_CASE("sampling inverts the forward map") {
  const Cnf1d cnf = Cnf1d::make({8}, Activation::Tanh, {{-1.0, 0.5}, {2.0, 0.8}}, 3);
  const Eigen::VectorXd x = cnf_sample(cnf, 0, 5, 4, kTight);
  // Density of the pushforward sample is finite and the backward map
  // recovers a prior sample distribution shape.
  for (Index i = 0; i < x.size(); ++i) CHECK(std::isfinite(cnf_logprob(cnf, x[i], 0, kTight)));
}

TEST_CASE("nll gradient matches finite differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Cnf1d cnf = Cnf1d::make({6}, Activation::Tanh, {{-1.0, 0.5}, {2.0, 0.8}}, seed);
    Eigen::VectorXd x(4);
    x << -0.7, 0.1, 1.9, 2.4;
    const std::vector<Index> prior = {0, 0, 1, 1};
    const CnfGrad g = cnf_nll_grad(cnf, x, prior, {1e-9, 1e-9});
    const auto f = [&](const Eigen::VectorXd& p) {
      Cnf1d c = cnf;
      assign_flat(c.theta, p);
      return cnf_nll(c, x, prior, kTight);
    };
    const Eigen::VectorXd fd = oracle::central_diff(f, flatten(cnf.theta));
    CHECK(oracle::rel_err(g.grad, fd) < 1e-5);
    CHECK(g.nll == doctest::Approx(f(flatten(cnf.theta))).epsilon(1e-7));
  }
}

TEST_CASE("cnf argument checks") {
  const Cnf1d cnf = linear_cnf(0.0, 0.0, 0.0);
  CHECK_THROWS_AS(cnf_logprob(cnf, 0.0, 5, kTight), DomainError);
  CHECK_THROWS_AS(cnf_nll(cnf, Eigen::VectorXd::Zero(2), {0}, kTight), ShapeError);
}
