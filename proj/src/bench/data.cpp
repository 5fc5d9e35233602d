#include "depthflow/bench/data.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "depthflow/errors.hpp"

namespace depthflow::bench {

namespace {

constexpr double kPi = std::numbers::pi;

Dataset annuli(Index n, std::uint64_t seed, const DataParams& p) {
  if (p.dim != 1 && p.dim != 2) throw DomainError("annuli: dim must be 1 or 2");
  if (!(p.radius > 0.0)) throw DomainError("annuli: radius must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset d;
  d.inputs.resize(p.dim, n);
  d.targets.resize(1, n);
  const double r = p.radius;
  const Index n_inner = n / 2;
  for (Index k = 0; k < n; ++k) {
    const bool inner = k < n_inner;
    const double lo = inner ? 0.0 : 1.5 * r;
    const double hi = inner ? 0.5 * r : 3.0 * r;
    if (p.dim == 1) {
      const double rad = lo + (hi - lo) * u(rng);
      d.inputs(0, k) = u(rng) < 0.5 ? -rad : rad;
    } else {
      // uniform in area
      const double rad = std::sqrt(lo * lo + (hi * hi - lo * lo) * u(rng));
      const double phi = 2.0 * kPi * u(rng);
      d.inputs(0, k) = rad * std::cos(phi);
      d.inputs(1, k) = rad * std::sin(phi);
    }
    d.targets(0, k) = annuli_label(d.inputs.col(k), r);
  }
  return d;
}

Dataset moons(Index n, std::uint64_t seed, const DataParams& p) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset d;
  d.inputs.resize(2, n);
  d.targets.resize(1, n);
  const Index n_out = n / 2;
  const Index n_in = n - n_out;
  for (Index k = 0; k < n; ++k) {
    const bool outer = k < n_out;
    const Index i = outer ? k : k - n_out;
    const Index m = outer ? n_out : n_in;
    const double t = m > 1 ? kPi * static_cast<double>(i) / static_cast<double>(m - 1) : 0.0;
    double x = outer ? std::cos(t) : 1.0 - std::cos(t);
    double y = outer ? std::sin(t) : 0.5 - std::sin(t);
    d.inputs(0, k) = x + p.noise * g(rng);
    d.inputs(1, k) = y + p.noise * g(rng);
    d.targets(0, k) = outer ? -1.0 : 1.0;
  }
  return d;
}

Dataset spirals(Index n, std::uint64_t seed, const DataParams& p) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset d;
  d.inputs.resize(2, n);
  d.targets.resize(1, n);
  const Index half = n / 2;
  for (Index k = 0; k < n; ++k) {
    const bool first = k < half;
    const Index i = first ? k : k - half;
    const Index m = first ? half : n - half;
    const double t = 0.25 + 0.75 * (m > 1 ? static_cast<double>(i) / static_cast<double>(m - 1) : 0.0);
    const double phi = 3.0 * kPi * t + (first ? 0.0 : kPi);
    d.inputs(0, k) = 2.0 * t * std::cos(phi) + p.noise * g(rng);
    d.inputs(1, k) = 2.0 * t * std::sin(phi) + p.noise * g(rng);
    d.targets(0, k) = first ? -1.0 : 1.0;
  }
  return d;
}

Dataset crossing(Index n) {
  Dataset d;
  d.inputs = Eigen::RowVectorXd::LinSpaced(n, -1.0, 1.0);
  d.targets = -d.inputs;
  return d;
}

Dataset tracking(Index n, std::uint64_t seed, const DataParams& p) {
  if (p.initial_conditions < 1) throw DomainError("tracking: need at least one start");
  Dataset d;
  d.grid.resize(static_cast<std::size_t>(n));
  d.signal.resize(2, n);
  for (Index i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(n - 1);
    d.grid[static_cast<std::size_t>(i)] = s;
    d.signal.col(i) = tracking_signal(s);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  d.inputs.resize(2, p.initial_conditions);
  d.inputs.col(0) = tracking_signal(0.0);
  for (Index k = 1; k < p.initial_conditions; ++k) {
    d.inputs(0, k) = d.inputs(0, 0) + p.spread * g(rng);
    d.inputs(1, k) = d.inputs(1, 0) + p.spread * g(rng);
  }
  d.targets.resize(0, p.initial_conditions);
  return d;
}

Dataset cnf_conditional(Index n, std::uint64_t seed, const DataParams& p) {
  if (!(p.sigma > 0.0)) throw DomainError("cnf-conditional: sigma must be positive");
  const CnfPairing pair = cnf_pairing();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset d;
  d.inputs.resize(1, n);
  d.targets.resize(1, n);
  for (Index k = 0; k < n; ++k) {
    const int prior = k % 2;
    d.inputs(0, k) = pair.data_mean[prior] + p.sigma * g(rng);
    d.targets(0, k) = prior;
  }
  return d;
}

}  // namespace

const std::vector<std::string>& dataset_names() {
  static const std::vector<std::string> names = {"annuli",   "moons",    "spirals",
                                                 "crossing", "tracking", "cnf-conditional"};
  return names;
}

double annuli_label(const Eigen::VectorXd& x, double radius) {
  return x.norm() < radius ? -1.0 : 1.0;
}

Eigen::VectorXd tracking_signal(double s) {
  Eigen::VectorXd b(2);
  b << std::sin(2.0 * kPi * s), std::cos(2.0 * kPi * s);
  return b;
}

CnfPairing cnf_pairing() {
  // Each prior is the other class's data distribution, so conditioned
  // samples must cross.
  return {{-1.0, 1.0}, {1.0, -1.0}};
}

Dataset make_dataset(const std::string& name, Index n, std::uint64_t seed,
                     const DataParams& params) {
  if (n < 2) throw DomainError(fmt::format("dataset '{}' needs n >= 2, got {}", name, n));
  Dataset d;
  if (name == "annuli") {
    d = annuli(n, seed, params);
  } else if (name == "moons") {
    d = moons(n, seed, params);
  } else if (name == "spirals") {
    d = spirals(n, seed, params);
  } else if (name == "crossing") {
    d = crossing(n);
  } else if (name == "tracking") {
    d = tracking(n, seed, params);
  } else if (name == "cnf-conditional") {
    d = cnf_conditional(n, seed, params);
  } else {
    throw DomainError("unknown dataset '" + name + "'");
  }
  d.name = name;
  return d;
}

}  // namespace depthflow::bench
