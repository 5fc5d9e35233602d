#include "depthflow/depth_param.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <fmt/format.h>

#include "depthflow/errors.hpp"

namespace depthflow {

namespace {

// Slack for depths produced by floating-point stepping right at the boundary.
constexpr double kDomainSlack = 1e-10;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double clamp_to_span(double s, double span, const char* what) {
  const double slack = kDomainSlack * std::max(1.0, std::abs(span));
  if (!(s >= -slack && s <= span + slack)) {
    throw DomainError(fmt::format("{}: depth {} outside [0, {}]", what, s, span));
  }
  return std::clamp(s, 0.0, span);
}

double galerkin_span(const GalerkinTheta& g) { return g.basis.span; }

Eigen::VectorXd galerkin_basis(const GalerkinTheta& g, double s) {
  return g.periodic ? basis_eval_periodic(g.basis, s) : basis_eval(g.basis, s);
}

}  // namespace

BasisKind parse_basis_kind(std::string_view name) {
  if (name == "fourier") return BasisKind::Fourier;
  if (name == "polynomial") return BasisKind::Polynomial;
  if (name == "chebyshev") return BasisKind::Chebyshev;
  throw DomainError("unknown basis '" + std::string(name) + "'");
}

std::string_view to_string(BasisKind k) {
  switch (k) {
    case BasisKind::Fourier: return "fourier";
    case BasisKind::Polynomial: return "polynomial";
    case BasisKind::Chebyshev: return "chebyshev";
  }
  return "fourier";
}

BasisSet BasisSet::fourier(Index harmonics, double span) {
  if (harmonics < 0) throw DomainError("fourier basis: negative harmonics");
  return {BasisKind::Fourier, 2 * harmonics + 1, span};
}

BasisSet BasisSet::polynomial(Index size, double span) {
  return {BasisKind::Polynomial, size, span};
}

BasisSet BasisSet::chebyshev(Index size, double span) {
  return {BasisKind::Chebyshev, size, span};
}

Eigen::VectorXd basis_eval(const BasisSet& basis, double s) {
  if (basis.size < 1) throw DomainError("basis: size must be at least 1");
  if (!(basis.span > 0.0)) throw DomainError("basis: span must be positive");
  s = clamp_to_span(s, basis.span, "basis_eval");
  Eigen::VectorXd psi(basis.size);
  switch (basis.kind) {
    case BasisKind::Fourier: {
      if (basis.size % 2 == 0) {
        throw DomainError("fourier basis: size must be odd (2H + 1)");
      }
      psi[0] = 1.0;
      const double w = 2.0 * std::numbers::pi / basis.span;
      for (Index k = 1; 2 * k < basis.size; ++k) {
        psi[2 * k - 1] = std::sin(w * static_cast<double>(k) * s);
        psi[2 * k] = std::cos(w * static_cast<double>(k) * s);
      }
      break;
    }
    case BasisKind::Polynomial: {
      double p = 1.0;
      for (Index k = 0; k < basis.size; ++k) {
        psi[k] = p;
        p *= s;
      }
      break;
    }
    case BasisKind::Chebyshev: {
      const double t = 2.0 * s / basis.span - 1.0;
      psi[0] = 1.0;
      if (basis.size > 1) psi[1] = t;
      for (Index k = 2; k < basis.size; ++k) {
        psi[k] = 2.0 * t * psi[k - 1] - psi[k - 2];
      }
      break;
    }
  }
  return psi;
}

Eigen::VectorXd basis_eval_periodic(const BasisSet& basis, double s) {
  double wrapped = std::fmod(s, basis.span);
  if (wrapped < 0.0) wrapped += basis.span;
  return basis_eval(basis, wrapped);
}

DepthParametrization make_constant(ParamVector theta) {
  return ConstantTheta{std::move(theta)};
}

DepthParametrization make_galerkin(const BasisSet& basis,
                                   const ParamVector& theta,
                                   double noise_scale, std::uint64_t seed,
                                   bool periodic) {
  GalerkinTheta g;
  g.basis = basis;
  g.periodic = periodic;
  g.alpha = RowMatrix::Zero(basis.size, theta.size());
  g.alpha.row(0) = theta.transpose();
  if (noise_scale != 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (Index j = 1; j < basis.size; ++j) {
      for (Index i = 0; i < theta.size(); ++i) {
        g.alpha(j, i) = noise_scale * dist(rng) *
                        std::max(std::abs(theta[i]), 1e-2);
      }
    }
  }
  return g;
}

DepthParametrization make_stacked(Index segments, double depth,
                                  const ParamVector& theta) {
  if (segments < 1) throw DomainError("stacked: need at least one segment");
  StackedTheta st;
  for (Index i = 0; i <= segments; ++i) {
    st.grid.push_back(depth * static_cast<double>(i) /
                      static_cast<double>(segments));
  }
  st.grid.back() = depth;
  st.thetas.assign(segments, theta);
  return st;
}

void validate(const DepthParametrization& param) {
  std::visit(
      overloaded{
          [](const ConstantTheta& c) {
            if (c.theta.size() == 0) throw ShapeError("constant theta is empty");
          },
          [](const GalerkinTheta& g) {
            if (g.alpha.rows() != g.basis.size) {
              throw ShapeError(fmt::format(
                  "galerkin: {} coefficient rows for {} basis functions",
                  g.alpha.rows(), g.basis.size));
            }
            if (!(g.basis.span > 0.0)) {
              throw DomainError("galerkin: basis span must be positive");
            }
            if (!g.alpha.allFinite()) {
              throw DomainError("galerkin: non-finite coefficients");
            }
          },
          [](const StackedTheta& st) {
            if (st.grid.size() < 2 || st.thetas.size() + 1 != st.grid.size()) {
              throw ShapeError("stacked: grid must have one more point than "
                               "there are segments");
            }
            if (st.grid.front() != 0.0) {
              throw DomainError("stacked: grid must start at 0");
            }
            for (std::size_t i = 1; i < st.grid.size(); ++i) {
              if (!(st.grid[i] > st.grid[i - 1])) {
                throw DomainError("stacked: grid must be strictly increasing");
              }
            }
            for (const auto& t : st.thetas) {
              if (t.size() != st.thetas.front().size()) {
                throw ShapeError("stacked: segment parameter sizes differ");
              }
            }
          },
      },
      param);
}

Index theta_size(const DepthParametrization& param) {
  return std::visit(
      overloaded{
          [](const ConstantTheta& c) { return c.theta.size(); },
          [](const GalerkinTheta& g) { return g.alpha.cols(); },
          [](const StackedTheta& st) { return st.thetas.front().size(); },
      },
      param);
}

Index block_count(const DepthParametrization& param) {
  return std::visit(
      overloaded{
          [](const ConstantTheta&) { return Index{1}; },
          [](const GalerkinTheta& g) { return g.alpha.rows(); },
          [](const StackedTheta& st) {
            return static_cast<Index>(st.thetas.size());
          },
      },
      param);
}

Index coefficient_count(const DepthParametrization& param) {
  return block_count(param) * theta_size(param);
}

Index segment_index(const StackedTheta& param, double s) {
  const double end = param.grid.back();
  s = clamp_to_span(s, end, "segment_index");
  const Index p = static_cast<Index>(param.thetas.size());
  if (s >= end) return p - 1;
  // Last grid point not greater than s.
  auto it = std::upper_bound(param.grid.begin(), param.grid.end(), s);
  return std::min<Index>(static_cast<Index>(it - param.grid.begin()) - 1, p - 1);
}

ParamVector eval_theta(const DepthParametrization& param, double s) {
  return std::visit(
      overloaded{
          [](const ConstantTheta& c) -> ParamVector { return c.theta; },
          [s](const GalerkinTheta& g) -> ParamVector {
            const Eigen::VectorXd psi = galerkin_basis(g, s);
            return g.alpha.transpose() * psi;
          },
          [s](const StackedTheta& st) -> ParamVector {
            return st.thetas[segment_index(st, s)];
          },
      },
      param);
}

ParamVector eval_theta(const DepthParametrization& param, double s,
                       const DepthPiece& piece) {
  if (const auto* st = std::get_if<StackedTheta>(&param);
      st != nullptr && piece.segment >= 0) {
    return st->thetas[piece.segment];
  }
  return eval_theta(param, s);
}

Eigen::VectorXd flatten(const DepthParametrization& param) {
  return std::visit(
      overloaded{
          [](const ConstantTheta& c) -> Eigen::VectorXd { return c.theta; },
          [](const GalerkinTheta& g) -> Eigen::VectorXd {
            return Eigen::Map<const Eigen::VectorXd>(g.alpha.data(),
                                                     g.alpha.size());
          },
          [](const StackedTheta& st) -> Eigen::VectorXd {
            const Index n = st.thetas.front().size();
            Eigen::VectorXd flat(n * static_cast<Index>(st.thetas.size()));
            for (std::size_t i = 0; i < st.thetas.size(); ++i) {
              flat.segment(static_cast<Index>(i) * n, n) = st.thetas[i];
            }
            return flat;
          },
      },
      param);
}

void assign_flat(DepthParametrization& param, const Eigen::VectorXd& flat) {
  if (flat.size() != coefficient_count(param)) {
    throw ShapeError(fmt::format("assign_flat: got {} coefficients, expected {}",
                                 flat.size(), coefficient_count(param)));
  }
  std::visit(
      overloaded{
          [&](ConstantTheta& c) { c.theta = flat; },
          [&](GalerkinTheta& g) {
            Eigen::Map<Eigen::VectorXd>(g.alpha.data(), g.alpha.size()) = flat;
          },
          [&](StackedTheta& st) {
            const Index n = st.thetas.front().size();
            for (std::size_t i = 0; i < st.thetas.size(); ++i) {
              st.thetas[i] = flat.segment(static_cast<Index>(i) * n, n);
            }
          },
      },
      param);
}

void pullback_theta_grad(const DepthParametrization& param, double s,
                         const Eigen::VectorXd& g,
                         Eigen::Ref<Eigen::VectorXd> grad, Index segment) {
  const Index n = theta_size(param);
  if (g.size() != n || grad.size() != coefficient_count(param)) {
    throw ShapeError("pullback_theta_grad: size mismatch");
  }
  std::visit(
      overloaded{
          [&](const ConstantTheta&) { grad += g; },
          [&](const GalerkinTheta& gal) {
            const Eigen::VectorXd psi = galerkin_basis(gal, s);
            for (Index j = 0; j < psi.size(); ++j) {
              grad.segment(j * n, n) += psi[j] * g;
            }
          },
          [&](const StackedTheta& st) {
            const Index i = segment >= 0 ? segment : segment_index(st, s);
            grad.segment(i * n, n) += g;
          },
      },
      param);
}

std::vector<DepthPiece> depth_pieces(const DepthParametrization& param,
                                     double depth) {
  if (!(depth > 0.0)) {
    throw DomainError(fmt::format("depth must be positive, got {}", depth));
  }
  if (const auto* st = std::get_if<StackedTheta>(&param)) {
    const double end = st->grid.back();
    if (depth > end * (1.0 + kDomainSlack)) {
      throw DomainError(fmt::format(
          "stacked parameters cover [0, {}], integration needs [0, {}]", end,
          depth));
    }
    std::vector<DepthPiece> pieces;
    for (std::size_t i = 0; i + 1 < st->grid.size(); ++i) {
      const double a = st->grid[i];
      if (a >= depth) break;
      const double b = std::min(st->grid[i + 1], depth);
      pieces.push_back({a, b, static_cast<Index>(i)});
    }
    pieces.back().end = depth;
    return pieces;
  }
  if (const auto* g = std::get_if<GalerkinTheta>(&param);
      g != nullptr && !g->periodic) {
    clamp_to_span(depth, galerkin_span(*g), "depth_pieces");
  }
  return {{0.0, depth, -1}};
}

}  // namespace depthflow
