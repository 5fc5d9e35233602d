#pragma once

// Depth-dependent parameters s -> theta(s): constant, spectral (Galerkin)
// expansions and piecewise-constant (stacked) segments.

#include <variant>
#include <vector>

#include <Eigen/Core>

#include "depthflow/mlp.hpp"

namespace depthflow {

enum class BasisKind { Fourier, Polynomial, Chebyshev };

BasisKind parse_basis_kind(std::string_view name);
std::string_view to_string(BasisKind k);

/// Truncated basis on [0, span]. A Fourier basis with H harmonics has
/// 2H + 1 functions: 1, sin(2 pi k s / S), cos(2 pi k s / S) for k = 1..H.
struct BasisSet {
  BasisKind kind = BasisKind::Fourier;
  Index size = 1;
  double span = 1.0;

  static BasisSet fourier(Index harmonics, double span = 1.0);
  static BasisSet polynomial(Index size, double span = 1.0);
  static BasisSet chebyshev(Index size, double span = 1.0);
};

/// (psi_1(s), ..., psi_m(s)); throws DomainError outside [0, span].
Eigen::VectorXd basis_eval(const BasisSet& basis, double s);
/// Evaluates at s wrapped into [0, span) (periodic extension).
Eigen::VectorXd basis_eval_periodic(const BasisSet& basis, double s);

struct ConstantTheta {
  ParamVector theta;
};

struct GalerkinTheta {
  BasisSet basis;
  /// m x n_theta; row j holds alpha_j.
  RowMatrix alpha;
  /// Evaluate outside [0, span] through the periodic extension.
  bool periodic = false;
};

struct StackedTheta {
  /// 0 = s_0 < s_1 < ... < s_p = S.
  std::vector<double> grid;
  std::vector<ParamVector> thetas;
};

using DepthParametrization =
    std::variant<ConstantTheta, GalerkinTheta, StackedTheta>;

DepthParametrization make_constant(ParamVector theta);
/// Galerkin expansion whose constant coefficient is `theta` and whose other
/// coefficients are `scale` times theta-shaped noise.
DepthParametrization make_galerkin(const BasisSet& basis, const ParamVector& theta,
                                   double noise_scale = 0.0,
                                   std::uint64_t seed = 0, bool periodic = false);
/// p equal segments over [0, depth], each starting from a copy of `theta`.
DepthParametrization make_stacked(Index segments, double depth,
                                  const ParamVector& theta);

/// Throws DomainError / ShapeError when invariants are violated.
void validate(const DepthParametrization& param);

Index theta_size(const DepthParametrization& param);
/// Number of n_theta-sized blocks in the native coefficient layout:
/// 1 (constant), m (Galerkin) or p (stacked).
Index block_count(const DepthParametrization& param);
Index coefficient_count(const DepthParametrization& param);

ParamVector eval_theta(const DepthParametrization& param, double s);

/// Unique i with s in [s_i, s_{i+1}); s = S maps to p - 1.
Index segment_index(const StackedTheta& param, double s);

/// Native coefficient vector (blocks concatenated).
Eigen::VectorXd flatten(const DepthParametrization& param);
void assign_flat(DepthParametrization& param, const Eigen::VectorXd& flat);

/// grad += (d theta(s) / d coefficients)^T g. For stacked parameters
/// `segment` selects the block; pass -1 to look it up from s.
void pullback_theta_grad(const DepthParametrization& param, double s,
                         const Eigen::VectorXd& g, Eigen::Ref<Eigen::VectorXd> grad,
                         Index segment = -1);

/// An interval over which theta is smooth. `segment` is the stacked block
/// index, or -1 for non-stacked parametrizations.
struct DepthPiece {
  double begin = 0.0;
  double end = 0.0;
  Index segment = -1;
};

/// Splits [0, depth] at the parametrization's discontinuities.
std::vector<DepthPiece> depth_pieces(const DepthParametrization& param,
                                     double depth);

/// theta for a given piece; for stacked pieces this ignores s.
ParamVector eval_theta(const DepthParametrization& param, double s,
                       const DepthPiece& piece);

}  // namespace depthflow
