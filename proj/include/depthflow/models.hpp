#pragma once

// Neural ODE models: input map h_x, wired vector field, linear output map h_y
// and an optional per-input integration depth.

#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "depthflow/adjoint.hpp"
#include "depthflow/depth_param.hpp"
#include "depthflow/hypernet.hpp"
#include "depthflow/mlp.hpp"
#include "depthflow/ode.hpp"

namespace depthflow {

/// y = W x + b.
struct LinearMap {
  RowMatrix weight;  // out x in
  Eigen::VectorXd bias;
  bool trainable = true;

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }
  /// Entries exposed to the optimizer (0 when frozen).
  Index param_count() const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;

  static LinearMap identity(Index n, bool trainable = false);
  /// Same initialization rule as the field networks.
  static LinearMap random(Index in, Index out, std::uint64_t seed,
                          bool trainable = true);
  /// [I; 0] (out >= in): reproduces zero augmentation.
  static LinearMap padded_identity(Index in, Index out, bool trainable = true);
};

enum class AugmentKind {
  None,
  Zero,                  // x -> [x, 0]
  InputLayer,            // x -> W x + b
  InputLayerPreserving,  // x -> [x, xi(x)]
  HigherOrder,           // positions from x (or the input layer), rest zero
  SelectiveHigherOrder,  // second order on the first n_a / 2 coordinates
};

AugmentKind parse_augment_kind(std::string_view name);
std::string_view to_string(AugmentKind k);

struct Augmentation {
  AugmentKind kind = AugmentKind::None;
  /// Appended zeros (Zero, HigherOrder positions), width of xi
  /// (InputLayerPreserving), or n_a (SelectiveHigherOrder).
  Index extra = 0;
  Index order = 1;
  /// InputLayer: n_x -> n_z. InputLayerPreserving: n_x -> extra. Higher
  /// order kinds: optional map to the positions / base state.
  std::optional<LinearMap> input_layer;
};

struct NodeModel {
  Index input_dim = 1;
  Augmentation augmentation;
  FieldSpec field;
  DepthParametrization theta;
  LinearMap output;
  double depth = 1.0;
  /// When set, each input is integrated over [0, g(x)] instead of [0, depth].
  std::optional<DepthHypernet> hypernet;

  Index state_dim() const;
  Index output_dim() const { return output.out_dim(); }
  /// Output size the field network must have for this augmentation.
  Index field_output_dim() const;
  /// Throws ShapeError when the pieces do not chain.
  void validate() const;
};

/// Columns of x are samples; returns z(0) column-wise.
Eigen::MatrixXd apply_hx(const NodeModel& model, const Eigen::MatrixXd& x);
Eigen::VectorXd apply_hx(const NodeModel& model, const Eigen::VectorXd& x);

/// dz/ds = F(s, z) for a batch of states (n_z x B) controlled by x (n_x x B).
void wired_field(const NodeModel& model, double s, const ParamVector& theta,
                 const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                 Eigen::MatrixXd& dz);

/// The model's vector field for a single input, theta(s) included.
FieldFn wrap_field(const NodeModel& model, const Eigen::VectorXd& x);

/// The batch as one ODE system; each sample owns a contiguous block of n_z
/// entries.
class NodeDynamics : public Dynamics {
 public:
  NodeDynamics(const NodeModel& model, Eigen::MatrixXd x);

  Index state_size() const override { return n_z_ * batch_; }
  Index batch_size() const override { return batch_; }
  const DepthParametrization& parametrization() const override {
    return model_.theta;
  }
  void eval(double s, const ParamVector& theta, const Eigen::VectorXd& z,
            Eigen::VectorXd& dz) const override;
  void vjp(double s, const ParamVector& theta, const Eigen::VectorXd& z,
           const Eigen::VectorXd& a, Eigen::VectorXd& grad_z,
           Eigen::VectorXd& grad_theta) const override;

  const Eigen::MatrixXd& inputs() const { return x_; }

 private:
  const NodeModel& model_;
  Eigen::MatrixXd x_;
  Index n_z_;
  Index batch_;
};

/// Integration depth for one input (g(x) for adaptive models).
double sample_depth(const NodeModel& model, const Eigen::VectorXd& x);

struct NodeForward {
  Eigen::MatrixXd output;    // n_y x B
  Eigen::MatrixXd terminal;  // n_z x B
  std::vector<double> depths;
  long nfe = 0;
  /// One joint solution, or one per sample for adaptive-depth models.
  std::vector<Solution> solutions;
};

NodeForward node_forward(const NodeModel& model, const Eigen::MatrixXd& x,
                         const Tolerance& tol, bool record = false);

/// Trajectory of one input over its integration span.
Solution node_trajectory(const NodeModel& model, const Eigen::VectorXd& x,
                         const Tolerance& tol);

/// Trainable parameters flattened as [h_x, theta coefficients, h_y, omega].
Index model_param_count(const NodeModel& model);
Eigen::VectorXd get_params(const NodeModel& model);
void set_params(NodeModel& model, const Eigen::VectorXd& flat);

/// Offsets of each parameter group inside the flat vector.
struct ParamGroups {
  Index input = 0, theta = 0, output = 0, omega = 0, total = 0;
};
ParamGroups param_groups(const NodeModel& model);

/// Adds d loss / d(h_x params) given a(0) (n_z x B) to grad_input.
void hx_vjp(const NodeModel& model, const Eigen::MatrixXd& x,
            const Eigen::MatrixXd& a0, Eigen::Ref<Eigen::VectorXd> grad_input);

}  // namespace depthflow
