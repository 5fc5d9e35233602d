#pragma once

// Dense feed-forward networks used as vector fields, with hand-written
// reverse-mode products. Batched entry points take one sample per column.

#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace depthflow {

using Index = Eigen::Index;
using ParamVector = Eigen::VectorXd;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { Tanh, Sigmoid, Relu, Softplus, Elu, Identity };

/// How the network input is assembled from the ODE state.
enum class InputMode {
  Autonomous,      // f(z)
  DepthConcat,     // f([z, s])
  DataControlled,  // f([z, x]) with x the raw model input
};

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);
InputMode parse_input_mode(std::string_view name);
std::string_view to_string(InputMode m);

struct FieldSpec {
  /// widths.front() is the network input size, widths.back() its output.
  std::vector<Index> widths;
  /// One activation per affine layer (widths.size() - 1 entries).
  std::vector<Activation> activations;
  InputMode input_mode = InputMode::Autonomous;
  /// Size of the control input x for data-controlled fields.
  Index data_dim = 0;

  Index input_dim() const { return widths.front(); }
  Index output_dim() const { return widths.back(); }
  Index num_layers() const { return static_cast<Index>(widths.size()) - 1; }
  /// Network input size minus the concatenated depth / control entries.
  Index state_dim() const;

  /// Throws ShapeError when the description is inconsistent.
  void validate() const;

  /// Builds a spec whose input is `state_dim` plus the entries implied by
  /// `mode`. The last layer uses `final_activation`, hidden ones `hidden_act`.
  static FieldSpec make(Index state_dim, Index output_dim,
                        const std::vector<Index>& hidden, Activation hidden_act,
                        Activation final_activation = Activation::Identity,
                        InputMode mode = InputMode::Autonomous,
                        Index data_dim = 0);
};

/// Placement of one affine layer inside the flat parameter vector. Weights
/// are stored row-major as an (out x in) block followed by the bias.
struct LayerSlice {
  Index weight_offset = 0;
  Index bias_offset = 0;
  Index rows = 0;  // output width
  Index cols = 0;  // input width
};

std::vector<LayerSlice> param_layout(const FieldSpec& spec);
Index param_count(const FieldSpec& spec);

Eigen::VectorXd mlp_forward(const FieldSpec& spec, const ParamVector& params,
                            const Eigen::VectorXd& input);
Eigen::MatrixXd mlp_forward(const FieldSpec& spec, const ParamVector& params,
                            const Eigen::MatrixXd& inputs);

struct MlpVjp {
  Eigen::MatrixXd grad_input;  // same shape as the inputs
  Eigen::VectorXd grad_params; // summed over the batch
};

/// cotangent^T * d(mlp)/d(input, params). Recomputes the forward pass.
MlpVjp mlp_vjp(const FieldSpec& spec, const ParamVector& params,
               const Eigen::MatrixXd& inputs,
               const Eigen::MatrixXd& cotangents);

struct MlpJvp {
  Eigen::MatrixXd output;
  Eigen::MatrixXd output_tangent;
};

/// Forward pass plus the directional derivative along `input_tangents`.
MlpJvp mlp_jvp(const FieldSpec& spec, const ParamVector& params,
               const Eigen::MatrixXd& inputs,
               const Eigen::MatrixXd& input_tangents);

struct MlpVjpTangent {
  Eigen::MatrixXd output_tangent;
  /// d/de of the VJP input gradient at inputs + e*input_tangents with
  /// cotangents + e*cotangent_tangents.
  Eigen::MatrixXd grad_input_tangent;
  Eigen::VectorXd grad_params_tangent;
};

/// Forward-over-reverse product: differentiates mlp_vjp along a tangent in
/// input space and a tangent in cotangent space simultaneously.
MlpVjpTangent mlp_vjp_tangent(const FieldSpec& spec, const ParamVector& params,
                              const Eigen::MatrixXd& inputs,
                              const Eigen::MatrixXd& input_tangents,
                              const Eigen::MatrixXd& cotangents,
                              const Eigen::MatrixXd& cotangent_tangents);

/// Weights uniform on +-1/sqrt(fan_in), zero biases; deterministic in `seed`.
ParamVector init_params(const FieldSpec& spec, std::uint64_t seed);

}  // namespace depthflow
