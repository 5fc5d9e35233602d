#include "depthflow/mlp.hpp"

#include <cmath>
#include <random>
#include <string>

#include <fmt/format.h>

#include "depthflow/errors.hpp"

namespace depthflow {

namespace {

constexpr double kEluAlpha = 1.0;
constexpr double kSoftplusLinearThreshold = 30.0;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double act_value(Activation a, double x) {
  switch (a) {
    case Activation::Tanh: return std::tanh(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Softplus:
      return x > kSoftplusLinearThreshold ? x : std::log1p(std::exp(x));
    case Activation::Elu: return x > 0.0 ? x : kEluAlpha * std::expm1(x);
    case Activation::Identity: return x;
  }
  return x;
}

double act_d1(Activation a, double x) {
  switch (a) {
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::Softplus:
      return x > kSoftplusLinearThreshold ? 1.0 : sigmoid(x);
    case Activation::Elu: return x > 0.0 ? 1.0 : kEluAlpha * std::exp(x);
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

double act_d2(Activation a, double x) {
  switch (a) {
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
    case Activation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s) * (1.0 - 2.0 * s);
    }
    case Activation::Relu: return 0.0;
    case Activation::Softplus: {
      if (x > kSoftplusLinearThreshold) return 0.0;
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::Elu: return x > 0.0 ? 0.0 : kEluAlpha * std::exp(x);
    case Activation::Identity: return 0.0;
  }
  return 0.0;
}

Eigen::MatrixXd apply(Activation a, const Eigen::MatrixXd& h) {
  if (a == Activation::Identity) return h;
  return h.unaryExpr([a](double x) { return act_value(a, x); });
}

Eigen::MatrixXd derivative(Activation a, const Eigen::MatrixXd& h) {
  return h.unaryExpr([a](double x) { return act_d1(a, x); });
}

Eigen::MatrixXd second_derivative(Activation a, const Eigen::MatrixXd& h) {
  return h.unaryExpr([a](double x) { return act_d2(a, x); });
}

using ConstWeights = Eigen::Map<const RowMatrix>;
using Weights = Eigen::Map<RowMatrix>;

ConstWeights weight(const ParamVector& p, const LayerSlice& l) {
  return ConstWeights(p.data() + l.weight_offset, l.rows, l.cols);
}

Eigen::Map<const Eigen::VectorXd> bias(const ParamVector& p,
                                       const LayerSlice& l) {
  return Eigen::Map<const Eigen::VectorXd>(p.data() + l.bias_offset, l.rows);
}

void check_params(const FieldSpec& spec, const ParamVector& params) {
  const Index n = param_count(spec);
  if (params.size() != n) {
    throw ShapeError(fmt::format("mlp: parameter vector has length {}, layout "
                                 "requires {}",
                                 params.size(), n));
  }
}

void check_input(const FieldSpec& spec, Index rows) {
  if (rows != spec.input_dim()) {
    throw ShapeError(fmt::format("mlp: layer 0 expects input width {}, got {}",
                                 spec.input_dim(), rows));
  }
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // pre-activation of each layer
  std::vector<Eigen::MatrixXd> post;  // post[0] = input, post[l+1] = act(pre[l])
};

ForwardCache run_forward(const FieldSpec& spec, const ParamVector& params,
                         const Eigen::MatrixXd& inputs) {
  const auto layout = param_layout(spec);
  ForwardCache c;
  c.pre.reserve(layout.size());
  c.post.reserve(layout.size() + 1);
  c.post.push_back(inputs);
  for (std::size_t l = 0; l < layout.size(); ++l) {
    Eigen::MatrixXd h = weight(params, layout[l]) * c.post.back();
    h.colwise() += bias(params, layout[l]);
    c.post.push_back(apply(spec.activations[l], h));
    c.pre.push_back(std::move(h));
  }
  return c;
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "relu") return Activation::Relu;
  if (name == "softplus") return Activation::Softplus;
  if (name == "elu") return Activation::Elu;
  if (name == "identity" || name == "linear") return Activation::Identity;
  throw DomainError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Relu: return "relu";
    case Activation::Softplus: return "softplus";
    case Activation::Elu: return "elu";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

InputMode parse_input_mode(std::string_view name) {
  if (name == "autonomous") return InputMode::Autonomous;
  if (name == "depth-concat") return InputMode::DepthConcat;
  if (name == "data-controlled") return InputMode::DataControlled;
  throw DomainError("unknown input mode '" + std::string(name) + "'");
}

std::string_view to_string(InputMode m) {
  switch (m) {
    case InputMode::Autonomous: return "autonomous";
    case InputMode::DepthConcat: return "depth-concat";
    case InputMode::DataControlled: return "data-controlled";
  }
  return "autonomous";
}

Index FieldSpec::state_dim() const {
  Index n = input_dim();
  if (input_mode == InputMode::DepthConcat) n -= 1;
  if (input_mode == InputMode::DataControlled) n -= data_dim;
  return n;
}

void FieldSpec::validate() const {
  if (widths.size() < 2) {
    throw ShapeError("field spec: at least an input and an output width are "
                     "required");
  }
  if (activations.size() != widths.size() - 1) {
    throw ShapeError(fmt::format("field spec: {} activations for {} layers",
                                 activations.size(), widths.size() - 1));
  }
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] <= 0) {
      throw ShapeError(fmt::format("field spec: width {} of layer {} is not "
                                   "positive",
                                   widths[i], i));
    }
  }
  if (input_mode == InputMode::DataControlled && data_dim <= 0) {
    throw ShapeError("field spec: data-controlled field needs data_dim > 0");
  }
  if (state_dim() <= 0) {
    throw ShapeError("field spec: input width leaves no room for the state");
  }
}

FieldSpec FieldSpec::make(Index state_dim, Index output_dim,
                          const std::vector<Index>& hidden,
                          Activation hidden_act, Activation final_activation,
                          InputMode mode, Index data_dim) {
  FieldSpec s;
  s.input_mode = mode;
  s.data_dim = mode == InputMode::DataControlled ? data_dim : 0;
  Index in = state_dim;
  if (mode == InputMode::DepthConcat) in += 1;
  if (mode == InputMode::DataControlled) in += data_dim;
  s.widths.push_back(in);
  for (Index h : hidden) {
    s.widths.push_back(h);
    s.activations.push_back(hidden_act);
  }
  s.widths.push_back(output_dim);
  s.activations.push_back(final_activation);
  s.validate();
  return s;
}

std::vector<LayerSlice> param_layout(const FieldSpec& spec) {
  std::vector<LayerSlice> out;
  Index offset = 0;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    LayerSlice s;
    s.cols = spec.widths[l];
    s.rows = spec.widths[l + 1];
    s.weight_offset = offset;
    s.bias_offset = offset + s.rows * s.cols;
    offset = s.bias_offset + s.rows;
    out.push_back(s);
  }
  return out;
}

Index param_count(const FieldSpec& spec) {
  Index n = 0;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    n += spec.widths[l] * spec.widths[l + 1] + spec.widths[l + 1];
  }
  return n;
}

Eigen::VectorXd mlp_forward(const FieldSpec& spec, const ParamVector& params,
                            const Eigen::VectorXd& input) {
  Eigen::MatrixXd out = mlp_forward(spec, params, Eigen::MatrixXd(input));
  return out.col(0);
}

Eigen::MatrixXd mlp_forward(const FieldSpec& spec, const ParamVector& params,
                            const Eigen::MatrixXd& inputs) {
  check_params(spec, params);
  check_input(spec, inputs.rows());
  const auto layout = param_layout(spec);
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < layout.size(); ++l) {
    Eigen::MatrixXd h = weight(params, layout[l]) * a;
    h.colwise() += bias(params, layout[l]);
    a = apply(spec.activations[l], h);
  }
  return a;
}

MlpVjp mlp_vjp(const FieldSpec& spec, const ParamVector& params,
               const Eigen::MatrixXd& inputs,
               const Eigen::MatrixXd& cotangents) {
  check_params(spec, params);
  check_input(spec, inputs.rows());
  if (cotangents.rows() != spec.output_dim() ||
      cotangents.cols() != inputs.cols()) {
    throw ShapeError(fmt::format(
        "mlp_vjp: cotangent is {}x{}, output of layer {} is {}x{}",
        cotangents.rows(), cotangents.cols(), spec.num_layers() - 1,
        spec.output_dim(), inputs.cols()));
  }
  const auto layout = param_layout(spec);
  const ForwardCache c = run_forward(spec, params, inputs);

  MlpVjp out;
  out.grad_params = Eigen::VectorXd::Zero(params.size());
  Eigen::MatrixXd g = cotangents;
  for (Index l = static_cast<Index>(layout.size()) - 1; l >= 0; --l) {
    const LayerSlice& s = layout[l];
    Eigen::MatrixXd gh =
        g.cwiseProduct(derivative(spec.activations[l], c.pre[l]));
    Weights(out.grad_params.data() + s.weight_offset, s.rows, s.cols) =
        gh * c.post[l].transpose();
    out.grad_params.segment(s.bias_offset, s.rows) = gh.rowwise().sum();
    g = weight(params, s).transpose() * gh;
  }
  out.grad_input = std::move(g);
  return out;
}

MlpJvp mlp_jvp(const FieldSpec& spec, const ParamVector& params,
               const Eigen::MatrixXd& inputs,
               const Eigen::MatrixXd& input_tangents) {
  check_params(spec, params);
  check_input(spec, inputs.rows());
  if (input_tangents.rows() != inputs.rows() ||
      input_tangents.cols() != inputs.cols()) {
    throw ShapeError("mlp_jvp: tangent shape differs from input shape");
  }
  const auto layout = param_layout(spec);
  Eigen::MatrixXd a = inputs;
  Eigen::MatrixXd ad = input_tangents;
  for (std::size_t l = 0; l < layout.size(); ++l) {
    const auto w = weight(params, layout[l]);
    Eigen::MatrixXd h = w * a;
    h.colwise() += bias(params, layout[l]);
    Eigen::MatrixXd hd = w * ad;
    ad = hd.cwiseProduct(derivative(spec.activations[l], h));
    a = apply(spec.activations[l], h);
  }
  return {std::move(a), std::move(ad)};
}

MlpVjpTangent mlp_vjp_tangent(const FieldSpec& spec, const ParamVector& params,
                              const Eigen::MatrixXd& inputs,
                              const Eigen::MatrixXd& input_tangents,
                              const Eigen::MatrixXd& cotangents,
                              const Eigen::MatrixXd& cotangent_tangents) {
  check_params(spec, params);
  check_input(spec, inputs.rows());
  if (input_tangents.rows() != inputs.rows() ||
      input_tangents.cols() != inputs.cols()) {
    throw ShapeError("mlp_vjp_tangent: tangent shape differs from input");
  }
  if (cotangents.rows() != spec.output_dim() ||
      cotangents.cols() != inputs.cols() ||
      cotangent_tangents.rows() != cotangents.rows() ||
      cotangent_tangents.cols() != cotangents.cols()) {
    throw ShapeError(fmt::format(
        "mlp_vjp_tangent: cotangents must be {}x{} (output of layer {})",
        spec.output_dim(), inputs.cols(), spec.num_layers() - 1));
  }
  const auto layout = param_layout(spec);
  const Index n_layers = static_cast<Index>(layout.size());

  // Forward pass carrying tangents.
  std::vector<Eigen::MatrixXd> pre, pre_t, post{inputs}, post_t{input_tangents};
  for (Index l = 0; l < n_layers; ++l) {
    const auto w = weight(params, layout[l]);
    Eigen::MatrixXd h = w * post.back();
    h.colwise() += bias(params, layout[l]);
    Eigen::MatrixXd ht = w * post_t.back();
    post_t.push_back(ht.cwiseProduct(derivative(spec.activations[l], h)));
    post.push_back(apply(spec.activations[l], h));
    pre.push_back(std::move(h));
    pre_t.push_back(std::move(ht));
  }

  MlpVjpTangent out;
  out.output_tangent = post_t.back();
  out.grad_params_tangent = Eigen::VectorXd::Zero(params.size());
  Eigen::MatrixXd g = cotangents;
  Eigen::MatrixXd gt = cotangent_tangents;
  for (Index l = n_layers - 1; l >= 0; --l) {
    const LayerSlice& s = layout[l];
    const Eigen::MatrixXd d1 = derivative(spec.activations[l], pre[l]);
    const Eigen::MatrixXd d2 = second_derivative(spec.activations[l], pre[l]);
    Eigen::MatrixXd gh = g.cwiseProduct(d1);
    Eigen::MatrixXd ght =
        gt.cwiseProduct(d1) + g.cwiseProduct(d2).cwiseProduct(pre_t[l]);
    Weights(out.grad_params_tangent.data() + s.weight_offset, s.rows, s.cols) =
        ght * post[l].transpose() + gh * post_t[l].transpose();
    out.grad_params_tangent.segment(s.bias_offset, s.rows) =
        ght.rowwise().sum();
    const auto w = weight(params, s);
    g = w.transpose() * gh;
    gt = w.transpose() * ght;
  }
  out.grad_input_tangent = std::move(gt);
  return out;
}

ParamVector init_params(const FieldSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector p = ParamVector::Zero(param_count(spec));
  std::mt19937_64 rng(seed);
  for (const LayerSlice& s : param_layout(spec)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < s.rows * s.cols; ++i) {
      p[s.weight_offset + i] = dist(rng);
    }
  }
  return p;
}

}  // namespace depthflow
