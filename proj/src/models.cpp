#include "depthflow/models.hpp"

#include <cmath>
#include <random>
#include <string>

#include <fmt/format.h>

#include "depthflow/errors.hpp"

namespace depthflow {

Index LinearMap::param_count() const {
  return trainable ? weight.size() + bias.size() : 0;
}

Eigen::MatrixXd LinearMap::apply(const Eigen::MatrixXd& x) const {
  if (x.rows() != in_dim()) {
    throw ShapeError(fmt::format("linear map expects {} inputs, got {}", in_dim(),
                                 x.rows()));
  }
  Eigen::MatrixXd y = weight * x;
  y.colwise() += bias;
  return y;
}

LinearMap LinearMap::identity(Index n, bool trainable) {
  return LinearMap{RowMatrix::Identity(n, n), Eigen::VectorXd::Zero(n), trainable};
}

LinearMap LinearMap::random(Index in, Index out, std::uint64_t seed,
                            bool trainable) {
  LinearMap m{RowMatrix(out, in), Eigen::VectorXd::Zero(out), trainable};
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < out; ++i) {
    for (Index j = 0; j < in; ++j) m.weight(i, j) = dist(rng);
  }
  return m;
}

LinearMap LinearMap::padded_identity(Index in, Index out, bool trainable) {
  if (out < in) throw ShapeError("padded identity needs out >= in");
  LinearMap m{RowMatrix::Zero(out, in), Eigen::VectorXd::Zero(out), trainable};
  m.weight.topRows(in).setIdentity();
  return m;
}

AugmentKind parse_augment_kind(std::string_view name) {
  if (name == "none") return AugmentKind::None;
  if (name == "zero") return AugmentKind::Zero;
  if (name == "input-layer") return AugmentKind::InputLayer;
  if (name == "input-layer-preserving") return AugmentKind::InputLayerPreserving;
  if (name == "higher-order") return AugmentKind::HigherOrder;
  if (name == "selective-higher-order") return AugmentKind::SelectiveHigherOrder;
  throw DomainError("unknown augmentation '" + std::string(name) + "'");
}

std::string_view to_string(AugmentKind k) {
  switch (k) {
    case AugmentKind::None: return "none";
    case AugmentKind::Zero: return "zero";
    case AugmentKind::InputLayer: return "input-layer";
    case AugmentKind::InputLayerPreserving: return "input-layer-preserving";
    case AugmentKind::HigherOrder: return "higher-order";
    case AugmentKind::SelectiveHigherOrder: return "selective-higher-order";
  }
  return "none";
}

namespace {

// Size of the state produced before any higher-order lifting.
Index base_dim(const NodeModel& m) {
  const Augmentation& a = m.augmentation;
  switch (a.kind) {
    case AugmentKind::None: return m.input_dim;
    case AugmentKind::Zero: return m.input_dim + a.extra;
    case AugmentKind::InputLayer:
      return a.input_layer ? a.input_layer->out_dim() : 0;
    case AugmentKind::InputLayerPreserving: return m.input_dim + a.extra;
    case AugmentKind::HigherOrder:
    case AugmentKind::SelectiveHigherOrder:
      return a.input_layer ? a.input_layer->out_dim() : m.input_dim;
  }
  return m.input_dim;
}

Index positions_dim(const NodeModel& m) {
  const Augmentation& a = m.augmentation;
  return a.input_layer ? a.input_layer->out_dim() : m.input_dim + a.extra;
}

Index selective_half(const NodeModel& m) { return m.augmentation.extra / 2; }

}  // namespace

Index NodeModel::state_dim() const {
  switch (augmentation.kind) {
    case AugmentKind::HigherOrder: return augmentation.order * positions_dim(*this);
    case AugmentKind::SelectiveHigherOrder:
      return base_dim(*this) + selective_half(*this);
    default: return base_dim(*this);
  }
}

Index NodeModel::field_output_dim() const {
  switch (augmentation.kind) {
    case AugmentKind::HigherOrder: return positions_dim(*this);
    case AugmentKind::SelectiveHigherOrder: return base_dim(*this);
    default: return state_dim();
  }
}

void NodeModel::validate() const {
  const Augmentation& a = augmentation;
  if (input_dim < 1) throw ShapeError("model input_dim must be positive");
  if (a.extra < 0) throw ShapeError("augmentation extra must be nonnegative");
  switch (a.kind) {
    case AugmentKind::InputLayer:
      if (!a.input_layer) throw ShapeError("input-layer augmentation needs a map");
      break;
    case AugmentKind::InputLayerPreserving:
      if (!a.input_layer || a.input_layer->out_dim() != a.extra) {
        throw ShapeError("input-layer-preserving needs a map to `extra` outputs");
      }
      break;
    case AugmentKind::HigherOrder:
      if (a.order < 1) throw ShapeError("higher-order augmentation needs order >= 1");
      if (a.input_layer && a.extra != 0) {
        throw ShapeError("higher-order: use either an input layer or extra zeros");
      }
      break;
    case AugmentKind::SelectiveHigherOrder:
      if (a.extra < 2 || a.extra % 2 != 0) {
        throw ShapeError("selective higher-order needs an even n_a >= 2");
      }
      if (a.extra / 2 > base_dim(*this)) {
        throw ShapeError("selective higher-order: n_a / 2 exceeds the state size");
      }
      break;
    default:
      if (a.input_layer) throw ShapeError("augmentation does not use an input layer");
      break;
  }
  if (a.input_layer && a.input_layer->in_dim() != input_dim) {
    throw ShapeError(fmt::format("input layer expects {} inputs, model has {}",
                                 a.input_layer->in_dim(), input_dim));
  }
  field.validate();
  const Index nz = state_dim();
  if (field.state_dim() != nz) {
    throw ShapeError(fmt::format("field state size {} does not match n_z = {}",
                                 field.state_dim(), nz));
  }
  if (field.output_dim() != field_output_dim()) {
    throw ShapeError(fmt::format("field output size {} but the wiring needs {}",
                                 field.output_dim(), field_output_dim()));
  }
  if (field.input_mode == InputMode::DataControlled && field.data_dim != input_dim) {
    throw ShapeError(fmt::format("data-controlled field expects {} control inputs, "
                                 "model input has {}",
                                 field.data_dim, input_dim));
  }
  depthflow::validate(theta);
  if (theta_size(theta) != param_count(field)) {
    throw ShapeError(fmt::format("theta has {} entries, the field network needs {}",
                                 theta_size(theta), param_count(field)));
  }
  if (output.in_dim() != nz || output.bias.size() != output.out_dim()) {
    throw ShapeError(fmt::format("output map expects {} inputs, n_z = {}",
                                 output.in_dim(), nz));
  }
  if (!(depth > 0.0)) throw DomainError("model depth must be positive");
  if (hypernet && hypernet->spec.input_dim() != input_dim) {
    throw ShapeError("depth network input size differs from the model input");
  }
}

Eigen::MatrixXd apply_hx(const NodeModel& model, const Eigen::MatrixXd& x) {
  const Augmentation& a = model.augmentation;
  if (x.rows() != model.input_dim) {
    throw ShapeError(fmt::format("model expects {} inputs, got {}", model.input_dim,
                                 x.rows()));
  }
  const Index b = x.cols();
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(model.state_dim(), b);
  switch (a.kind) {
    case AugmentKind::None:
      z = x;
      break;
    case AugmentKind::Zero:
      z.topRows(x.rows()) = x;
      break;
    case AugmentKind::InputLayer:
      z = a.input_layer->apply(x);
      break;
    case AugmentKind::InputLayerPreserving:
      z.topRows(x.rows()) = x;
      z.bottomRows(a.extra) = a.input_layer->apply(x);
      break;
    case AugmentKind::HigherOrder:
      if (a.input_layer) {
        z.topRows(positions_dim(model)) = a.input_layer->apply(x);
      } else {
        z.topRows(x.rows()) = x;
      }
      break;
    case AugmentKind::SelectiveHigherOrder: {
      const Index h = selective_half(model);
      const Eigen::MatrixXd base = a.input_layer ? a.input_layer->apply(x) : x;
      z.topRows(h) = base.topRows(h);
      z.bottomRows(base.rows() - h) = base.bottomRows(base.rows() - h);
      break;
    }
  }
  return z;
}

Eigen::VectorXd apply_hx(const NodeModel& model, const Eigen::VectorXd& x) {
  return apply_hx(model, Eigen::MatrixXd(x)).col(0);
}

namespace {

Eigen::MatrixXd field_input(const NodeModel& model, double s,
                            const Eigen::MatrixXd& x, const Eigen::MatrixXd& z) {
  switch (model.field.input_mode) {
    case InputMode::Autonomous: return z;
    case InputMode::DepthConcat: {
      Eigen::MatrixXd u(z.rows() + 1, z.cols());
      u.topRows(z.rows()) = z;
      u.bottomRows(1).setConstant(s);
      return u;
    }
    case InputMode::DataControlled: {
      Eigen::MatrixXd u(z.rows() + x.rows(), z.cols());
      u.topRows(z.rows()) = z;
      u.bottomRows(x.rows()) = x;
      return u;
    }
  }
  return z;
}

}  // namespace

void wired_field(const NodeModel& model, double s, const ParamVector& theta,
                 const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                 Eigen::MatrixXd& dz) {
  const Eigen::MatrixXd f = mlp_forward(model.field, theta, field_input(model, s, x, z));
  const Augmentation& a = model.augmentation;
  switch (a.kind) {
    case AugmentKind::HigherOrder: {
      const Index d = f.rows();
      dz.resize(z.rows(), z.cols());
      dz.topRows(z.rows() - d) = z.bottomRows(z.rows() - d);
      dz.bottomRows(d) = f;
      break;
    }
    case AugmentKind::SelectiveHigherOrder: {
      const Index h = selective_half(model);
      dz.resize(z.rows(), z.cols());
      dz.topRows(h) = z.middleRows(h, h);
      dz.bottomRows(z.rows() - h) = f;
      break;
    }
    default:
      dz = f;
      break;
  }
}

FieldFn wrap_field(const NodeModel& model, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd xm = x;
  return [&model, xm](double s, const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
    Eigen::MatrixXd d;
    wired_field(model, s, eval_theta(model.theta, s), xm, Eigen::MatrixXd(z), d);
    dz = d.col(0);
  };
}

NodeDynamics::NodeDynamics(const NodeModel& model, Eigen::MatrixXd x)
    : model_(model), x_(std::move(x)), n_z_(model.state_dim()), batch_(x_.cols()) {
  if (x_.rows() != model.input_dim) {
    throw ShapeError(fmt::format("model expects {} inputs, got {}", model.input_dim,
                                 x_.rows()));
  }
}

void NodeDynamics::eval(double s, const ParamVector& theta, const Eigen::VectorXd& z,
                        Eigen::VectorXd& dz) const {
  const Eigen::Map<const Eigen::MatrixXd> zm(z.data(), n_z_, batch_);
  Eigen::MatrixXd d;
  wired_field(model_, s, theta, x_, zm, d);
  dz = Eigen::Map<const Eigen::VectorXd>(d.data(), d.size());
}

void NodeDynamics::vjp(double s, const ParamVector& theta, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& a, Eigen::VectorXd& grad_z,
                       Eigen::VectorXd& grad_theta) const {
  const Eigen::Map<const Eigen::MatrixXd> zm(z.data(), n_z_, batch_);
  const Eigen::Map<const Eigen::MatrixXd> am(a.data(), n_z_, batch_);
  Eigen::MatrixXd gz = Eigen::MatrixXd::Zero(n_z_, batch_);
  Eigen::MatrixXd cot;
  switch (model_.augmentation.kind) {
    case AugmentKind::HigherOrder: {
      const Index d = model_.field.output_dim();
      gz.bottomRows(n_z_ - d) = am.topRows(n_z_ - d);
      cot = am.bottomRows(d);
      break;
    }
    case AugmentKind::SelectiveHigherOrder: {
      const Index h = selective_half(model_);
      gz.middleRows(h, h) = am.topRows(h);
      cot = am.bottomRows(n_z_ - h);
      break;
    }
    default:
      cot = am;
      break;
  }
  const MlpVjp v = mlp_vjp(model_.field, theta, field_input(model_, s, x_, zm), cot);
  gz += v.grad_input.topRows(n_z_);
  grad_z = Eigen::Map<const Eigen::VectorXd>(gz.data(), gz.size());
  grad_theta = v.grad_params;
}

double sample_depth(const NodeModel& model, const Eigen::VectorXd& x) {
  return model.hypernet ? eval_depth(*model.hypernet, x) : model.depth;
}

NodeForward node_forward(const NodeModel& model, const Eigen::MatrixXd& x,
                         const Tolerance& tol, bool record) {
  NodeForward out;
  const Eigen::MatrixXd z0 = apply_hx(model, x);
  const Index nz = model.state_dim();
  const LossSpec none;
  SolveOptions opts;
  opts.record = record;
  if (!model.hypernet) {
    NodeDynamics dyn(model, x);
    const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(z0.data(), z0.size());
    ForwardLoss f = forward_loss(dyn, flat, none, model.depth, tol, opts);
    out.terminal = Eigen::Map<const Eigen::MatrixXd>(f.solution.terminal.data(), nz,
                                                     x.cols());
    out.nfe = f.solution.nfe;
    out.depths.assign(static_cast<std::size_t>(x.cols()), model.depth);
    out.solutions.push_back(std::move(f.solution));
  } else {
    out.terminal.resize(nz, x.cols());
    for (Index k = 0; k < x.cols(); ++k) {
      const Eigen::VectorXd xk = x.col(k);
      const double depth = eval_depth(*model.hypernet, xk);
      if (!(depth > 0.0)) {
        throw DomainError(fmt::format("sample {}: integration depth {} is not positive",
                                      k, depth));
      }
      NodeDynamics dyn(model, Eigen::MatrixXd(xk));
      ForwardLoss f =
          forward_loss(dyn, Eigen::VectorXd(z0.col(k)), none, depth, tol, opts);
      out.terminal.col(k) = f.solution.terminal;
      out.nfe += f.solution.nfe;
      out.depths.push_back(depth);
      out.solutions.push_back(std::move(f.solution));
    }
  }
  out.output = model.output.apply(out.terminal);
  return out;
}

Solution node_trajectory(const NodeModel& model, const Eigen::VectorXd& x,
                         const Tolerance& tol) {
  NodeDynamics dyn(model, Eigen::MatrixXd(x));
  SolveOptions opts;
  opts.record = true;
  return forward_loss(dyn, apply_hx(model, x), LossSpec{}, sample_depth(model, x), tol,
                      opts)
      .solution;
}

ParamGroups param_groups(const NodeModel& model) {
  ParamGroups g;
  const auto& il = model.augmentation.input_layer;
  g.input = 0;
  g.theta = il ? il->param_count() : 0;
  g.output = g.theta + coefficient_count(model.theta);
  g.omega = g.output + model.output.param_count();
  g.total = g.omega + (model.hypernet ? model.hypernet->omega.size() : 0);
  return g;
}

Index model_param_count(const NodeModel& model) { return param_groups(model).total; }

namespace {

void put_linear(const LinearMap& m, Eigen::VectorXd& flat, Index offset) {
  if (!m.trainable) return;
  const Index nw = m.weight.size();
  flat.segment(offset, nw) = Eigen::Map<const Eigen::VectorXd>(m.weight.data(), nw);
  flat.segment(offset + nw, m.bias.size()) = m.bias;
}

void take_linear(LinearMap& m, const Eigen::VectorXd& flat, Index offset) {
  if (!m.trainable) return;
  const Index nw = m.weight.size();
  Eigen::Map<Eigen::VectorXd>(m.weight.data(), nw) = flat.segment(offset, nw);
  m.bias = flat.segment(offset + nw, m.bias.size());
}

}  // namespace

Eigen::VectorXd get_params(const NodeModel& model) {
  const ParamGroups g = param_groups(model);
  Eigen::VectorXd flat(g.total);
  if (model.augmentation.input_layer) put_linear(*model.augmentation.input_layer, flat, 0);
  flat.segment(g.theta, g.output - g.theta) = flatten(model.theta);
  put_linear(model.output, flat, g.output);
  if (model.hypernet) flat.segment(g.omega, g.total - g.omega) = model.hypernet->omega;
  return flat;
}

void set_params(NodeModel& model, const Eigen::VectorXd& flat) {
  const ParamGroups g = param_groups(model);
  if (flat.size() != g.total) {
    throw ShapeError(fmt::format("model has {} parameters, got {}", g.total,
                                 flat.size()));
  }
  if (model.augmentation.input_layer) take_linear(*model.augmentation.input_layer, flat, 0);
  assign_flat(model.theta, flat.segment(g.theta, g.output - g.theta));
  take_linear(model.output, flat, g.output);
  if (model.hypernet) model.hypernet->omega = flat.segment(g.omega, g.total - g.omega);
}

void hx_vjp(const NodeModel& model, const Eigen::MatrixXd& x,
            const Eigen::MatrixXd& a0, Eigen::Ref<Eigen::VectorXd> grad_input) {
  const Augmentation& a = model.augmentation;
  if (!a.input_layer || !a.input_layer->trainable) return;
  Eigen::MatrixXd g;
  switch (a.kind) {
    case AugmentKind::InputLayer: g = a0; break;
    case AugmentKind::InputLayerPreserving: g = a0.bottomRows(a.extra); break;
    case AugmentKind::HigherOrder: g = a0.topRows(positions_dim(model)); break;
    case AugmentKind::SelectiveHigherOrder: {
      const Index h = selective_half(model);
      g.resize(a0.rows() - h, a0.cols());
      g.topRows(h) = a0.topRows(h);
      g.bottomRows(a0.rows() - 2 * h) = a0.bottomRows(a0.rows() - 2 * h);
      break;
    }
    default: return;
  }
  const RowMatrix gw = g * x.transpose();
  const Index nw = gw.size();
  grad_input.head(nw) += Eigen::Map<const Eigen::VectorXd>(gw.data(), nw);
  grad_input.segment(nw, g.rows()) += g.rowwise().sum();
}

}  // namespace depthflow
