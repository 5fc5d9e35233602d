#include "depthflow/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "depthflow/errors.hpp"

namespace depthflow {

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "adamw") return OptimizerKind::AdamW;
  throw DomainError("unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind k) {
  return k == OptimizerKind::Adam ? "adam" : "adamw";
}

void optimizer_step(OptimizerState& state, Eigen::VectorXd& params,
                    const Eigen::VectorXd& grads, double lr) {
  if (params.size() != grads.size()) {
    throw ShapeError(fmt::format("optimizer: {} parameters but {} gradients",
                                 params.size(), grads.size()));
  }
  if (state.m.size() == 0) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  } else if (state.m.size() != params.size()) {
    throw ShapeError("optimizer: moment buffers do not match the parameters");
  }
  const OptimizerConfig& c = state.config;
  const double rate = lr >= 0.0 ? lr : c.lr;
  Eigen::VectorXd g = grads;
  if (c.kind == OptimizerKind::AdamW) {
    params *= 1.0 - rate * c.weight_decay;
  } else if (c.weight_decay != 0.0) {
    g += c.weight_decay * params;
  }
  ++state.step;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * g;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * g.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  params.array() -= rate * (state.m.array() / bc1) /
                    ((state.v.array() / bc2).sqrt() + c.eps);
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "mse") return LossKind::Mse;
  if (name == "l1") return LossKind::L1;
  throw DomainError("unknown loss '" + std::string(name) + "'");
}

std::string_view to_string(LossKind k) { return k == LossKind::Mse ? "mse" : "l1"; }

LossValue loss_eval(LossKind kind, const Eigen::MatrixXd& predictions,
                    const Eigen::MatrixXd& targets) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
    throw ShapeError(fmt::format("loss: predictions {}x{} vs targets {}x{}",
                                 predictions.rows(), predictions.cols(), targets.rows(),
                                 targets.cols()));
  }
  if (predictions.size() == 0) throw ShapeError("loss: empty input");
  const double n = static_cast<double>(predictions.size());
  const Eigen::MatrixXd r = predictions - targets;
  LossValue out;
  if (kind == LossKind::Mse) {
    out.value = r.squaredNorm() / n;
    out.grad = (2.0 / n) * r;
  } else {
    out.value = r.cwiseAbs().sum() / n;
    out.grad = r.unaryExpr([n](double v) {
      return v > 0.0 ? 1.0 / n : (v < 0.0 ? -1.0 / n : 0.0);
    });
  }
  return out;
}

RegularizerKind parse_regularizer_kind(std::string_view name) {
  if (name == "none") return RegularizerKind::None;
  if (name == "integral-kinetic") return RegularizerKind::IntegralKinetic;
  if (name == "terminal-fixed-point") return RegularizerKind::TerminalFixedPoint;
  throw DomainError("unknown regularizer '" + std::string(name) + "'");
}

std::string_view to_string(RegularizerKind k) {
  switch (k) {
    case RegularizerKind::None: return "none";
    case RegularizerKind::IntegralKinetic: return "integral-kinetic";
    case RegularizerKind::TerminalFixedPoint: return "terminal-fixed-point";
  }
  return "none";
}

namespace {

// weight / B * sum_k ||f_k|| with its gradients through dyn.vjp.
double field_norm_term(const Dynamics& dyn, double weight, double s,
                       const ParamVector& theta, const Eigen::VectorXd& z,
                       Eigen::VectorXd* gz, Eigen::VectorXd* gtheta) {
  Eigen::VectorXd f;
  dyn.eval(s, theta, z, f);
  const Index b = dyn.batch_size();
  const Index n = f.size() / b;
  const double c = weight / static_cast<double>(b);
  double value = 0.0;
  Eigen::VectorXd cot = Eigen::VectorXd::Zero(f.size());
  for (Index k = 0; k < b; ++k) {
    const double norm = f.segment(k * n, n).norm();
    value += norm;
    if (norm > 0.0) cot.segment(k * n, n) = (c / norm) * f.segment(k * n, n);
  }
  if (gz != nullptr || gtheta != nullptr) {
    Eigen::VectorXd a_z, a_t;
    dyn.vjp(s, theta, z, cot, a_z, a_t);
    if (gz != nullptr) *gz = a_z;
    if (gtheta != nullptr) *gtheta = a_t;
  }
  return c * value;
}

}  // namespace

LossSpec regularizer_loss(const Regularizer& reg, const Dynamics& dyn, double depth) {
  LossSpec loss;
  if (reg.kind == RegularizerKind::None || reg.weight == 0.0) return loss;
  loss.theta_dependent = true;
  const double w = reg.weight;
  if (reg.kind == RegularizerKind::IntegralKinetic) {
    loss.running = [&dyn, w](double s, const Eigen::VectorXd& z,
                             const ParamVector& theta, Eigen::VectorXd* gz,
                             Eigen::VectorXd* gt) {
      return field_norm_term(dyn, w, s, theta, z, gz, gt);
    };
  } else {
    loss.terminal = [&dyn, w, depth](const Eigen::VectorXd& z, const ParamVector& theta,
                                     Eigen::VectorXd* gz, Eigen::VectorXd* gt) {
      return field_norm_term(dyn, w, depth, theta, z, gz, gt);
    };
  }
  return loss;
}

namespace {

// State [z, e] with de/ds = weight / B * sum_k ||f_k||.
class KineticAugmented : public Dynamics {
 public:
  KineticAugmented(const Dynamics& inner, double weight)
      : inner_(inner), weight_(weight) {}
  Index state_size() const override { return inner_.state_size() + 1; }
  const DepthParametrization& parametrization() const override {
    return inner_.parametrization();
  }
  void eval(double s, const ParamVector& theta, const Eigen::VectorXd& z,
            Eigen::VectorXd& dz) const override {
    const Index n = inner_.state_size();
    const Eigen::VectorXd zi = z.head(n);
    Eigen::VectorXd f;
    inner_.eval(s, theta, zi, f);
    dz.resize(n + 1);
    dz.head(n) = f;
    dz[n] = field_norm_term(inner_, weight_, s, theta, zi, nullptr, nullptr);
  }
  void vjp(double s, const ParamVector& theta, const Eigen::VectorXd& z,
           const Eigen::VectorXd& a, Eigen::VectorXd& grad_z,
           Eigen::VectorXd& grad_theta) const override {
    const Index n = inner_.state_size();
    const Eigen::VectorXd zi = z.head(n);
    Eigen::VectorXd gz, gt, rz, rt;
    inner_.vjp(s, theta, zi, a.head(n), gz, gt);
    field_norm_term(inner_, weight_, s, theta, zi, &rz, &rt);
    grad_z.resize(n + 1);
    grad_z.head(n) = gz + a[n] * rz;
    grad_z[n] = 0.0;
    grad_theta = gt + a[n] * rt;
  }

 private:
  const Dynamics& inner_;
  double weight_;
};

}  // namespace

GradientReport integral_kinetic_by_augmentation(const Dynamics& dyn,
                                                const Eigen::VectorXd& z0,
                                                double weight, double depth,
                                                const Tolerance& tol) {
  KineticAugmented aug(dyn, weight);
  Eigen::VectorXd y0(z0.size() + 1);
  y0.head(z0.size()) = z0;
  y0[z0.size()] = 0.0;
  LossSpec loss;
  loss.terminal = [](const Eigen::VectorXd& z, const ParamVector&, Eigen::VectorXd* gz,
                     Eigen::VectorXd*) {
    if (gz != nullptr) {
      gz->setZero(z.size());
      (*gz)[z.size() - 1] = 1.0;
    }
    return z[z.size() - 1];
  };
  return adjoint_grad(aug, y0, loss, depth, tol);
}

double LrSchedule::at(double lr, long epoch) const {
  if (every <= 0 || gamma == 1.0) return lr;
  return lr * std::pow(gamma, static_cast<double>(epoch / every));
}

FitResult fit(Eigen::VectorXd params, Index n_samples, const BatchObjective& objective,
              const FitConfig& config) {
  if (n_samples < 1) throw DomainError("fit: dataset is empty");
  if (config.optimizer.lr < 0.0) throw DomainError("fit: learning rate is negative");
  FitResult out;
  OptimizerState opt(config.optimizer);
  std::mt19937_64 rng(config.seed);
  std::vector<Index> order(static_cast<std::size_t>(n_samples));
  std::iota(order.begin(), order.end(), Index{0});
  const Index bs = config.batch_size > 0 ? std::min(config.batch_size, n_samples)
                                         : n_samples;
  try {
    for (long epoch = 0; epoch < config.epochs; ++epoch) {
      if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
      const double lr = config.schedule.at(config.optimizer.lr, epoch);
      EpochRecord rec;
      double acc_sum = 0.0;
      long batches = 0;
      for (Index start = 0; start < n_samples; start += bs) {
        const Index end = std::min(start + bs, n_samples);
        std::vector<Index> batch(order.begin() + start, order.begin() + end);
        std::sort(batch.begin(), batch.end());
        BatchResult r = objective(params, batch);
        if (!std::isfinite(r.loss) || !r.grad.allFinite()) {
          throw DivergenceError(
              fmt::format("non-finite loss or gradient in epoch {}", epoch), 0.0);
        }
        optimizer_step(opt, params, r.grad, lr);
        rec.loss += r.loss;
        acc_sum += r.accuracy;
        rec.nfe_forward += static_cast<double>(r.nfe_forward);
        ++batches;
      }
      rec.loss /= static_cast<double>(batches);
      rec.accuracy = acc_sum / static_cast<double>(batches);
      rec.nfe_forward /= static_cast<double>(batches);
      out.history.push_back(rec);
      if (config.on_epoch && !config.on_epoch(epoch, rec.loss)) break;
    }
  } catch (const DivergenceError& e) {
    out.diverged = true;
    out.error = e.what();
  } catch (const StiffnessError& e) {
    out.diverged = true;
    out.error = e.what();
  }
  out.params = std::move(params);
  return out;
}

double sign_accuracy(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets) {
  if (predictions.rows() != 1 || predictions.cols() != targets.cols() ||
      predictions.cols() == 0) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  Index hits = 0;
  for (Index k = 0; k < predictions.cols(); ++k) {
    const bool p = predictions(0, k) >= 0.0;
    const bool t = targets(0, k) >= 0.0;
    if (p == t) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.cols());
}

namespace {

LossSpec supervised_terminal(const NodeModel& model, const Eigen::MatrixXd& y,
                             LossKind kind, double scale_by) {
  LossSpec loss;
  const Index nz = model.state_dim();
  loss.terminal = [&model, &y, kind, nz, scale_by](const Eigen::VectorXd& z,
                                                  const ParamVector&,
                                                  Eigen::VectorXd* gz,
                                                  Eigen::VectorXd*) {
    const Eigen::Map<const Eigen::MatrixXd> zm(z.data(), nz, z.size() / nz);
    const LossValue lv = loss_eval(kind, model.output.apply(zm), y);
    if (gz != nullptr) {
      const Eigen::MatrixXd g = scale_by * (model.output.weight.transpose() * lv.grad);
      *gz = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    }
    return scale_by * lv.value;
  };
  return loss;
}

void output_grad(const NodeModel& model, const Eigen::MatrixXd& terminal,
                 const Eigen::MatrixXd& dpred, Eigen::Ref<Eigen::VectorXd> grad) {
  if (!model.output.trainable) return;
  const RowMatrix gw = dpred * terminal.transpose();
  const Index nw = gw.size();
  grad.head(nw) += Eigen::Map<const Eigen::VectorXd>(gw.data(), nw);
  grad.segment(nw, dpred.rows()) += dpred.rowwise().sum();
}

Eigen::VectorXd flat(const Eigen::MatrixXd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

}  // namespace

BatchResult model_loss_grad(const NodeModel& model, const Eigen::MatrixXd& x,
                            const Eigen::MatrixXd& y, LossKind kind,
                            const Regularizer& reg, const Tolerance& tol) {
  if (x.cols() != y.cols()) throw ShapeError("inputs and targets differ in count");
  const ParamGroups pg = param_groups(model);
  const Index nz = model.state_dim();
  BatchResult out;
  out.grad = Eigen::VectorXd::Zero(pg.total);
  const Eigen::MatrixXd z0 = apply_hx(model, x);

  if (!model.hypernet) {
    NodeDynamics dyn(model, x);
    const LossSpec loss = combine(supervised_terminal(model, y, kind, 1.0),
                                  regularizer_loss(reg, dyn, model.depth));
    const GradientReport r = adjoint_grad(dyn, flat(z0), loss, model.depth, tol);
    out.loss = r.loss;
    out.nfe_forward = r.nfe_forward;
    out.nfe_backward = r.nfe_backward;
    out.grad.segment(pg.theta, r.grad.size()) = r.grad;
    const Eigen::MatrixXd a0 =
        Eigen::Map<const Eigen::MatrixXd>(r.adjoint_initial.data(), nz, x.cols());
    hx_vjp(model, x, a0, out.grad.head(pg.theta));
    const Eigen::MatrixXd zs =
        Eigen::Map<const Eigen::MatrixXd>(r.terminal_state.data(), nz, x.cols());
    const Eigen::MatrixXd pred = model.output.apply(zs);
    output_grad(model, zs, loss_eval(kind, pred, y).grad,
                out.grad.segment(pg.output, pg.omega - pg.output));
    out.accuracy = sign_accuracy(pred, y);
    return out;
  }

  const Index b = x.cols();
  const double inv_b = 1.0 / static_cast<double>(b);
  Eigen::MatrixXd pred(y.rows(), b), zs(nz, b), a0(nz, b);
  for (Index k = 0; k < b; ++k) {
    const Eigen::VectorXd xk = x.col(k);
    const Eigen::MatrixXd yk = y.col(k);
    NodeDynamics dyn(model, Eigen::MatrixXd(xk));
    const double depth = eval_depth(*model.hypernet, xk);
    const LossSpec loss = scale(combine(supervised_terminal(model, yk, kind, 1.0),
                                        regularizer_loss(reg, dyn, depth)),
                                inv_b);
    const AdaptiveDepthGrad r =
        adaptive_depth_grad(dyn, *model.hypernet, xk, z0.col(k), loss, tol);
    out.loss += r.report.loss;
    out.nfe_forward += r.report.nfe_forward;
    out.nfe_backward += r.report.nfe_backward;
    out.grad.segment(pg.theta, r.report.grad.size()) += r.report.grad;
    out.grad.segment(pg.omega, pg.total - pg.omega) += r.grad_omega;
    zs.col(k) = r.report.terminal_state;
    a0.col(k) = r.report.adjoint_initial;
  }
  hx_vjp(model, x, a0, out.grad.head(pg.theta));
  pred = model.output.apply(zs);
  output_grad(model, zs, loss_eval(kind, pred, y).grad,
              out.grad.segment(pg.output, pg.omega - pg.output));
  out.accuracy = sign_accuracy(pred, y);
  return out;
}

double model_loss(const NodeModel& model, const Eigen::MatrixXd& x,
                  const Eigen::MatrixXd& y, LossKind kind, const Regularizer& reg,
                  const Tolerance& tol) {
  const Eigen::MatrixXd z0 = apply_hx(model, x);
  if (!model.hypernet) {
    NodeDynamics dyn(model, x);
    const LossSpec loss = combine(supervised_terminal(model, y, kind, 1.0),
                                  regularizer_loss(reg, dyn, model.depth));
    return forward_loss(dyn, flat(z0), loss, model.depth, tol).loss;
  }
  const double inv_b = 1.0 / static_cast<double>(x.cols());
  double total = 0.0;
  for (Index k = 0; k < x.cols(); ++k) {
    const Eigen::VectorXd xk = x.col(k);
    const Eigen::MatrixXd yk = y.col(k);
    NodeDynamics dyn(model, Eigen::MatrixXd(xk));
    const double depth = eval_depth(*model.hypernet, xk);
    const LossSpec loss = combine(supervised_terminal(model, yk, kind, 1.0),
                                  regularizer_loss(reg, dyn, depth));
    total += inv_b * forward_loss(dyn, z0.col(k), loss, depth, tol).loss;
  }
  return total;
}

TrainResult train_loop(NodeModel model, const Eigen::MatrixXd& inputs,
                       const Eigen::MatrixXd& targets, const TrainConfig& config) {
  model.validate();
  if (inputs.cols() != targets.cols()) {
    throw ShapeError("train_loop: inputs and targets differ in count");
  }
  const BatchObjective objective = [&](const Eigen::VectorXd& params,
                                       const std::vector<Index>& batch) {
    NodeModel m = model;
    set_params(m, params);
    Eigen::MatrixXd xb(inputs.rows(), static_cast<Index>(batch.size()));
    Eigen::MatrixXd yb(targets.rows(), static_cast<Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      xb.col(static_cast<Index>(i)) = inputs.col(batch[i]);
      yb.col(static_cast<Index>(i)) = targets.col(batch[i]);
    }
    return model_loss_grad(m, xb, yb, config.loss, config.regularizer, config.tol);
  };
  FitConfig fc;
  fc.epochs = config.epochs;
  fc.batch_size = config.batch_size;
  fc.optimizer = config.optimizer;
  fc.schedule = config.schedule;
  fc.seed = config.seed;
  FitResult r = fit(get_params(model), inputs.cols(), objective, fc);
  set_params(model, r.params);
  return TrainResult{std::move(model), std::move(r.history), r.diverged,
                     std::move(r.error)};
}

BatchResult tracking_loss_grad(const NodeModel& model, const Eigen::MatrixXd& x,
                               const Signal& beta, const Tolerance& tol) {
  const ParamGroups pg = param_groups(model);
  const Index nz = model.state_dim();
  const Index b = x.cols();
  NodeDynamics dyn(model, x);
  LossSpec loss;
  loss.running = [&beta, nz, b](double s, const Eigen::VectorXd& z, const ParamVector&,
                                Eigen::VectorXd* gz, Eigen::VectorXd*) {
    const Eigen::VectorXd target = beta(s);
    if (target.size() != nz) throw ShapeError("tracking signal size differs from n_z");
    const double inv_b = 1.0 / static_cast<double>(b);
    double v = 0.0;
    if (gz != nullptr) gz->resize(z.size());
    for (Index k = 0; k < b; ++k) {
      const Eigen::VectorXd r = target - z.segment(k * nz, nz);
      v += r.squaredNorm();
      if (gz != nullptr) gz->segment(k * nz, nz) = -2.0 * inv_b * r;
    }
    return v * inv_b;
  };
  const Eigen::MatrixXd z0 = apply_hx(model, x);
  const GradientReport r = adjoint_grad(dyn, flat(z0), loss, model.depth, tol);
  BatchResult out;
  out.loss = r.loss;
  out.nfe_forward = r.nfe_forward;
  out.nfe_backward = r.nfe_backward;
  out.grad = Eigen::VectorXd::Zero(pg.total);
  out.grad.segment(pg.theta, r.grad.size()) = r.grad;
  const Eigen::MatrixXd a0 =
      Eigen::Map<const Eigen::MatrixXd>(r.adjoint_initial.data(), nz, b);
  hx_vjp(model, x, a0, out.grad.head(pg.theta));
  return out;
}

double tracking_mse(const NodeModel& model, const Eigen::VectorXd& x,
                    const Signal& beta, const std::vector<double>& grid,
                    const Tolerance& tol) {
  if (grid.empty()) throw DomainError("tracking_mse: empty grid");
  Eigen::VectorXd z = apply_hx(model, x);
  double s = 0.0;
  double total = 0.0;
  IvpProblem p;
  p.set_tolerance(tol);
  p.field = wrap_field(model, x);
  for (double g : grid) {
    if (g < s) throw DomainError("tracking_mse: grid must be increasing from 0");
    if (g > s) {
      p.z0 = z;
      p.s_start = s;
      p.s_end = g;
      z = dopri5_integrate(p, {.record = false}).terminal;
      s = g;
    }
    total += (beta(g) - z).squaredNorm() / static_cast<double>(z.size());
  }
  return total / static_cast<double>(grid.size());
}

}  // namespace depthflow
