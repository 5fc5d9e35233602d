#pragma once

// Optimizers, losses, regularizers and the training loop.

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "depthflow/adjoint.hpp"
#include "depthflow/models.hpp"

namespace depthflow {

enum class OptimizerKind { Adam, AdamW };
OptimizerKind parse_optimizer_kind(std::string_view name);
std::string_view to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimizerState {
  OptimizerConfig config;
  long step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;

  explicit OptimizerState(const OptimizerConfig& c = {}) : config(c) {}
};

/// One Adam / AdamW update of `params` in place. `lr` overrides config.lr
/// when positive or zero (used by schedules); pass a negative value to keep it.
void optimizer_step(OptimizerState& state, Eigen::VectorXd& params,
                    const Eigen::VectorXd& grads, double lr = -1.0);

enum class LossKind { Mse, L1 };
LossKind parse_loss_kind(std::string_view name);
std::string_view to_string(LossKind k);

struct LossValue {
  double value = 0.0;
  Eigen::MatrixXd grad;  // d value / d predictions
};

/// Mean over all entries of (pred - target)^2 or |pred - target|.
LossValue loss_eval(LossKind kind, const Eigen::MatrixXd& predictions,
                    const Eigen::MatrixXd& targets);

enum class RegularizerKind { None, IntegralKinetic, TerminalFixedPoint };
RegularizerKind parse_regularizer_kind(std::string_view name);
std::string_view to_string(RegularizerKind k);

struct Regularizer {
  RegularizerKind kind = RegularizerKind::None;
  double weight = 0.0;
};

/// lambda / B * sum_k ||f_k||, as a running (integral-kinetic) or terminal
/// (fixed-point, evaluated at `depth`) term. Both depend on theta.
LossSpec regularizer_loss(const Regularizer& reg, const Dynamics& dyn, double depth);

/// Integral-kinetic value and theta gradient obtained the classic way: the
/// state carries an extra quadrature component e with de/ds = lambda/B *
/// sum_k ||f_k||, and the loss is the terminal value e(S).
GradientReport integral_kinetic_by_augmentation(const Dynamics& dyn,
                                                const Eigen::VectorXd& z0,
                                                double weight, double depth,
                                                const Tolerance& tol);

struct LrSchedule {
  double gamma = 1.0;  // 1 means constant
  long every = 0;      // epochs between decays
  double at(double lr, long epoch) const;
};

struct BatchResult {
  double loss = 0.0;
  Eigen::VectorXd grad;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  long nfe_forward = 0;
  long nfe_backward = 0;
};

/// Loss and gradient for the samples listed in `batch` at `params`.
using BatchObjective = std::function<BatchResult(const Eigen::VectorXd& params,
                                                 const std::vector<Index>& batch)>;

struct FitConfig {
  long epochs = 0;
  Index batch_size = 0;  // 0 means the whole dataset
  OptimizerConfig optimizer;
  LrSchedule schedule;
  std::uint64_t seed = 0;
  bool shuffle = true;
  /// Called after every epoch; return false to stop.
  std::function<bool(long epoch, double loss)> on_epoch;
};

struct EpochRecord {
  double loss = 0.0;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  double nfe_forward = 0.0;
};

struct FitResult {
  Eigen::VectorXd params;
  std::vector<EpochRecord> history;
  bool diverged = false;
  std::string error;
};

FitResult fit(Eigen::VectorXd params, Index n_samples, const BatchObjective& objective,
              const FitConfig& config);

struct TrainConfig {
  long epochs = 0;
  Index batch_size = 0;
  OptimizerConfig optimizer;
  LrSchedule schedule;
  LossKind loss = LossKind::Mse;
  Regularizer regularizer;
  Tolerance tol;
  std::uint64_t seed = 0;
};

/// Supervised batch loss (mean over the batch) and its gradient with respect
/// to get_params(model).
BatchResult model_loss_grad(const NodeModel& model, const Eigen::MatrixXd& x,
                            const Eigen::MatrixXd& y, LossKind loss,
                            const Regularizer& reg, const Tolerance& tol);

/// Loss value only, same definition as model_loss_grad.
double model_loss(const NodeModel& model, const Eigen::MatrixXd& x,
                  const Eigen::MatrixXd& y, LossKind loss, const Regularizer& reg,
                  const Tolerance& tol);

/// Sign agreement for scalar outputs, NaN otherwise.
double sign_accuracy(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets);

struct TrainResult {
  NodeModel model;
  std::vector<EpochRecord> history;
  bool diverged = false;
  std::string error;
};

TrainResult train_loop(NodeModel model, const Eigen::MatrixXd& inputs,
                       const Eigen::MatrixXd& targets, const TrainConfig& config);

/// Integral tracking objective: l(s) = mean_k ||beta(s) - z_k(s)||^2 over the
/// trajectories started from the columns of x.
using Signal = std::function<Eigen::VectorXd(double s)>;
BatchResult tracking_loss_grad(const NodeModel& model, const Eigen::MatrixXd& x,
                               const Signal& beta, const Tolerance& tol);

/// Mean over grid points and components of (beta(s) - z(s))^2 for the
/// trajectory from x.
double tracking_mse(const NodeModel& model, const Eigen::VectorXd& x,
                    const Signal& beta, const std::vector<double>& grid,
                    const Tolerance& tol);

}  // namespace depthflow
