#include "depthflow/bench/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "depthflow/models.hpp"

namespace depthflow::bench {

namespace {

struct Problem {
  NodeModel model;
  Eigen::MatrixXd x;
  Eigen::MatrixXd target;  // n_z x B
};

const char* kVariants[] = {"vanilla", "depth-concat", "data-controlled", "higher-order"};
const char* kParams[] = {"constant", "galerkin", "stacked"};
const char* kLosses[] = {"terminal", "integral", "theta-dependent"};

Problem make_problem(const std::string& variant, const std::string& param, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919 + 13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Problem p;
  const Index n_x = 2;
  const Index b = 3;
  NodeModel& m = p.model;
  m.input_dim = n_x;
  InputMode mode = InputMode::Autonomous;
  if (variant == "depth-concat") mode = InputMode::DepthConcat;
  if (variant == "data-controlled") mode = InputMode::DataControlled;
  if (variant == "higher-order") m.augmentation = {AugmentKind::HigherOrder, 0, 2, std::nullopt};
  const Index nz = m.state_dim();
  m.field = FieldSpec::make(nz, m.field_output_dim(), {5}, Activation::Tanh,
                            Activation::Identity, mode,
                            mode == InputMode::DataControlled ? n_x : 0);
  const ParamVector theta = 1.5 * init_params(m.field, seed);
  if (param == "constant") {
    m.theta = make_constant(theta);
  } else if (param == "galerkin") {
    m.theta = make_galerkin(BasisSet::fourier(1, 1.0), theta, 0.5, seed + 1);
  } else {
    m.theta = make_stacked(3, 1.0, theta);
    auto& st = std::get<StackedTheta>(m.theta);
    for (std::size_t i = 1; i < st.thetas.size(); ++i) {
      st.thetas[i] = 1.5 * init_params(m.field, seed + 10 * i);
    }
  }
  m.output = LinearMap::identity(nz);
  p.x.resize(n_x, b);
  for (Index i = 0; i < p.x.size(); ++i) p.x.data()[i] = u(rng);
  p.target.resize(nz, b);
  for (Index i = 0; i < p.target.size(); ++i) p.target.data()[i] = u(rng);
  return p;
}

LossSpec make_loss(const std::string& kind, const Eigen::MatrixXd& target) {
  const Eigen::VectorXd t = target.reshaped();
  const double inv_b = 1.0 / static_cast<double>(target.cols());
  LossSpec spec;
  spec.terminal = [t, inv_b](const Eigen::VectorXd& z, const ParamVector&, Eigen::VectorXd* gz,
                             Eigen::VectorXd*) {
    const Eigen::VectorXd r = z - t;
    if (gz != nullptr) *gz = 2.0 * inv_b * r;
    return inv_b * r.squaredNorm();
  };
  if (kind == "integral") {
    spec.running = [t, inv_b](double s, const Eigen::VectorXd& z, const ParamVector&,
                              Eigen::VectorXd* gz, Eigen::VectorXd*) {
      const Eigen::VectorXd r = z - std::cos(3.0 * s) * t;
      if (gz != nullptr) *gz = 2.0 * inv_b * r;
      return inv_b * r.squaredNorm();
    };
  } else if (kind == "theta-dependent") {
    spec.theta_dependent = true;
    spec.running = [](double s, const Eigen::VectorXd& z, const ParamVector& th,
                      Eigen::VectorXd* gz, Eigen::VectorXd* gt) {
      if (gz != nullptr) gz->setZero(z.size());
      const double w = 0.05 * (1.0 + s);
      if (gt != nullptr) *gt = 2.0 * w * th;
      return w * th.squaredNorm();
    };
    const TerminalLossFn base = spec.terminal;
    spec.terminal = [base](const Eigen::VectorXd& z, const ParamVector& th, Eigen::VectorXd* gz,
                           Eigen::VectorXd* gt) {
      if (gt != nullptr) *gt = 0.2 * th.array().sin().matrix().cwiseProduct(th.array().cos().matrix());
      return base(z, th, gz, nullptr) + 0.1 * th.array().sin().square().sum();
    };
  }
  return spec;
}

double rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-6);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

Eigen::VectorXd central_fd(Problem& p, const LossSpec& loss, const GradcheckOptions& o) {
  const Eigen::VectorXd base = flatten(p.model.theta);
  Eigen::VectorXd g(base.size());
  NodeModel m = p.model;
  const NodeDynamics dyn(m, p.x);
  const Eigen::VectorXd z0 = apply_hx(m, p.x).reshaped();
  Eigen::VectorXd w = base;
  for (Index i = 0; i < base.size(); ++i) {
    w[i] = base[i] + o.fd_step;
    assign_flat(m.theta, w);
    const double up = forward_loss(dyn, z0, loss, 1.0, o.fd_tol).loss;
    w[i] = base[i] - o.fd_step;
    assign_flat(m.theta, w);
    const double down = forward_loss(dyn, z0, loss, 1.0, o.fd_tol).loss;
    w[i] = base[i];
    g[i] = (up - down) / (2.0 * o.fd_step);
  }
  return g;
}

Eigen::VectorXd adjoint(const Problem& p, const LossSpec& loss, const GradcheckOptions& o) {
  const NodeDynamics dyn(p.model, p.x);
  Eigen::VectorXd g =
      adjoint_grad(dyn, apply_hx(p.model, p.x).reshaped(), loss, 1.0, o.tol).grad;
  if (o.corrupt) g.array() *= 1.01;
  return g;
}

}  // namespace

std::vector<GradcheckCell> run_gradcheck(const GradcheckOptions& o) {
  std::vector<GradcheckCell> cells;
  for (const char* v : kVariants) {
    for (const char* pa : kParams) {
      for (const char* lo : kLosses) {
        GradcheckCell c{v, pa, lo, 0.0, o.threshold, 0, false};
        for (int s = 0; s < o.seeds; ++s) {
          Problem p = make_problem(v, pa, static_cast<std::uint64_t>(s) + 1);
          const LossSpec loss = make_loss(lo, p.target);
          const Eigen::VectorXd fd = central_fd(p, loss, o);
          c.max_rel_error = std::max(c.max_rel_error, rel_error(adjoint(p, loss, o), fd));
          ++c.problems;
        }
        c.passed = c.max_rel_error < c.threshold;
        cells.push_back(c);
      }
    }
  }
  // reductions: one-function Galerkin and one-segment stacked versus constant
  for (const char* v : kVariants) {
    for (const char* lo : kLosses) {
      GradcheckCell g{v, "galerkin-1 = constant", lo, 0.0, o.reduction_threshold, 0, false};
      GradcheckCell st{v, "stacked-1 = constant", lo, 0.0, o.reduction_threshold, 0, false};
      for (int s = 0; s < o.seeds; ++s) {
        Problem p = make_problem(v, "constant", static_cast<std::uint64_t>(s) + 1);
        const LossSpec loss = make_loss(lo, p.target);
        const Eigen::VectorXd ref = adjoint(p, loss, {.tol = o.tol});
        const ParamVector th = std::get<ConstantTheta>(p.model.theta).theta;
        Problem pg = p;
        GalerkinTheta gt;
        gt.basis = BasisSet::polynomial(1, 1.0);
        gt.alpha = RowMatrix(1, th.size());
        gt.alpha.row(0) = th.transpose();
        pg.model.theta = gt;
        g.max_rel_error = std::max(g.max_rel_error, rel_error(adjoint(pg, loss, o), ref));
        Problem ps = p;
        ps.model.theta = make_stacked(1, 1.0, th);
        st.max_rel_error = std::max(st.max_rel_error, rel_error(adjoint(ps, loss, o), ref));
        ++g.problems;
        ++st.problems;
      }
      g.passed = g.max_rel_error < g.threshold;
      st.passed = st.max_rel_error < st.threshold;
      cells.push_back(g);
      cells.push_back(st);
    }
  }
  return cells;
}

bool all_passed(const std::vector<GradcheckCell>& cells) {
  return std::all_of(cells.begin(), cells.end(), [](const GradcheckCell& c) { return c.passed; });
}

std::string format_gradcheck(const std::vector<GradcheckCell>& cells) {
  std::string out = fmt::format("{:<16} {:<22} {:<16} {:>12} {:>10}  {}\n", "variant",
                                "parametrization", "loss", "max rel err", "threshold", "status");
  for (const GradcheckCell& c : cells) {
    out += fmt::format("{:<16} {:<22} {:<16} {:>12.3e} {:>10.1e}  {}\n", c.variant,
                       c.parametrization, c.loss, c.max_rel_error, c.threshold,
                       c.passed ? "ok" : "FAIL");
  }
  return out;
}

}  // namespace depthflow::bench
