#include <doctest.h>

#include <cmath>

#include "depthflow/errors.hpp"
#include "depthflow/models.hpp"
#include "depthflow/train.hpp"
#include "oracle.hpp"

using namespace depthflow;

namespace {

const Tolerance kTight{1e-10, 1e-10};

NodeModel base_model(Index n_x, Augmentation aug, InputMode mode,
                     std::vector<Index> hidden = {6}, std::uint64_t seed = 1) {
  NodeModel m;
  m.input_dim = n_x;
  m.augmentation = std::move(aug);
  m.field.input_mode = mode;
  const Index nz = m.state_dim();
  m.field = FieldSpec::make(nz, m.field_output_dim(), hidden, Activation::Tanh,
                            Activation::Identity, mode,
                            mode == InputMode::DataControlled ? n_x : 0);
  m.theta = make_constant(init_params(m.field, seed));
  m.output = LinearMap::random(nz, 1, seed + 7);
  return m;
}

Eigen::MatrixXd sample_inputs(Index n_x, Index b) {
  Eigen::MatrixXd x(n_x, b);
  for (Index k = 0; k < b; ++k) {
    for (Index i = 0; i < n_x; ++i) {
      x(i, k) = std::sin(1.7 * static_cast<double>(k + 1) + 0.9 * static_cast<double>(i));
    }
  }
  return x;
}

}  // namespace

TEST_CASE("apply_hx mappings") {
  NodeModel m;
  m.input_dim = 2;
  m.augmentation = {AugmentKind::Zero, 2, 1, std::nullopt};
  const Eigen::VectorXd z = apply_hx(m, Eigen::VectorXd(Eigen::Vector2d(1.0, -1.0)));
  CHECK(z.size() == 4);
  CHECK(z[0] == 1.0);
  CHECK(z[1] == -1.0);
  CHECK(z[2] == 0.0);
  CHECK(z[3] == 0.0);

  NodeModel none;
  none.input_dim = 1;
  CHECK(apply_hx(none, Eigen::VectorXd(Eigen::VectorXd::Constant(1, 3.0)))[0] == 3.0);

  NodeModel il;
  il.input_dim = 2;
  il.augmentation = {AugmentKind::InputLayer, 0, 1, LinearMap::padded_identity(2, 4)};
  const Eigen::VectorXd zi = apply_hx(il, Eigen::VectorXd(Eigen::Vector2d(1.0, 2.0)));
  CHECK(zi == Eigen::Vector4d(1.0, 2.0, 0.0, 0.0));

  NodeModel pres;
  pres.input_dim = 2;
  pres.augmentation = {AugmentKind::InputLayerPreserving, 3, 1, LinearMap::random(2, 3, 4)};
  const Eigen::VectorXd zp = apply_hx(pres, Eigen::VectorXd(Eigen::Vector2d(0.5, -0.25)));
  CHECK(zp.size() == 5);
  CHECK(zp[0] == 0.5);
  CHECK(zp[1] == -0.25);

  NodeModel ho;
  ho.input_dim = 2;
  ho.augmentation = {AugmentKind::HigherOrder, 0, 3, std::nullopt};
  const Eigen::VectorXd zh = apply_hx(ho, Eigen::VectorXd(Eigen::Vector2d(0.5, -0.25)));
  CHECK(zh.size() == 6);
  CHECK(zh.tail(4).isZero(0.0));

  NodeModel sel;
  sel.input_dim = 3;
  sel.augmentation = {AugmentKind::SelectiveHigherOrder, 2, 1, std::nullopt};
  const Eigen::VectorXd zs = apply_hx(sel, Eigen::VectorXd(Eigen::Vector3d(1.0, 2.0, 3.0)));
  CHECK(zs == Eigen::Vector4d(1.0, 0.0, 2.0, 3.0));

  CHECK_THROWS_AS(apply_hx(m, Eigen::VectorXd(Eigen::Vector3d(1, 2, 3))), ShapeError);
}

TEST_CASE("second-order drift with zero acceleration") {
  NodeModel m;
  m.input_dim = 1;
  m.augmentation = {AugmentKind::HigherOrder, 0, 2, std::nullopt};
  m.field = FieldSpec::make(2, 1, {4}, Activation::Tanh);
  m.theta = make_constant(ParamVector::Zero(param_count(m.field)));
  m.output = LinearMap::identity(2);
  m.validate();
  IvpProblem p;
  p.field = wrap_field(m, Eigen::VectorXd::Zero(1));
  p.z0 = Eigen::Vector2d(0.0, 1.0);
  p.rtol = p.atol = 1e-10;
  const Eigen::VectorXd z = dopri5_integrate(p).terminal;
  CHECK(std::abs(z[0] - 1.0) < 1e-9);
  CHECK(std::abs(z[1] - 1.0) < 1e-12);
}

TEST_CASE("handcrafted data-controlled field meets the epsilon bound") {
  for (double eps : {0.1, 0.01}) {
    const double theta = std::log(4.0 / eps);
    NodeModel m;
    m.input_dim = 1;
    m.field = FieldSpec::make(1, 1, {}, Activation::Identity, Activation::Identity,
                              InputMode::DataControlled, 1);
    ParamVector p(3);
    p << -theta, -theta, 0.0;
    m.theta = make_constant(p);
    m.output = LinearMap::identity(1);
    m.validate();
    const NodeForward f = node_forward(m, Eigen::MatrixXd::Constant(1, 1, 1.0), kTight);
    const double gap = std::abs(f.output(0, 0) + 1.0);
    CHECK(gap == doctest::Approx(2.0 * std::exp(-theta)).epsilon(1e-8));
    CHECK(gap < eps);
    // Symmetry of the closed form: x = -1 lands near +1.
    const NodeForward g = node_forward(m, Eigen::MatrixXd::Constant(1, 1, -1.0), kTight);
    CHECK(std::abs(g.output(0, 0) - 1.0) < eps);
  }
}

TEST_CASE("depth-concat with an s-blind network equals the autonomous field") {
  NodeModel a = base_model(2, {}, InputMode::Autonomous, {8}, 3);
  NodeModel c = base_model(2, {}, InputMode::DepthConcat, {8}, 3);
  // Copy autonomous weights into the concat net and zero the s column.
  ParamVector pc = ParamVector::Zero(param_count(c.field));
  const ParamVector pa = std::get<ConstantTheta>(a.theta).theta;
  const auto la = param_layout(a.field);
  const auto lc = param_layout(c.field);
  for (std::size_t l = 0; l < la.size(); ++l) {
    for (Index r = 0; r < la[l].rows; ++r) {
      for (Index col = 0; col < la[l].cols; ++col) {
        pc[lc[l].weight_offset + r * lc[l].cols + col] =
            pa[la[l].weight_offset + r * la[l].cols + col];
      }
      pc[lc[l].bias_offset + r] = pa[la[l].bias_offset + r];
    }
  }
  c.theta = make_constant(pc);
  const Eigen::MatrixXd x = sample_inputs(2, 5);
  const Tolerance tol{1e-8, 1e-8};
  const NodeForward fa = node_forward(a, x, tol);
  const NodeForward fc = node_forward(c, x, tol);
  CHECK((fa.terminal - fc.terminal).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("identity flow") {
  NodeModel m;
  m.input_dim = 3;
  m.field = FieldSpec::make(3, 3, {4}, Activation::Tanh);
  m.theta = make_constant(ParamVector::Zero(param_count(m.field)));
  m.output = LinearMap::identity(3);
  const Eigen::MatrixXd x = sample_inputs(3, 4);
  CHECK(node_forward(m, x, kTight).output == x);
}

TEST_CASE("zero augmentation equals input-layer augmentation with padded identity") {
  NodeModel z = base_model(2, {AugmentKind::Zero, 2, 1, std::nullopt}, InputMode::Autonomous);
  NodeModel il = z;
  il.augmentation = {AugmentKind::InputLayer, 0, 1, LinearMap::padded_identity(2, 4)};
  il.validate();
  const Eigen::MatrixXd x = sample_inputs(2, 6);
  const NodeForward a = node_forward(z, x, {1e-8, 1e-8}, true);
  const NodeForward b = node_forward(il, x, {1e-8, 1e-8}, true);
  CHECK(a.solutions[0].grid == b.solutions[0].grid);
  CHECK((a.terminal - b.terminal).norm() == 0.0);
}

TEST_CASE("adaptive depth with a constant depth network equals the fixed depth") {
  NodeModel m = base_model(2, {}, InputMode::DepthConcat);
  m.depth = 1.7;
  NodeModel ad = m;
  ad.hypernet = DepthHypernet::zeros(2, 8);
  ad.hypernet->omega[ad.hypernet->omega.size() - 1] = 0.7;  // g = |1 + 0.7|
  const Eigen::MatrixXd x = sample_inputs(2, 3);
  const NodeForward f = node_forward(m, x, kTight);
  const NodeForward g = node_forward(ad, x, kTight);
  for (double d : g.depths) CHECK(d == doctest::Approx(1.7).epsilon(1e-15));
  CHECK((f.output - g.output).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("manually set depths differ per input") {
  // g(x) = |1 + relu(x) * 2 + relu(-x) * 0|: g(-1) = 1, g(1) = 3.
  DepthHypernet net = DepthHypernet::zeros(1, 8);
  const auto layout = param_layout(net.spec);
  net.omega[layout[0].weight_offset] = 1.0;  // hidden unit 0 = relu(x)
  net.omega[layout[1].weight_offset] = 2.0;  // output weight on unit 0
  CHECK(eval_depth(net, Eigen::VectorXd::Constant(1, -1.0)) == 1.0);
  CHECK(eval_depth(net, Eigen::VectorXd::Constant(1, 1.0)) == 3.0);
  NodeModel m = base_model(1, {}, InputMode::DepthConcat);
  m.hypernet = net;
  Eigen::MatrixXd x(1, 2);
  x << -1.0, 1.0;
  const NodeForward f = node_forward(m, x, {1e-8, 1e-8}, true);
  CHECK(f.solutions.size() == 2);
  CHECK(f.solutions[0].grid.back() == 1.0);
  CHECK(f.solutions[1].grid.back() == 3.0);
}

TEST_CASE("hypernet output is nonnegative") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    DepthHypernet net = DepthHypernet::make(2, 8, seed);
    net.omega *= 3.0;
    CHECK(eval_depth(net, Eigen::Vector2d(std::sin(seed), std::cos(seed)).eval()) >= 0.0);
  }
  CHECK(eval_depth(DepthHypernet::zeros(3, 8), Eigen::VectorXd(Eigen::Vector3d(1, 2, 3))) == 1.0);
}

TEST_CASE("second-order field has fewer parameters at equal state size") {
  NodeModel first = base_model(2, {AugmentKind::Zero, 2, 1, std::nullopt},
                               InputMode::Autonomous, {16});
  NodeModel second = base_model(2, {AugmentKind::HigherOrder, 0, 2, std::nullopt},
                                InputMode::Autonomous, {16});
  CHECK(first.state_dim() == second.state_dim());
  CHECK(second.field.output_dim() == second.state_dim() / 2);
  CHECK(param_count(second.field) < param_count(first.field));
}

TEST_CASE("1-D autonomous flows keep the ordering of their inputs") {
  NodeModel m = base_model(1, {}, InputMode::Autonomous, {16, 16}, 11);
  std::get<ConstantTheta>(m.theta).theta *= 3.0;
  m.output = LinearMap::identity(1);
  const Eigen::MatrixXd x = Eigen::RowVectorXd::LinSpaced(41, -2.0, 2.0);
  const NodeForward f = node_forward(m, x, {1e-8, 1e-8});
  for (Index k = 1; k < x.cols(); ++k) CHECK(f.output(0, k) > f.output(0, k - 1));
}

TEST_CASE("parameter flattening round-trips") {
  NodeModel m = base_model(2, {AugmentKind::InputLayer, 0, 1, LinearMap::random(2, 3, 2)},
                           InputMode::DataControlled);
  m.hypernet = DepthHypernet::make(2, 8, 3);
  const Eigen::VectorXd p = get_params(m);
  CHECK(p.size() == model_param_count(m));
  NodeModel copy = m;
  set_params(copy, 2.0 * p);
  CHECK((get_params(copy) - 2.0 * p).norm() < 1e-15);
  CHECK_THROWS_AS(set_params(copy, Eigen::VectorXd::Zero(3)), ShapeError);
}

TEST_CASE("validation catches inconsistent models") {
  NodeModel m = base_model(2, {}, InputMode::Autonomous);
  m.validate();
  NodeModel bad = m;
  bad.output = LinearMap::identity(3);
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  bad = m;
  bad.augmentation = {AugmentKind::HigherOrder, 0, 2, std::nullopt};
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  bad = m;
  bad.depth = 0.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("full-model gradients match finite differences for every wiring") {
  struct Case {
    const char* name;
    Index n_x;
    Augmentation aug;
    InputMode mode;
    int param;  // 0 constant, 1 galerkin, 2 stacked
    bool adaptive;
  };
  const std::vector<Case> cases = {
      {"vanilla", 2, {}, InputMode::Autonomous, 0, false},
      {"concat-galerkin", 2, {}, InputMode::DepthConcat, 1, false},
      {"control-stacked", 2, {}, InputMode::DataControlled, 2, false},
      {"zero-aug", 2, {AugmentKind::Zero, 1, 1, std::nullopt}, InputMode::Autonomous, 0, false},
      {"input-layer", 2, {AugmentKind::InputLayer, 0, 1, LinearMap::random(2, 3, 5)},
       InputMode::Autonomous, 1, false},
      {"preserving", 2, {AugmentKind::InputLayerPreserving, 2, 1, LinearMap::random(2, 2, 6)},
       InputMode::DepthConcat, 0, false},
      {"second-order", 2, {AugmentKind::HigherOrder, 0, 2, std::nullopt},
       InputMode::Autonomous, 2, false},
      {"second-order-il", 2, {AugmentKind::HigherOrder, 0, 2, LinearMap::random(2, 2, 8)},
       InputMode::DataControlled, 0, false},
      {"third-order", 1, {AugmentKind::HigherOrder, 1, 3, std::nullopt},
       InputMode::Autonomous, 0, false},
      {"selective", 3, {AugmentKind::SelectiveHigherOrder, 2, 1, std::nullopt},
       InputMode::Autonomous, 1, false},
      {"selective-il", 2, {AugmentKind::SelectiveHigherOrder, 2, 1, LinearMap::random(2, 3, 9)},
       InputMode::DepthConcat, 0, false},
      {"adaptive", 1, {}, InputMode::DepthConcat, 0, true},
  };
  for (const Case& c : cases) {
    CAPTURE(c.name);
    NodeModel m = base_model(c.n_x, c.aug, c.mode, {5}, 21);
    const ParamVector th = std::get<ConstantTheta>(m.theta).theta;
    if (c.param == 1) m.theta = make_galerkin(BasisSet::fourier(1, 1.0), th, 0.3, 4);
    if (c.param == 2) m.theta = make_stacked(2, 1.0, th);
    if (c.adaptive) {
      m.hypernet = DepthHypernet::make(c.n_x, 8, 2);
      m.theta = make_constant(th);
    }
    m.validate();
    const Eigen::MatrixXd x = sample_inputs(c.n_x, 4);
    Eigen::MatrixXd y(1, 4);
    y << 1.0, -1.0, -1.0, 1.0;
    const Regularizer reg{RegularizerKind::IntegralKinetic, 0.05};
    const BatchResult r = model_loss_grad(m, x, y, LossKind::Mse, reg, {1e-9, 1e-9});
    const auto f = [&](const Eigen::VectorXd& p) {
      NodeModel mm = m;
      set_params(mm, p);
      return model_loss(mm, x, y, LossKind::Mse, reg, kTight);
    };
    const Eigen::VectorXd fd = oracle::central_diff(f, get_params(m));
    CHECK(r.grad.size() == fd.size());
    CHECK(oracle::rel_err(r.grad, fd) < 1e-4);
    CHECK(std::abs(r.loss - f(get_params(m))) < 1e-7);
  }
}
