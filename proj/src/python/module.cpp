// Python bindings. JSON crosses the boundary as text; the package wrapper
// parses it.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "depthflow/bench/config.hpp"
#include "depthflow/bench/data.hpp"
#include "depthflow/bench/experiment.hpp"
#include "depthflow/bench/export.hpp"
#include "depthflow/bench/gradcheck.hpp"
#include "depthflow/errors.hpp"
#include "depthflow/models.hpp"
#include "depthflow/ode.hpp"

namespace py = pybind11;
using namespace depthflow;
using namespace depthflow::bench;

namespace {

py::dict solution_dict(const Solution& s) {
  Eigen::MatrixXd states(s.states.empty() ? 0 : s.states.front().size(),
                         static_cast<Index>(s.states.size()));
  for (std::size_t i = 0; i < s.states.size(); ++i) states.col(static_cast<Index>(i)) = s.states[i];
  py::dict d;
  d["s"] = s.grid;
  d["z"] = states;
  d["terminal"] = s.terminal;
  d["nfe"] = s.nfe;
  d["rejected"] = s.rejected;
  return d;
}

IvpProblem make_problem(const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& f,
                        const Eigen::VectorXd& z0, double s0, double s1, double rtol,
                        double atol) {
  IvpProblem p;
  p.field = [f](double s, const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
    py::gil_scoped_acquire gil;
    dz = f(s, z);
  };
  p.z0 = z0;
  p.s_start = s0;
  p.s_end = s1;
  p.rtol = rtol;
  p.atol = atol;
  return p;
}

class Model {
 public:
  explicit Model(const std::filesystem::path& checkpoint)
      : checkpoint_(load_checkpoint(checkpoint)), model_(checkpoint_model(checkpoint_)) {}

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, double rtol, double atol) const {
    return node_forward(model_, x, {rtol, atol}).output;
  }
  py::dict trajectory(const Eigen::VectorXd& x, double rtol, double atol) const {
    return solution_dict(node_trajectory(model_, x, {rtol, atol}));
  }
  Eigen::VectorXd params() const { return get_params(model_); }
  Index input_dim() const { return model_.input_dim; }
  Index state_dim() const { return model_.state_dim(); }
  Index output_dim() const { return model_.output_dim(); }
  std::string config() const { return checkpoint_.config.dump(); }

 private:
  Checkpoint checkpoint_;
  NodeModel model_;
};

}  // namespace

PYBIND11_MODULE(_depthflow, m) {
  m.doc() = "Neural ODE engine with depth-varying parameters";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);
  py::register_exception<StiffnessError>(m, "StiffnessError", PyExc_ArithmeticError);

  m.def(
      "dopri5",
      [](const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& f,
         const Eigen::VectorXd& z0, double s0, double s1, double rtol, double atol) {
        return solution_dict(dopri5_integrate(make_problem(f, z0, s0, s1, rtol, atol)));
      },
      py::arg("f"), py::arg("z0"), py::arg("s0") = 0.0, py::arg("s1") = 1.0,
      py::arg("rtol") = 1e-6, py::arg("atol") = 1e-6,
      "Adaptive Dormand-Prince solve of dz/ds = f(s, z).");
  m.def(
      "rk4",
      [](const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& f,
         const Eigen::VectorXd& z0, double s0, double s1, long steps) {
        return solution_dict(rk4_integrate(make_problem(f, z0, s0, s1, 0.0, 0.0), steps));
      },
      py::arg("f"), py::arg("z0"), py::arg("s0") = 0.0, py::arg("s1") = 1.0,
      py::arg("steps") = 100);

  m.def(
      "make_dataset",
      [](const std::string& name, Index n, std::uint64_t seed, double radius, Index dim,
         double noise, double sigma) {
        DataParams p;
        p.radius = radius;
        p.dim = dim;
        p.noise = noise;
        p.sigma = sigma;
        const Dataset d = make_dataset(name, n, seed, p);
        py::dict out;
        out["inputs"] = d.inputs;
        out["targets"] = d.targets;
        out["grid"] = d.grid;
        out["signal"] = d.signal;
        return out;
      },
      py::arg("name"), py::arg("n"), py::arg("seed") = 0, py::arg("radius") = 1.0,
      py::arg("dim") = 2, py::arg("noise") = 0.1, py::arg("sigma") = 0.3);
  m.def("dataset_names", &dataset_names);

  m.def("preset_names", &preset_names);
  m.def("preset_json", [](const std::string& name) { return preset(name).dump(); });
  m.def("preset_description", &preset_description);

  m.def(
      "run_experiment_json",
      [](const std::string& config, const std::string& out_dir) {
        RunOptions o;
        o.out_dir = out_dir;
        ExperimentReport r;
        {
          py::gil_scoped_release release;
          r = run_experiment(nlohmann::json::parse(config), o);
        }
        return dump_report(r);
      },
      py::arg("config"), py::arg("out_dir") = "");

  m.def(
      "gradcheck",
      [](int seeds, bool corrupt) {
        GradcheckOptions o;
        o.seeds = seeds;
        o.corrupt = corrupt;
        std::vector<GradcheckCell> cells;
        {
          py::gil_scoped_release release;
          cells = run_gradcheck(o);
        }
        py::list out;
        for (const GradcheckCell& c : cells) {
          py::dict d;
          d["variant"] = c.variant;
          d["parametrization"] = c.parametrization;
          d["loss"] = c.loss;
          d["max_rel_error"] = c.max_rel_error;
          d["threshold"] = c.threshold;
          d["passed"] = c.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("seeds") = 20, py::arg("corrupt") = false);

  m.def(
      "export_flow",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir,
         Index points, Index s_points) {
        GridSpec g;
        g.points = points;
        g.s_points = s_points;
        return export_flow(load_checkpoint(checkpoint), g, out_dir);
      },
      py::arg("checkpoint"), py::arg("out_dir"), py::arg("points") = 25,
      py::arg("s_points") = 11);

  py::class_<Model>(m, "Model")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def("forward", &Model::forward, py::arg("x"), py::arg("rtol") = 1e-6,
           py::arg("atol") = 1e-6, "Outputs for inputs stored column-wise.")
      .def("trajectory", &Model::trajectory, py::arg("x"), py::arg("rtol") = 1e-6,
           py::arg("atol") = 1e-6)
      .def_property_readonly("params", &Model::params)
      .def_property_readonly("input_dim", &Model::input_dim)
      .def_property_readonly("state_dim", &Model::state_dim)
      .def_property_readonly("output_dim", &Model::output_dim)
      .def_property_readonly("config_json", &Model::config);
}
