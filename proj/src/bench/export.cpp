#include "depthflow/bench/export.hpp"

#include <fstream>

#include <fmt/format.h>

#include "depthflow/errors.hpp"

namespace depthflow::bench {

namespace {

void bounds(const GridSpec& g, Index dim, const char* what, Eigen::VectorXd& lo,
            Eigen::VectorXd& hi) {
  if (g.lo.empty() && g.hi.empty()) {
    lo = Eigen::VectorXd::Constant(dim, -3.0);
    hi = Eigen::VectorXd::Constant(dim, 3.0);
    return;
  }
  if (static_cast<Index>(g.lo.size()) != dim || static_cast<Index>(g.hi.size()) != dim) {
    throw ShapeError(fmt::format("{} grid needs {} bounds per side, got {} and {}", what, dim,
                                 g.lo.size(), g.hi.size()));
  }
  lo = Eigen::Map<const Eigen::VectorXd>(g.lo.data(), dim);
  hi = Eigen::Map<const Eigen::VectorXd>(g.hi.data(), dim);
}

// Row-major enumeration of a regular grid in dim <= 2 dimensions.
std::vector<Eigen::VectorXd> grid_points(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                         Index n) {
  std::vector<Eigen::VectorXd> out;
  const auto at = [&](Index d, Index i) {
    return n == 1 ? lo[d] : lo[d] + (hi[d] - lo[d]) * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  if (lo.size() == 1) {
    for (Index i = 0; i < n; ++i) out.push_back(Eigen::VectorXd::Constant(1, at(0, i)));
  } else {
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        Eigen::VectorXd p(2);
        p << at(0, i), at(1, j);
        out.push_back(p);
      }
    }
  }
  return out;
}

std::string header(const char* first, const char* prefix, Index n) {
  std::string h = first;
  for (Index i = 0; i < n; ++i) h += fmt::format(",{}_{}", prefix, i);
  return h;
}

void append(std::string& line, const Eigen::VectorXd& v) {
  for (Index i = 0; i < v.size(); ++i) line += "," + fmt_double(v[i]);
}

void write(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace

std::vector<std::filesystem::path> export_flow(const Checkpoint& checkpoint,
                                               const GridSpec& grid,
                                               const std::filesystem::path& out_dir) {
  if (grid.points < 1 || grid.s_points < 2) throw DomainError("grid needs points >= 1, s_points >= 2");
  const NodeModel model = checkpoint_model(checkpoint);
  const ExperimentConfig cfg = parse_config(checkpoint.config);
  const Index nz = model.state_dim();
  const Index nx = model.input_dim;

  std::vector<Eigen::VectorXd> starts = grid.inputs;
  if (starts.empty()) {
    const Dataset d = make_dataset(cfg.data.name, cfg.data.n, cfg.data.seed, cfg.data.params);
    for (Index k = 0; k < std::min<Index>(d.size(), 32); ++k) starts.push_back(d.inputs.col(k));
  }
  // validate shapes before writing anything
  for (const Eigen::VectorXd& x : starts) {
    if (x.size() != nx) {
      throw ShapeError(fmt::format("trajectory start has {} entries, model input has {}",
                                   x.size(), nx));
    }
  }
  Eigen::VectorXd zlo, zhi, xlo, xhi;
  if (nz <= 2) bounds(grid, nz, "field", zlo, zhi);
  if (nx <= 2) bounds(grid, nx, "boundary", xlo, xhi);

  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;

  {
    std::string csv = header("sample,s", "z", nz) + "\n";
    for (std::size_t k = 0; k < starts.size(); ++k) {
      const Eigen::VectorXd& x = starts[k];
      const double span = sample_depth(model, x);
      IvpProblem p;
      p.set_tolerance(grid.tol);
      p.field = wrap_field(model, x);
      Eigen::VectorXd z = apply_hx(model, x);
      double s_prev = 0.0;
      for (Index i = 0; i < grid.s_points; ++i) {
        const double s = span * static_cast<double>(i) / static_cast<double>(grid.s_points - 1);
        if (i > 0) {
          p.z0 = z;
          p.s_start = s_prev;
          p.s_end = s;
          z = dopri5_integrate(p, {.record = false}).terminal;
        }
        s_prev = s;
        std::string line = fmt::format("{},{}", k, fmt_double(s));
        append(line, z);
        csv += line + "\n";
      }
    }
    written.push_back(out_dir / "trajectories.csv");
    write(written.back(), csv);
  }

  if (nz <= 2) {
    std::string csv = header("point,s", "z", nz) + header("", "dz", nz) + "\n";
    const std::vector<Eigen::VectorXd> pts = grid_points(zlo, zhi, grid.points);
    Eigen::VectorXd dz;
    for (Index i = 0; i < grid.s_points; ++i) {
      const double s = model.depth * static_cast<double>(i) / static_cast<double>(grid.s_points - 1);
      const ParamVector th = eval_theta(model.theta, s);
      for (std::size_t k = 0; k < pts.size(); ++k) {
        // data-controlled fields are shown for the control x = z when the
        // sizes agree, otherwise for x = 0
        const Eigen::VectorXd x = nx == nz ? pts[k] : Eigen::VectorXd::Zero(nx);
        Eigen::MatrixXd out;
        wired_field(model, s, th, x, pts[k], out);
        dz = out.col(0);
        std::string line = fmt::format("{},{}", k, fmt_double(s));
        append(line, pts[k]);
        append(line, dz);
        csv += line + "\n";
      }
    }
    written.push_back(out_dir / "field.csv");
    write(written.back(), csv);
  }

  if (nx <= 2) {
    std::string csv = header("point", "x", nx) + header("", "y", model.output_dim()) + "\n";
    const std::vector<Eigen::VectorXd> pts = grid_points(xlo, xhi, grid.points);
    Eigen::MatrixXd xs(nx, static_cast<Index>(pts.size()));
    for (std::size_t k = 0; k < pts.size(); ++k) xs.col(static_cast<Index>(k)) = pts[k];
    const NodeForward f = node_forward(model, xs, grid.tol);
    for (std::size_t k = 0; k < pts.size(); ++k) {
      std::string line = fmt::format("{}", k);
      append(line, pts[k]);
      append(line, f.output.col(static_cast<Index>(k)));
      csv += line + "\n";
    }
    written.push_back(out_dir / "boundary.csv");
    write(written.back(), csv);
  }

  if (!std::holds_alternative<ConstantTheta>(model.theta)) {
    const Index nt = theta_size(model.theta);
    std::string csv = header("s", "theta", nt) + "\n";
    for (Index i = 0; i < grid.s_points; ++i) {
      const double s = model.depth * static_cast<double>(i) / static_cast<double>(grid.s_points - 1);
      std::string line = fmt_double(s);
      append(line, eval_theta(model.theta, s));
      csv += line + "\n";
    }
    written.push_back(out_dir / "theta.csv");
    write(written.back(), csv);
  }
  return written;
}

}  // namespace depthflow::bench
