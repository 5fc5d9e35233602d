#include "depthflow/bench/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "depthflow/errors.hpp"

namespace depthflow::bench {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double num_from(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> linspace(double a, double b, Index n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] =
        a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return out;
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& m, const std::vector<Index>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Index>(i)) = m.col(idx[i]);
  return out;
}

FitConfig fit_config(const ExperimentConfig& cfg) {
  FitConfig f;
  f.epochs = cfg.train.epochs;
  f.batch_size = cfg.train.batch_size;
  f.optimizer = cfg.train.optimizer;
  f.schedule = cfg.train.schedule;
  f.seed = cfg.seed;
  return f;
}

void fill_history(RunResult& r, const std::vector<EpochRecord>& history) {
  r.history = history;
  r.nfe_trace.clear();
  for (const EpochRecord& e : history) r.nfe_trace.push_back(e.nfe_forward);
  if (!history.empty()) {
    const std::size_t tail = std::max<std::size_t>(1, history.size() / 10);
    double s = 0.0;
    for (std::size_t i = history.size() - tail; i < history.size(); ++i) {
      s += history[i].nfe_forward;
    }
    r.metrics["nfe_converged"] = s / static_cast<double>(tail);
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

void write_history_csv(const RunResult& r, const std::filesystem::path& path) {
  std::string s = "epoch,loss,accuracy,nfe_forward\n";
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    const EpochRecord& e = r.history[i];
    s += fmt::format("{},{},{},{}\n", i, fmt_double(e.loss), fmt_double(e.accuracy),
                     fmt_double(e.nfe_forward));
  }
  write_text(path, s);
}

void run_supervised(const ExperimentConfig& cfg, const Dataset& data, RunResult& r,
                    NodeModel& model) {
  model = build_model(cfg.model, data.inputs.rows(), data.targets.rows(), cfg.seed);
  r.metrics["param_count"] = static_cast<double>(model_param_count(model));
  r.metrics["field_param_count"] = static_cast<double>(param_count(model.field));
  r.metrics["state_dim"] = static_cast<double>(model.state_dim());
  TrainResult t = train_loop(model, data.inputs, data.targets, train_config(cfg));
  model = t.model;
  fill_history(r, t.history);
  r.diverged = t.diverged;
  r.error = t.error;
  try {
    const NodeForward f = node_forward(model, data.inputs, cfg.tol);
    r.final_loss = loss_eval(cfg.train.loss, f.output, data.targets).value;
    r.accuracy = sign_accuracy(f.output, data.targets);
    r.metrics["nfe_final"] = static_cast<double>(f.nfe);
  } catch (const Error& e) {
    r.diverged = true;
    if (r.error.empty()) r.error = e.what();
    r.final_loss = kNaN;
    r.accuracy = kNaN;
  }
}

void run_tracking(const ExperimentConfig& cfg, const Dataset& data, RunResult& r,
                  NodeModel& model, std::string& extra_csv) {
  model = build_model(cfg.model, 2, 2, cfg.seed);
  r.metrics["param_count"] = static_cast<double>(model_param_count(model));
  const Signal beta = tracking_signal;
  const BatchObjective objective = [&](const Eigen::VectorXd& p,
                                       const std::vector<Index>& batch) {
    NodeModel m = model;
    set_params(m, p);
    return tracking_loss_grad(m, columns(data.inputs, batch), beta, cfg.tol);
  };
  const FitResult fr = fit(get_params(model), data.size(), objective, fit_config(cfg));
  set_params(model, fr.params);
  fill_history(r, fr.history);
  r.diverged = fr.diverged;
  r.error = fr.error;
  r.accuracy = kNaN;
  const Eigen::VectorXd x0 = data.inputs.col(0);
  try {
    std::vector<Index> all(static_cast<std::size_t>(data.size()));
    for (Index i = 0; i < data.size(); ++i) all[static_cast<std::size_t>(i)] = i;
    r.final_loss = objective(fr.params, all).loss;
    r.metrics["train_mse"] =
        tracking_mse(model, x0, beta, linspace(0.0, model.depth, cfg.eval.grid_points), cfg.tol);
    r.metrics["extrapolation_mse"] = tracking_mse(
        model, x0, beta,
        linspace(model.depth, cfg.eval.extrapolate_to, cfg.eval.grid_points), cfg.tol);
    // reference and model trajectory over the whole evaluation span
    const Index n = cfg.eval.grid_points * static_cast<Index>(std::ceil(cfg.eval.extrapolate_to));
    const std::vector<double> s = linspace(0.0, cfg.eval.extrapolate_to, std::max<Index>(n, 2));
    IvpProblem p;
    p.set_tolerance(cfg.tol);
    p.field = wrap_field(model, x0);
    Eigen::VectorXd z = apply_hx(model, x0);
    extra_csv = "s,beta_0,beta_1,z_0,z_1\n";
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i > 0) {
        p.z0 = z;
        p.s_start = s[i - 1];
        p.s_end = s[i];
        z = dopri5_integrate(p, {.record = false}).terminal;
      }
      const Eigen::VectorXd b = beta(s[i]);
      extra_csv += fmt::format("{},{},{},{},{}\n", fmt_double(s[i]), fmt_double(b[0]),
                               fmt_double(b[1]), fmt_double(z[0]), fmt_double(z[1]));
    }
  } catch (const Error& e) {
    r.diverged = true;
    if (r.error.empty()) r.error = e.what();
    r.final_loss = kNaN;
  }
}

void run_cnf(const ExperimentConfig& cfg, const Dataset& data, RunResult& r, Cnf1d& cnf) {
  cnf = build_cnf(cfg);
  r.metrics["param_count"] = static_cast<double>(coefficient_count(cnf.theta));
  const Eigen::VectorXd x = data.inputs.row(0).transpose();
  std::vector<Index> prior(static_cast<std::size_t>(data.size()));
  for (Index k = 0; k < data.size(); ++k) {
    prior[static_cast<std::size_t>(k)] = static_cast<Index>(data.targets(0, k));
  }
  const BatchObjective objective = [&](const Eigen::VectorXd& p,
                                       const std::vector<Index>& batch) {
    Cnf1d c = cnf;
    assign_flat(c.theta, p);
    Eigen::VectorXd xb(static_cast<Index>(batch.size()));
    std::vector<Index> pb(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      xb[static_cast<Index>(i)] = x[batch[i]];
      pb[i] = prior[static_cast<std::size_t>(batch[i])];
    }
    const CnfGrad g = cnf_nll_grad(c, xb, pb, cfg.tol);
    BatchResult out;
    out.loss = g.nll;
    out.grad = g.grad;
    out.nfe_forward = g.nfe_forward;
    out.nfe_backward = g.nfe_backward;
    return out;
  };
  const FitResult fr = fit(flatten(cnf.theta), data.size(), objective, fit_config(cfg));
  assign_flat(cnf.theta, fr.params);
  fill_history(r, fr.history);
  r.diverged = fr.diverged;
  r.error = fr.error;
  r.accuracy = kNaN;
  try {
    r.final_loss = cnf_nll(cnf, x, prior, cfg.tol);
    const std::vector<double> grid =
        linspace(cfg.eval.quadrature_lo, cfg.eval.quadrature_hi, cfg.eval.quadrature_points);
    const Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(grid.data(),
                                                                static_cast<Index>(grid.size()));
    const double h = grid[1] - grid[0];
    for (Index q = 0; q < 2; ++q) {
      const std::string tag = fmt::format("q{}", q + 1);
      const Eigen::VectorXd samples = cnf_sample(cnf, q, cfg.eval.samples, cfg.seed + 17 + q,
                                                 cfg.tol);
      r.metrics["sample_mean_" + tag] = samples.mean();
      r.metrics["sample_std_" + tag] =
          std::sqrt((samples.array() - samples.mean()).square().mean());
      const Eigen::VectorXd p = cnf_logprob(cnf, g, q, cfg.tol).array().exp();
      r.metrics["normalization_" + tag] =
          h * (p.sum() - 0.5 * (p[0] + p[p.size() - 1]));
      r.metrics["target_mean_" + tag] = cnf_pairing().data_mean[q];
    }
  } catch (const Error& e) {
    r.diverged = true;
    if (r.error.empty()) r.error = e.what();
    r.final_loss = kNaN;
  }
}

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return out;
}

}  // namespace

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

bool ExperimentReport::diverged() const {
  for (const RunResult& r : runs) {
    if (r.diverged) return true;
  }
  return false;
}

const RunResult& ExperimentReport::run(const std::string& n) const {
  for (const RunResult& r : runs) {
    if (r.name == n) return r;
  }
  throw DomainError("report has no run named '" + n + "'");
}

json to_json(const ExperimentReport& r) {
  json runs = json::array();
  for (const RunResult& x : r.runs) {
    json hist = json::array();
    for (const EpochRecord& e : x.history) {
      hist.push_back({{"loss", num(e.loss)}, {"accuracy", num(e.accuracy)},
                      {"nfe_forward", num(e.nfe_forward)}});
    }
    json nfe = json::array();
    for (double v : x.nfe_trace) nfe.push_back(num(v));
    json metrics = json::object();
    for (const auto& [k, v] : x.metrics) metrics[k] = num(v);
    runs.push_back({{"name", x.name},
                    {"config", x.config},
                    {"final_loss", num(x.final_loss)},
                    {"accuracy", num(x.accuracy)},
                    {"nfe_trace", nfe},
                    {"history", hist},
                    {"metrics", metrics},
                    {"artifacts", x.artifacts},
                    {"diverged", x.diverged},
                    {"error", x.error},
                    {"wall_time", x.wall_time}});
  }
  return {{"schema_version", kSchemaVersion},
          {"name", r.name},
          {"config", r.config},
          {"runs", runs},
          {"wall_time", r.wall_time}};
}

ExperimentReport report_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw ConfigError("schema_version", "unsupported report version");
    }
    ExperimentReport r;
    r.name = j.at("name").get<std::string>();
    r.config = j.at("config");
    r.wall_time = j.at("wall_time").get<double>();
    for (const json& x : j.at("runs")) {
      RunResult o;
      o.name = x.at("name").get<std::string>();
      o.config = x.at("config");
      o.final_loss = num_from(x.at("final_loss"));
      o.accuracy = num_from(x.at("accuracy"));
      for (const json& v : x.at("nfe_trace")) o.nfe_trace.push_back(num_from(v));
      for (const json& e : x.at("history")) {
        o.history.push_back({num_from(e.at("loss")), num_from(e.at("accuracy")),
                             num_from(e.at("nfe_forward"))});
      }
      for (auto it = x.at("metrics").begin(); it != x.at("metrics").end(); ++it) {
        o.metrics[it.key()] = num_from(it.value());
      }
      o.artifacts = x.at("artifacts").get<std::map<std::string, std::string>>();
      o.diverged = x.at("diverged").get<bool>();
      o.error = x.at("error").get<std::string>();
      o.wall_time = x.at("wall_time").get<double>();
      r.runs.push_back(std::move(o));
    }
    return r;
  } catch (const json::exception& e) {
    throw ConfigError("report", e.what());
  }
}

std::string dump_report(const ExperimentReport& r) { return to_json(r).dump(2) + "\n"; }

void write_report(const ExperimentReport& r, const std::filesystem::path& path) {
  write_text(path, dump_report(r));
}

ExperimentReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return report_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), e.what());
  }
}

RunResult run_single(const std::string& name, const json& config, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = parse_config(config);
  Dataset data;
  try {
    data = make_dataset(cfg.data.name, cfg.data.n, cfg.data.seed, cfg.data.params);
  } catch (const DomainError& e) {
    throw ConfigError("data", e.what());
  }
  RunResult r;
  r.name = name;
  r.config = config;
  NodeModel model;
  Cnf1d cnf;
  std::string extra_csv;
  bool is_cnf = false;
  if (cfg.data.name == "tracking") {
    run_tracking(cfg, data, r, model, extra_csv);
  } else if (cfg.data.name == "cnf-conditional") {
    run_cnf(cfg, data, r, cnf);
    is_cnf = true;
  } else {
    run_supervised(cfg, data, r, model);
  }
  r.wall_time = seconds_since(t0);
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    const std::string stem = safe_name(name);
    const auto hist = options.out_dir / (stem + "_history.csv");
    write_history_csv(r, hist);
    r.artifacts["history"] = hist.filename().string();
    Checkpoint c;
    if (is_cnf) {
      c.config = config;
      c.kind = "cnf";
      c.input_dim = 1;
      c.output_dim = 1;
      c.params = flatten(cnf.theta);
    } else {
      c = make_checkpoint(config, model);
    }
    const auto ck = options.out_dir / (stem + "_checkpoint.json");
    save_checkpoint(c, ck);
    r.artifacts["checkpoint"] = ck.filename().string();
    if (!extra_csv.empty()) {
      const auto tr = options.out_dir / (stem + "_tracking.csv");
      write_text(tr, extra_csv);
      r.artifacts["tracking"] = tr.filename().string();
    }
  }
  if (!options.quiet) {
    const std::string line =
        fmt::format("{}: loss {:.6g}, accuracy {:.4g}, {:.1f}s{}", name, r.final_loss,
                    r.accuracy, r.wall_time, r.diverged ? " (diverged: " + r.error + ")" : "");
    if (options.log) {
      options.log(line);
    } else {
      std::cerr << line << "\n";
    }
  }
  return r;
}

ExperimentReport run_experiment(const json& config, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<RunSpec> specs = resolve_runs(config);
  ExperimentReport report;
  report.config = config;
  report.name = config.contains("preset") && !config.contains("name")
                    ? config["preset"].get<std::string>()
                    : specs.front().config.value("name", std::string("experiment"));
  for (const RunSpec& s : specs) report.runs.push_back(run_single(s.name, s.config, options));
  report.wall_time = seconds_since(t0);
  if (!options.out_dir.empty()) {
    write_report(report, options.out_dir / "report.json");
  }
  return report;
}

ExperimentReport run_experiment_file(const std::filesystem::path& path,
                                     const RunOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), e.what());
  }
  return run_experiment(j, options);
}

json to_json(const Checkpoint& c) {
  json params = json::array();
  for (Index i = 0; i < c.params.size(); ++i) params.push_back(c.params[i]);
  return {{"schema_version", kSchemaVersion}, {"kind", c.kind},
          {"config", c.config},               {"input_dim", c.input_dim},
          {"output_dim", c.output_dim},       {"params", params}};
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw ConfigError("schema_version", "unsupported checkpoint version");
    }
    Checkpoint c;
    c.kind = j.at("kind").get<std::string>();
    c.config = j.at("config");
    c.input_dim = j.at("input_dim").get<Index>();
    c.output_dim = j.at("output_dim").get<Index>();
    const auto p = j.at("params").get<std::vector<double>>();
    c.params = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Index>(p.size()));
    return c;
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint", e.what());
  }
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_text(path, to_json(c).dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return checkpoint_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), e.what());
  }
}

NodeModel checkpoint_model(const Checkpoint& c) {
  if (c.kind != "node") throw ConfigError("kind", "checkpoint holds a '" + c.kind + "' model");
  const ExperimentConfig cfg = parse_config(c.config);
  NodeModel m = build_model(cfg.model, c.input_dim, c.output_dim, cfg.seed);
  try {
    set_params(m, c.params);
  } catch (const ShapeError& e) {
    throw ConfigError("params", e.what());
  }
  return m;
}

Checkpoint make_checkpoint(const json& config, const NodeModel& model) {
  Checkpoint c;
  c.config = config;
  c.kind = "node";
  c.input_dim = model.input_dim;
  c.output_dim = model.output_dim();
  c.params = get_params(model);
  return c;
}

}  // namespace depthflow::bench
