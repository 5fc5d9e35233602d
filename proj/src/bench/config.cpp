#include "depthflow/bench/config.hpp"

#include <map>
#include <set>

#include <fmt/format.h>

#include "depthflow/errors.hpp"

namespace depthflow::bench {

using nlohmann::json;

namespace {

// Typed access to one JSON object with path-qualified errors. Keys that are
// never read are reported by finish().
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key, double def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    return v.get<double>();
  }
  Index integer(const std::string& key, Index def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
    return v.get<Index>();
  }
  std::uint64_t seed(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(at(key), "expected a nonnegative integer");
    }
    return v.get<std::uint64_t>();
  }
  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(at(key), "expected true or false");
    return v.get<bool>();
  }
  std::string string(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_string()) throw ConfigError(at(key), "expected a string");
    return v.get<std::string>();
  }
  std::string required_string(const std::string& key) {
    if (!has(key)) throw ConfigError(at(key), "missing required field");
    return string(key, "");
  }
  std::vector<Index> integers(const std::string& key) {
    if (!has(key)) return {};
    const json& v = raw(key);
    if (!v.is_array()) throw ConfigError(at(key), "expected an array of integers");
    std::vector<Index> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_integer() || v[i].get<Index>() < 1) {
        throw ConfigError(fmt::format("{}[{}]", at(key), i), "expected a positive integer");
      }
      out.push_back(v[i].get<Index>());
    }
    return out;
  }
  Fields object(const std::string& key) {
    static const json empty = json::object();
    if (!has(key)) return Fields(empty, at(key));
    return Fields(raw(key), at(key));
  }

  // Parses an enum through `parse`, turning its DomainError into a ConfigError.
  template <typename F>
  auto choice(const std::string& key, const std::string& def, F parse) {
    const std::string s = string(key, def);
    try {
      return parse(s);
    } catch (const DomainError& e) {
      throw ConfigError(at(key), e.what());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(at(it.key()), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& path, const std::string& message) {
  if (!ok) throw ConfigError(path, message);
}

// Embedded presets. Hyperparameters follow the reference recipes where they
// are stated; the rest are desk-scale choices.
const std::map<std::string, std::pair<std::string, const char*>>& preset_table() {
  static const std::map<std::string, std::pair<std::string, const char*>> table = {
      {"crossing-datacontrol",
       {"phi(x) = -x with a data-controlled field (2 x 32 tanh)", R"({
  "schema_version": 1, "name": "crossing-datacontrol", "seed": 0,
  "data": {"name": "crossing", "n": 50},
  "model": {"input_mode": "data-controlled", "hidden": [32, 32], "activation": "tanh",
            "output": "identity"},
  "train": {"epochs": 1000, "batch_size": 0, "loss": "l1",
            "optimizer": {"kind": "adam", "lr": 1e-3, "weight_decay": 1e-5}},
  "solver": {"rtol": 1e-5, "atol": 1e-5}
})"}},
      {"crossing-vanilla",
       {"phi(x) = -x with a depth-invariant field (16, 32 tanh)", R"({
  "schema_version": 1, "name": "crossing-vanilla", "seed": 0,
  "data": {"name": "crossing", "n": 50},
  "model": {"input_mode": "autonomous", "hidden": [16, 32], "activation": "tanh",
            "output": "identity"},
  "train": {"epochs": 1000, "batch_size": 0, "loss": "l1",
            "optimizer": {"kind": "adam", "lr": 1e-3, "weight_decay": 1e-5}},
  "solver": {"rtol": 1e-5, "atol": 1e-5}
})"}},
      {"crossing-concat",
       {"phi(x) = -x with a depth-concat field (16, 32 tanh)", R"({
  "schema_version": 1, "name": "crossing-concat", "seed": 0,
  "data": {"name": "crossing", "n": 50},
  "model": {"input_mode": "depth-concat", "hidden": [16, 32], "activation": "tanh",
            "output": "identity"},
  "train": {"epochs": 1000, "batch_size": 0, "loss": "l1",
            "optimizer": {"kind": "adam", "lr": 1e-3, "weight_decay": 1e-5}},
  "solver": {"rtol": 1e-5, "atol": 1e-5}
})"}},
      {"crossing-galnode",
       {"phi(x) = -x with a Galerkin field (32 tanh, 5 Fourier harmonics)", R"({
  "schema_version": 1, "name": "crossing-galnode", "seed": 0,
  "data": {"name": "crossing", "n": 50},
  "model": {"input_mode": "autonomous", "hidden": [32], "activation": "tanh",
            "output": "identity",
            "parametrization": {"kind": "galerkin", "basis": "fourier", "harmonics": 5,
                                "noise_scale": 0.1}},
  "train": {"epochs": 1000, "batch_size": 0, "loss": "l1",
            "optimizer": {"kind": "adam", "lr": 1e-3, "weight_decay": 1e-5}},
  "solver": {"rtol": 1e-5, "atol": 1e-5}
})"}},
      {"annuli-ablation",
       {"non-augmented variants on concentric annuli", R"({
  "schema_version": 1, "name": "annuli-ablation", "seed": 0,
  "data": {"name": "annuli", "n": 1024, "radius": 1.0},
  "model": {"input_mode": "depth-concat", "hidden": [32], "activation": "tanh",
            "output": "linear"},
  "train": {"epochs": 1024, "batch_size": 1024, "loss": "mse",
            "optimizer": {"kind": "adamw", "lr": 1e-3, "weight_decay": 1e-6}},
  "solver": {"rtol": 1e-4, "atol": 1e-4},
  "variants": [
    {"name": "galnode", "patch": {"model": {"input_mode": "autonomous",
       "parametrization": {"kind": "galerkin", "basis": "fourier", "harmonics": 5,
                           "noise_scale": 0.1}}}},
    {"name": "depth-concat", "patch": {}},
    {"name": "data-controlled", "patch": {"model": {"input_mode": "data-controlled"}}},
    {"name": "vanilla-1d", "patch": {"data": {"dim": 1},
       "model": {"input_mode": "autonomous"}}}
  ]
})"}},
      {"annuli-augmentation",
       {"zero versus input-layer augmentation on annuli, NFE trend", R"({
  "schema_version": 1, "name": "annuli-augmentation", "seed": 0,
  "data": {"name": "annuli", "n": 1024, "radius": 1.0},
  "model": {"input_mode": "autonomous", "hidden": [32], "activation": "tanh",
            "output": "linear"},
  "train": {"epochs": 1024, "batch_size": 1024, "loss": "mse",
            "optimizer": {"kind": "adamw", "lr": 1e-3, "weight_decay": 1e-6}},
  "solver": {"rtol": 1e-4, "atol": 1e-4},
  "variants": [
    {"name": "zero-aug", "patch": {"model": {"augmentation": {"kind": "zero", "extra": 2}}}},
    {"name": "il-node", "patch": {"model": {"augmentation": {"kind": "input-layer",
                                                             "extra": 2}}}},
    {"name": "second-order", "patch": {"model": {"augmentation": {"kind": "higher-order",
                                                                  "order": 2}}}}
  ]
})"}},
      {"moons-activation-sweep",
       {"final activation of the field on two moons", R"({
  "schema_version": 1, "name": "moons-activation-sweep", "seed": 0,
  "data": {"name": "moons", "n": 256, "noise": 0.1},
  "model": {"input_mode": "depth-concat", "hidden": [16], "activation": "tanh",
            "output": "linear", "augmentation": {"kind": "zero", "extra": 1}},
  "train": {"epochs": 200, "batch_size": 0, "loss": "mse",
            "optimizer": {"kind": "adam", "lr": 1e-2}},
  "solver": {"rtol": 1e-4, "atol": 1e-4},
  "variants": [
    {"name": "identity", "patch": {"model": {"final_activation": "identity"}}},
    {"name": "tanh", "patch": {"model": {"final_activation": "tanh"}}},
    {"name": "relu", "patch": {"model": {"final_activation": "relu"}}},
    {"name": "sigmoid", "patch": {"model": {"final_activation": "sigmoid"}}}
  ]
})"}},
      {"spirals-depthvar",
       {"depth-invariant, Galerkin and stacked fields on two spirals", R"({
  "schema_version": 1, "name": "spirals-depthvar", "seed": 0,
  "data": {"name": "spirals", "n": 256, "noise": 0.05},
  "model": {"input_mode": "autonomous", "hidden": [32], "activation": "tanh",
            "output": "linear", "augmentation": {"kind": "zero", "extra": 1}},
  "train": {"epochs": 300, "batch_size": 0, "loss": "mse",
            "optimizer": {"kind": "adam", "lr": 1e-2}},
  "solver": {"rtol": 1e-4, "atol": 1e-4},
  "variants": [
    {"name": "constant", "patch": {}},
    {"name": "galerkin", "patch": {"model": {"parametrization": {"kind": "galerkin",
       "basis": "fourier", "harmonics": 2, "noise_scale": 0.1}}}},
    {"name": "stacked", "patch": {"model": {"parametrization": {"kind": "stacked",
       "segments": 3}}}}
  ]
})"}},
      {"tracking-galnode",
       {"tracking a periodic signal with a periodic Galerkin field and an integral loss",
        R"({
  "schema_version": 1, "name": "tracking-galnode", "seed": 0,
  "data": {"name": "tracking", "n": 101},
  "model": {"input_mode": "autonomous", "hidden": [32], "activation": "tanh",
            "output": "identity",
            "parametrization": {"kind": "galerkin", "basis": "fourier", "harmonics": 2,
                                "periodic": true, "noise_scale": 0.1}},
  "train": {"epochs": 1000, "batch_size": 0,
            "optimizer": {"kind": "adam", "lr": 1e-3}},
  "solver": {"rtol": 1e-6, "atol": 1e-6},
  "eval": {"extrapolate_to": 3.0, "grid_points": 101}
})"}},
      {"cnf-conditional",
       {"conditional 1-D normalizing flow between two crossed Gaussian pairs", R"({
  "schema_version": 1, "name": "cnf-conditional", "seed": 0,
  "data": {"name": "cnf-conditional", "n": 512, "sigma": 0.3},
  "model": {"hidden": [32, 32], "activation": "softplus"},
  "train": {"epochs": 2000, "batch_size": 0,
            "optimizer": {"kind": "adamw", "lr": 1e-3, "weight_decay": 1e-7}},
  "solver": {"rtol": 1e-8, "atol": 1e-8},
  "eval": {"samples": 4000, "quadrature_points": 4001,
           "quadrature_lo": -8.0, "quadrature_hi": 8.0}
})"}},
      {"adaptive-depth",
       {"per-input integration depth from a ReLU hypernetwork on phi(x) = -x", R"({
  "schema_version": 1, "name": "adaptive-depth", "seed": 0,
  "data": {"name": "crossing", "n": 50},
  "model": {"input_mode": "depth-concat", "hidden": [8, 8], "activation": "tanh",
            "output": "identity", "adaptive_depth": {"enabled": true, "hidden": 8}},
  "train": {"epochs": 300, "batch_size": 0, "loss": "l1",
            "optimizer": {"kind": "adam", "lr": 1e-2}},
  "solver": {"rtol": 1e-5, "atol": 1e-5}
})"}},
  };
  return table;
}

ParamConfig parse_param(Fields f) {
  ParamConfig p;
  p.kind = f.string("kind", "constant");
  require(p.kind == "constant" || p.kind == "galerkin" || p.kind == "stacked", f.at("kind"),
          "expected constant, galerkin or stacked");
  p.basis = f.choice("basis", "fourier", parse_basis_kind);
  p.harmonics = f.integer("harmonics", 1);
  p.size = f.integer("size", 3);
  p.period = f.number("period", 0.0);
  p.periodic = f.boolean("periodic", false);
  p.noise_scale = f.number("noise_scale", 0.0);
  p.segments = f.integer("segments", 1);
  require(p.harmonics >= 0, f.at("harmonics"), "must be nonnegative");
  require(p.size >= 1, f.at("size"), "must be positive");
  require(p.period >= 0.0, f.at("period"), "must be nonnegative");
  require(p.segments >= 1, f.at("segments"), "must be positive");
  require(p.noise_scale >= 0.0, f.at("noise_scale"), "must be nonnegative");
  require(!p.periodic || p.basis == BasisKind::Fourier, f.at("periodic"),
          "only Fourier bases have a periodic extension");
  f.finish();
  return p;
}

ModelConfig parse_model(Fields f) {
  ModelConfig m;
  m.input_mode = f.choice("input_mode", "autonomous", parse_input_mode);
  m.hidden = f.integers("hidden");
  m.activation = f.choice("activation", "tanh", parse_activation);
  m.final_activation = f.choice("final_activation", "identity", parse_activation);
  {
    Fields a = f.object("augmentation");
    m.augment = a.choice("kind", "none", parse_augment_kind);
    m.extra = a.integer("extra", 0);
    m.order = a.integer("order", 1);
    m.input_layer = a.boolean("input_layer", m.augment == AugmentKind::InputLayer ||
                                                 m.augment == AugmentKind::InputLayerPreserving);
    m.input_layer_dim = a.integer("input_layer_dim", 0);
    m.input_layer_identity = a.boolean("input_layer_identity", false);
    m.input_layer_trainable = a.boolean("input_layer_trainable", true);
    require(m.extra >= 0, a.at("extra"), "must be nonnegative");
    require(m.order >= 1, a.at("order"), "must be at least 1");
    require(m.input_layer_dim >= 0, a.at("input_layer_dim"), "must be nonnegative");
    a.finish();
  }
  m.param = parse_param(f.object("parametrization"));
  m.depth = f.number("depth", 1.0);
  require(m.depth > 0.0, f.at("depth"), "must be positive");
  m.output = f.string("output", "linear");
  require(m.output == "linear" || m.output == "identity", f.at("output"),
          "expected linear or identity");
  {
    Fields a = f.object("adaptive_depth");
    m.adaptive = a.boolean("enabled", false);
    m.adaptive_hidden = a.integer("hidden", 8);
    require(m.adaptive_hidden >= 1, a.at("hidden"), "must be positive");
    a.finish();
  }
  f.finish();
  return m;
}

TrainSection parse_train(Fields f) {
  TrainSection t;
  t.epochs = f.integer("epochs", 0);
  t.batch_size = f.integer("batch_size", 0);
  require(t.epochs >= 0, f.at("epochs"), "must be nonnegative");
  require(t.batch_size >= 0, f.at("batch_size"), "must be nonnegative");
  {
    Fields o = f.object("optimizer");
    t.optimizer.kind = o.choice("kind", "adam", parse_optimizer_kind);
    t.optimizer.lr = o.number("lr", 1e-3);
    t.optimizer.beta1 = o.number("beta1", 0.9);
    t.optimizer.beta2 = o.number("beta2", 0.999);
    t.optimizer.eps = o.number("eps", 1e-8);
    t.optimizer.weight_decay = o.number("weight_decay", 0.0);
    require(t.optimizer.lr >= 0.0, o.at("lr"), "must be nonnegative");
    require(t.optimizer.beta1 >= 0.0 && t.optimizer.beta1 < 1.0, o.at("beta1"),
            "must lie in [0, 1)");
    require(t.optimizer.beta2 >= 0.0 && t.optimizer.beta2 < 1.0, o.at("beta2"),
            "must lie in [0, 1)");
    require(t.optimizer.eps > 0.0, o.at("eps"), "must be positive");
    require(t.optimizer.weight_decay >= 0.0, o.at("weight_decay"), "must be nonnegative");
    o.finish();
  }
  {
    Fields s = f.object("schedule");
    t.schedule.gamma = s.number("gamma", 1.0);
    t.schedule.every = s.integer("every", 0);
    require(t.schedule.gamma > 0.0 && t.schedule.gamma <= 1.0, s.at("gamma"),
            "must lie in (0, 1]");
    require(t.schedule.every >= 0, s.at("every"), "must be nonnegative");
    s.finish();
  }
  t.loss = f.choice("loss", "mse", parse_loss_kind);
  {
    Fields r = f.object("regularizer");
    t.regularizer.kind = r.choice("kind", "none", parse_regularizer_kind);
    t.regularizer.weight = r.number("weight", 0.0);
    require(t.regularizer.weight >= 0.0, r.at("weight"), "must be nonnegative");
    r.finish();
  }
  f.finish();
  return t;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  Fields root(j, "");
  const Index version = root.integer("schema_version", -1);
  require(version == kSchemaVersion, "schema_version",
          fmt::format("expected {}", kSchemaVersion));
  ExperimentConfig c;
  c.name = root.required_string("name");
  c.description = root.string("description", "");
  c.seed = root.seed("seed", 0);
  if (root.has("preset")) {
    throw ConfigError("preset", "unresolved preset reference (use resolve_runs)");
  }
  if (root.has("variants")) {
    throw ConfigError("variants", "unresolved variants (use resolve_runs)");
  }
  {
    Fields d = root.object("data");
    c.data.name = d.required_string("name");
    bool known = false;
    for (const auto& n : dataset_names()) known = known || n == c.data.name;
    require(known, d.at("name"), "unknown dataset '" + c.data.name + "'");
    c.data.n = d.integer("n", 0);
    require(c.data.n >= 2, d.at("n"), "must be at least 2");
    c.data.seed = d.seed("seed", c.seed);
    c.data.params.radius = d.number("radius", 1.0);
    c.data.params.dim = d.integer("dim", 2);
    c.data.params.noise = d.number("noise", 0.1);
    c.data.params.sigma = d.number("sigma", 0.3);
    c.data.params.initial_conditions = d.integer("initial_conditions", 1);
    c.data.params.spread = d.number("spread", 0.0);
    require(c.data.params.radius > 0.0, d.at("radius"), "must be positive");
    require(c.data.params.dim == 1 || c.data.params.dim == 2, d.at("dim"), "must be 1 or 2");
    require(c.data.params.noise >= 0.0, d.at("noise"), "must be nonnegative");
    require(c.data.params.sigma > 0.0, d.at("sigma"), "must be positive");
    require(c.data.params.initial_conditions >= 1, d.at("initial_conditions"),
            "must be positive");
    d.finish();
  }
  c.model = parse_model(root.object("model"));
  c.train = parse_train(root.object("train"));
  {
    Fields s = root.object("solver");
    c.tol.rtol = s.number("rtol", 1e-5);
    c.tol.atol = s.number("atol", 1e-5);
    require(c.tol.rtol > 0.0, s.at("rtol"), "must be positive");
    require(c.tol.atol > 0.0, s.at("atol"), "must be positive");
    s.finish();
  }
  {
    Fields e = root.object("eval");
    c.eval.extrapolate_to = e.number("extrapolate_to", 3.0);
    c.eval.grid_points = e.integer("grid_points", 101);
    c.eval.samples = e.integer("samples", 4000);
    c.eval.quadrature_points = e.integer("quadrature_points", 4001);
    c.eval.quadrature_lo = e.number("quadrature_lo", -8.0);
    c.eval.quadrature_hi = e.number("quadrature_hi", 8.0);
    require(c.eval.grid_points >= 2, e.at("grid_points"), "must be at least 2");
    require(c.eval.samples >= 1, e.at("samples"), "must be positive");
    require(c.eval.quadrature_points >= 3, e.at("quadrature_points"), "must be at least 3");
    require(c.eval.quadrature_hi > c.eval.quadrature_lo, e.at("quadrature_hi"),
            "must exceed quadrature_lo");
    e.finish();
  }
  root.finish();
  return c;
}

std::vector<RunSpec> resolve_runs(const json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "expected an object");
  json base = j;
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError("preset", "expected a string");
    base = preset(j["preset"].get<std::string>());
    json overrides = j;
    overrides.erase("preset");
    base.merge_patch(overrides);
  }
  std::vector<RunSpec> runs;
  if (!base.contains("variants")) {
    parse_config(base);
    runs.push_back({base.value("name", std::string()), base});
    return runs;
  }
  const json variants = base["variants"];
  base.erase("variants");
  if (!variants.is_array() || variants.empty()) {
    throw ConfigError("variants", "expected a nonempty array");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const std::string path = fmt::format("variants[{}]", i);
    const json& v = variants[i];
    if (!v.is_object()) throw ConfigError(path, "expected an object");
    for (auto it = v.begin(); it != v.end(); ++it) {
      if (it.key() != "name" && it.key() != "patch") {
        throw ConfigError(path + "." + it.key(), "unknown field");
      }
    }
    if (!v.contains("name") || !v["name"].is_string()) {
      throw ConfigError(path + ".name", "expected a string");
    }
    const std::string name = v["name"].get<std::string>();
    if (!names.insert(name).second) throw ConfigError(path + ".name", "duplicate variant");
    json cfg = base;
    if (v.contains("patch")) {
      if (!v["patch"].is_object()) throw ConfigError(path + ".patch", "expected an object");
      cfg.merge_patch(v["patch"]);
    }
    try {
      parse_config(cfg);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ".patch." + e.path(), e.what());
    }
    runs.push_back({name, cfg});
  }
  return runs;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [k, v] : preset_table()) out.push_back(k);
    return out;
  }();
  return names;
}

json preset(const std::string& name) {
  const auto& table = preset_table();
  const auto it = table.find(name);
  if (it == table.end()) throw ConfigError("preset", "unknown preset '" + name + "'");
  return json::parse(it->second.second);
}

std::string preset_description(const std::string& name) {
  const auto& table = preset_table();
  const auto it = table.find(name);
  if (it == table.end()) throw ConfigError("preset", "unknown preset '" + name + "'");
  return it->second.first;
}

NodeModel build_model(const ModelConfig& cfg, Index n_x, Index n_y, std::uint64_t seed) {
  NodeModel m;
  m.input_dim = n_x;
  m.depth = cfg.depth;
  Augmentation& a = m.augmentation;
  a.kind = cfg.augment;
  a.extra = cfg.extra;
  a.order = cfg.order;
  if (cfg.input_layer) {
    Index out = cfg.input_layer_dim;
    switch (cfg.augment) {
      case AugmentKind::InputLayer:
        if (out == 0) out = n_x + cfg.extra;
        a.extra = 0;
        break;
      case AugmentKind::InputLayerPreserving:
        out = cfg.extra;
        break;
      case AugmentKind::HigherOrder:
        if (out == 0) out = n_x + cfg.extra;
        a.extra = 0;
        break;
      case AugmentKind::SelectiveHigherOrder:
        if (out == 0) out = n_x;
        break;
      default:
        throw ConfigError("model.augmentation.input_layer",
                          "this augmentation kind has no input layer");
    }
    a.input_layer = cfg.input_layer_identity
                        ? LinearMap::padded_identity(n_x, out, cfg.input_layer_trainable)
                        : LinearMap::random(n_x, out, seed + 101, cfg.input_layer_trainable);
  }
  const Index data_dim = cfg.input_mode == InputMode::DataControlled ? n_x : 0;
  m.field.input_mode = cfg.input_mode;
  const Index nz = m.state_dim();
  m.field = FieldSpec::make(nz, m.field_output_dim(), cfg.hidden, cfg.activation,
                            cfg.final_activation, cfg.input_mode, data_dim);
  const ParamVector theta0 = init_params(m.field, seed);
  const ParamConfig& p = cfg.param;
  if (p.kind == "constant") {
    m.theta = make_constant(theta0);
  } else if (p.kind == "galerkin") {
    const double span = p.period > 0.0 ? p.period : cfg.depth;
    BasisSet basis;
    switch (p.basis) {
      case BasisKind::Fourier: basis = BasisSet::fourier(p.harmonics, span); break;
      case BasisKind::Polynomial: basis = BasisSet::polynomial(p.size, span); break;
      case BasisKind::Chebyshev: basis = BasisSet::chebyshev(p.size, span); break;
    }
    m.theta = make_galerkin(basis, theta0, p.noise_scale, seed + 202, p.periodic);
  } else {
    m.theta = make_stacked(p.segments, cfg.depth, theta0);
  }
  if (cfg.output == "identity") {
    if (n_y > nz) {
      throw ConfigError("model.output", fmt::format("identity output needs n_y = {} <= n_z = {}",
                                                    n_y, nz));
    }
    LinearMap proj;
    proj.weight = RowMatrix::Zero(n_y, nz);
    proj.weight.leftCols(n_y).setIdentity();
    proj.bias = Eigen::VectorXd::Zero(n_y);
    proj.trainable = false;
    m.output = proj;
  } else {
    m.output = LinearMap::random(nz, n_y, seed + 303);
  }
  if (cfg.adaptive) m.hypernet = DepthHypernet::make(n_x, cfg.adaptive_hidden, seed + 404);
  try {
    m.validate();
  } catch (const Error& e) {
    throw ConfigError("model", e.what());
  }
  return m;
}

Cnf1d build_cnf(const ExperimentConfig& cfg) {
  const CnfPairing pair = cnf_pairing();
  std::vector<Gaussian1d> priors = {{pair.prior_mean[0], cfg.data.params.sigma},
                                    {pair.prior_mean[1], cfg.data.params.sigma}};
  Cnf1d c = Cnf1d::make(cfg.model.hidden, cfg.model.activation, priors, cfg.seed);
  c.depth = cfg.model.depth;
  return c;
}

TrainConfig train_config(const ExperimentConfig& cfg) {
  TrainConfig t;
  t.epochs = cfg.train.epochs;
  t.batch_size = cfg.train.batch_size;
  t.optimizer = cfg.train.optimizer;
  t.schedule = cfg.train.schedule;
  t.loss = cfg.train.loss;
  t.regularizer = cfg.train.regularizer;
  t.tol = cfg.tol;
  t.seed = cfg.seed;
  return t;
}

}  // namespace depthflow::bench
