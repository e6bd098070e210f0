#include "config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "bnf/error.hpp"

namespace bnf::cli {

namespace {

json toml_to_json(const toml::node& n) {
  if (const auto* t = n.as_table()) {
    json o = json::object();
    for (auto&& [k, v] : *t) o[std::string(k.str())] = toml_to_json(v);
    return o;
  }
  if (const auto* a = n.as_array()) {
    json arr = json::array();
    for (auto&& v : *a) arr.push_back(toml_to_json(v));
    return arr;
  }
  if (const auto* s = n.as_string()) return s->get();
  if (const auto* i = n.as_integer()) return i->get();
  if (const auto* f = n.as_floating_point()) return f->get();
  if (const auto* b = n.as_boolean()) return b->get();
  throw ConfigError("unsupported TOML value type (dates and times are not used)");
}

/// Reads one table and reports keys nobody asked for.
class Section {
 public:
  Section(const json& tree, std::string name) : name_(std::move(name)) {
    if (tree.contains(name_)) {
      node_ = &tree.at(name_);
      if (!node_->is_object()) throw ConfigError("[" + name_ + "] must be a table");
    }
  }
  ~Section() = default;

  bool has(const std::string& key) {
    used_.insert(key);
    return node_ && node_->contains(key);
  }
  const json& raw(const std::string& key) { return node_->at(key); }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    return as_number(raw(key), where(key));
  }
  long long integer(const std::string& key, long long fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) return static_cast<long long>(v.get<double>());
    throw ConfigError(where(key) + " must be an integer");
  }
  std::size_t count(const std::string& key, std::size_t fallback) {
    const long long v = integer(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError(where(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  }
  std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    throw ConfigError(where(key) + " must be a non-negative integer");
  }
  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    if (!raw(key).is_string()) throw ConfigError(where(key) + " must be a string");
    return raw(key).get<std::string>();
  }
  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    if (!raw(key).is_boolean()) throw ConfigError(where(key) + " must be true or false");
    return raw(key).get<bool>();
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    if (!has(key)) return fallback;
    return number_list(raw(key), where(key));
  }
  Interval interval(const std::string& key, Interval fallback) {
    if (!has(key)) return fallback;
    return as_interval(raw(key), where(key));
  }

  void finish() const {
    if (!node_) return;
    for (auto it = node_->begin(); it != node_->end(); ++it)
      if (!used_.count(it.key())) throw ConfigError("unknown key '" + name_ + "." + it.key() + "'");
  }

  std::string where(const std::string& key) const { return "'" + name_ + "." + key + "'"; }

  static double as_number(const json& v, const std::string& where) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      const std::string s = v.get<std::string>();
      if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
      if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    throw ConfigError(where + " must be a number");
  }
  static std::vector<double> number_list(const json& v, const std::string& where) {
    if (!v.is_array()) throw ConfigError(where + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) out.push_back(as_number(e, where));
    return out;
  }
  static Interval as_interval(const json& v, const std::string& where) {
    const auto xs = number_list(v, where);
    if (xs.size() != 2 || !(xs[0] <= xs[1])) throw ConfigError(where + " must be [lo, hi] with lo <= hi");
    return {xs[0], xs[1]};
  }
  static std::vector<std::vector<double>> matrix(const json& v, const std::string& where) {
    if (!v.is_array()) throw ConfigError(where + " must be an array of rows");
    std::vector<std::vector<double>> out;
    for (const auto& row : v) out.push_back(number_list(row, where));
    return out;
  }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> used_;
};

DegreeVector degree_vector(Section& s, const std::string& key, int dims, int fallback) {
  if (!s.has(key)) return DegreeVector(static_cast<std::size_t>(dims), fallback);
  const json& v = s.raw(key);
  DegreeVector d;
  if (v.is_number_integer()) {
    d.assign(static_cast<std::size_t>(dims), v.get<int>());
  } else if (v.is_array()) {
    for (const auto& e : v) {
      if (!e.is_number_integer()) throw ConfigError(s.where(key) + " must contain integers");
      d.push_back(e.get<int>());
    }
  } else {
    throw ConfigError(s.where(key) + " must be an integer or a list of integers");
  }
  if (static_cast<int>(d.size()) != dims) throw ConfigError(s.where(key) + " needs one entry per state dimension");
  for (int x : d)
    if (x < 1) throw ConfigError(s.where(key) + " entries must be >= 1");
  return d;
}

ModelConfig decode_model(const json& tree, const std::string& name, int dims, const ModelConfig& defaults) {
  Section s(tree, name);
  ModelConfig m = defaults;
  m.degree = degree_vector(s, "degree", dims, defaults.degree.empty() ? 10 : defaults.degree.front());
  TrainConfig& t = m.train;
  t.epochs = static_cast<int>(s.integer("epochs", t.epochs));
  t.batch_size = s.count("batch_size", t.batch_size);
  t.learning_rate = s.number("learning_rate", t.learning_rate);
  if (s.has("optimizer")) t.optimizer = optimizer_from_string(s.string("optimizer", ""));
  if (s.has("positive_map")) t.positive_map = positive_map_from_string(s.string("positive_map", ""));
  t.positive_floor = s.number("positive_floor", t.positive_floor);
  if (s.has("degree_raise")) {
    const json& v = s.raw("degree_raise");
    t.degree_raise.clear();
    if (v.is_number_integer()) {
      t.degree_raise.push_back(v.get<int>());
    } else if (v.is_array()) {
      for (const auto& e : v) {
        if (!e.is_number_integer()) throw ConfigError(s.where("degree_raise") + " must contain integers");
        t.degree_raise.push_back(e.get<int>());
      }
    } else {
      throw ConfigError(s.where("degree_raise") + " must be an integer or a list");
    }
  }
  t.penalty_weight = s.number("penalty_weight", t.penalty_weight);
  t.projection_max_iter = static_cast<int>(s.integer("projection_max_iter", t.projection_max_iter));
  t.seed = s.seed("seed", t.seed);
  s.finish();
  t.validate();
  return m;
}

NoiseSpec decode_noise(const json& v) {
  if (v.is_string() && v.get<std::string>() == "none") return NoiseSpec::none();
  if (!v.is_array()) throw ConfigError("'system.noise' must be \"none\" or a list of components");
  NoiseSpec n;
  for (const auto& c : v) {
    if (!c.is_object()) throw ConfigError("'system.noise' components must be tables");
    for (auto it = c.begin(); it != c.end(); ++it)
      if (it.key() != "weight" && it.key() != "mean" && it.key() != "cov")
        throw ConfigError("unknown key 'system.noise." + it.key() + "'");
    GaussianComponent g;
    g.weight = c.contains("weight") ? Section::as_number(c.at("weight"), "'system.noise.weight'") : 1.0;
    if (!c.contains("mean") || !c.contains("cov")) throw ConfigError("noise components need 'mean' and 'cov'");
    g.mean = Section::number_list(c.at("mean"), "'system.noise.mean'");
    g.cov = Section::matrix(c.at("cov"), "'system.noise.cov'");
    n.components.push_back(std::move(g));
  }
  return n;
}

// Wraps library validation so user-facing problems surface as config errors.
template <typename F>
void as_config_error(F&& f) {
  try {
    f();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

json read_config_tree(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("config file '" + path.string() + "' does not exist");
  const std::string ext = path.extension().string();
  if (ext == ".json") {
    std::ifstream in(path);
    try {
      return json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("'" + path.string() + "': " + e.what());
    }
  }
  try {
    return toml_to_json(toml::parse_file(path.string()));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "'" << path.string() << "': " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(msg.str());
  }
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  if (!tree.is_object()) tree = json::object();
  json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    json& next = (*node)[key];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("override '" + assignment + "' descends into a non-table");
    node = &next;
    start = dot + 1;
  }
}

ExperimentConfig decode_config(const json& tree) {
  if (!tree.is_object()) throw ConfigError("config root must be a table");
  static const std::set<std::string> sections{"system", "init",      "data",     "transform", "initial",
                                              "transition", "propagate", "export", "evaluate",  "output"};
  for (auto it = tree.begin(); it != tree.end(); ++it)
    if (!sections.count(it.key())) throw ConfigError("unknown section '" + it.key() + "'");

  ExperimentConfig c;
  c.source = tree;
  {
    Section s(tree, "system");
    const SystemKind kind = system_kind_from_string(s.string("kind", "vanderpol"));
    if (kind == SystemKind::Custom) throw ConfigError("custom systems cannot be configured from a file");
    c.system = kind == SystemKind::VanDerPol ? SystemSpec::vanderpol() : SystemSpec::oscillator();
    c.system.dt = s.number("dt", c.system.dt);
    c.system.mu = s.number("mu", c.system.mu);
    if (s.has("noise")) c.system.noise = decode_noise(s.raw("noise"));
    s.finish();
    as_config_error([&] { c.system.validate(); });
  }
  {
    Section s(tree, "init");
    c.data.init.mean = s.numbers("mean", c.data.init.mean);
    if (s.has("cov")) c.data.init.cov = Section::matrix(s.raw("cov"), s.where("cov"));
    s.finish();
    as_config_error([&] { c.data.init.validate(c.system.dims); });
  }
  {
    Section s(tree, "data");
    c.data.initials = s.count("initials", c.data.initials);
    c.data.trajectories = s.count("trajectories", c.data.trajectories);
    c.data.horizon = static_cast<int>(s.integer("horizon", c.data.horizon));
    c.data.seed = s.seed("seed", c.data.seed);
    c.test_samples = s.count("test_samples", c.test_samples);
    c.test_seed = s.seed("test_seed", c.test_seed);
    s.finish();
    if (c.data.initials == 0 || c.data.trajectories == 0 || c.data.horizon < 1 || c.test_samples == 0)
      throw ConfigError("[data] counts must be positive");
  }
  {
    Section s(tree, "transform");
    const std::string mode = s.string("mode", "gaussian");
    if (mode == "gaussian")
      c.transform_mode = TransformMode::Gaussian;
    else if (mode == "affine")
      c.transform_mode = TransformMode::Affine;
    else
      throw ConfigError("'transform.mode' must be \"gaussian\" or \"affine\"");
    c.variance_buffer = s.number("buffer", c.variance_buffer);
    s.finish();
    if (!(c.variance_buffer >= 0.0)) throw ConfigError("'transform.buffer' must be >= 0");
  }
  ModelConfig init_defaults;
  init_defaults.degree = {10};
  init_defaults.train.learning_rate = 0.01;
  init_defaults.train.batch_size = 128;
  ModelConfig tr_defaults = init_defaults;
  tr_defaults.train.learning_rate = 0.1;
  tr_defaults.train.batch_size = 1048;
  c.initial = decode_model(tree, "initial", c.system.dims, init_defaults);
  c.transition = decode_model(tree, "transition", c.system.dims, tr_defaults);
  {
    Section s(tree, "propagate");
    c.horizon = static_cast<int>(s.integer("horizon", c.horizon));
    s.finish();
    if (c.horizon < 0) throw ConfigError("'propagate.horizon' must be >= 0");
  }
  {
    Section s(tree, "export");
    c.window.x1 = s.interval("x1", c.window.x1);
    c.window.x2 = s.interval("x2", c.window.x2);
    c.window.nx = static_cast<int>(s.integer("nx", c.window.nx));
    c.window.ny = static_cast<int>(s.integer("ny", c.window.ny));
    c.mc_grid_samples = s.count("mc_samples", c.mc_grid_samples);
    c.mc_seed = s.seed("mc_seed", c.mc_seed);
    c.binary_payload = s.boolean("binary_payload", c.binary_payload);
    s.finish();
    as_config_error([&] { c.window.validate(); });
    if (!std::isfinite(c.window.x1.lo) || !std::isfinite(c.window.x1.hi) || !std::isfinite(c.window.x2.lo) ||
        !std::isfinite(c.window.x2.hi))
      throw ConfigError("[export] window bounds must be finite");
    if (c.mc_grid_samples != 0 && c.mc_grid_samples < 10000)
      throw ConfigError("'export.mc_samples' must be 0 or at least 10000");
  }
  {
    Section s(tree, "evaluate");
    c.evaluate_k = static_cast<int>(s.integer("k", c.evaluate_k));
    c.evaluate_mc_samples = s.count("mc_samples", c.evaluate_mc_samples);
    c.evaluate_mc_seed = s.seed("mc_seed", c.evaluate_mc_seed);
    if (s.has("boxes")) {
      const json& v = s.raw("boxes");
      if (!v.is_array()) throw ConfigError("'evaluate.boxes' must be a list of boxes");
      for (const auto& b : v) {
        if (!b.is_array() || static_cast<int>(b.size()) != c.system.dims)
          throw ConfigError("each box in 'evaluate.boxes' needs one [lo, hi] per state dimension");
        StateBox box;
        for (const auto& side : b) box.sides.push_back(Section::as_interval(side, "'evaluate.boxes'"));
        c.boxes.push_back(std::move(box));
      }
    }
    s.finish();
    if (c.evaluate_k < 0) throw ConfigError("'evaluate.k' must be >= 0");
  }
  {
    Section s(tree, "output");
    c.output_dir = s.string("dir", c.output_dir.string());
    s.finish();
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json tree = path.empty() ? json::object() : read_config_tree(path);
  for (const auto& o : overrides) apply_override(tree, o);
  return decode_config(tree);
}

std::filesystem::path resolve_output(const std::filesystem::path& dir) {
  if (dir.is_absolute()) return dir;
  if (const char* root = std::getenv("BNF_OUTPUT_ROOT"); root && *root) return std::filesystem::path(root) / dir;
  return dir;
}

DiagonalTransform build_transform(const ExperimentConfig& cfg, const PointSet& states) {
  const DiagonalTransform g = moment_match(states, cfg.variance_buffer);
  if (cfg.transform_mode == TransformMode::Gaussian) return g;
  // Affine mode spans four buffered standard deviations on either side.
  std::vector<AxisMap> axes;
  for (const AxisMap& a : g.axes()) axes.push_back(AxisMap::affine(a.a - 4.0 * a.b, a.a + 4.0 * a.b));
  return DiagonalTransform(std::move(axes));
}

}  // namespace bnf::cli
