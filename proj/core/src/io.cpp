#include "bnf/io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "bnf/error.hpp"
#include "tensor_io.hpp"

namespace bnf {

using detail::json;

namespace {

constexpr const char* kFlowFormat = "bnf.flow_model";
constexpr const char* kConditionalFormat = "bnf.conditional_flow_model";
constexpr const char* kBeliefFormat = "bnf.belief";
constexpr const char* kDatasetFormat = "bnf.dataset";
constexpr const char* kManifestFormat = "bnf.manifest";

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json model_body(const TriangularFlow& m, const DiagonalTransform& t, const SaveOptions& opts,
                detail::PayloadWriter& payload) {
  json factors = json::array();
  for (const auto& f : m.factors()) factors.push_back(detail::tensor_to_json(f, opts.binary_payload ? &payload : nullptr));
  return json{{"degree", m.layout().degree},
              {"cond_degree", m.layout().cond_degree},
              {"certificate_raise", m.certificate_raise()},
              {"factors", factors},
              {"transform", detail::transform_to_json(t)}};
}

struct ParsedModel {
  DegreeVector degree;
  DegreeVector cond_degree;
  std::vector<int> raise;
  std::vector<BernsteinTensor> factors;
  DiagonalTransform transform;
};

ParsedModel parse_model(const std::filesystem::path& path, const char* format) {
  const detail::Envelope env = detail::read_envelope(path, format);
  try {
    ParsedModel p;
    p.degree = detail::int_vector(env.body.at("degree"), "degree");
    p.cond_degree = detail::int_vector(env.body.at("cond_degree"), "cond_degree");
    p.raise = detail::int_vector(env.body.at("certificate_raise"), "certificate_raise");
    for (const auto& f : env.body.at("factors")) p.factors.push_back(detail::tensor_from_json(f, env.payload.get()));
    p.transform = detail::transform_from_json(env.body.at("transform"));
    if (p.transform.dims() != static_cast<int>(p.degree.size()))
      throw FormatError("model transform dimension does not match the model");
    return p;
  } catch (const json::exception& e) {
    throw FormatError("'" + path.string() + "': malformed model: " + e.what());
  }
}

// Re-validation failures on load are format errors.
template <typename Fn>
auto revalidate(const std::filesystem::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ContractError& e) {
    throw FormatError("'" + path.string() + "' holds an invalid object: " + e.what());
  } catch (const NumericalError& e) {
    throw FormatError("'" + path.string() + "' holds an invalid object: " + e.what());
  }
}

std::filesystem::path meta_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".meta.json";
  return p;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    while (used < s.size() && (s[used] == ' ' || s[used] == '\r')) ++used;
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("'" + path.string() + "' line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

std::string header(const std::string& prefix, int dims, const std::string& suffix = "") {
  std::string h;
  for (int i = 0; i < dims; ++i) h += (i ? "," : "") + prefix + std::to_string(i + 1) + suffix;
  return h;
}

void append_row(std::string& out, std::span<const double> a, std::span<const double> b = {}) {
  bool first = true;
  for (double v : a) {
    out += (first ? "" : ",") + fmt17(v);
    first = false;
  }
  for (double v : b) out += "," + fmt17(v);
  out += '\n';
}

}  // namespace

// --- hashing ----------------------------------------------------------------

std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("SHA-256 computation failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return os.str();
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string sha256_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_bytes(path);
  return sha256_hex(std::span<const unsigned char>(bytes));
}

// --- models -----------------------------------------------------------------

void save_model(const std::filesystem::path& path, const FlowModel& model, const DiagonalTransform& t,
                const SaveOptions& opts) {
  detail::require(t.dims() == model.dims(), "save_model: transform dimension mismatch");
  detail::PayloadWriter payload;
  detail::write_envelope(path, kFlowFormat, model_body(model, t, opts, payload), &payload);
}

void save_model(const std::filesystem::path& path, const ConditionalFlowModel& model, const DiagonalTransform& t,
                const SaveOptions& opts) {
  detail::require(t.dims() == model.dims(), "save_model: transform dimension mismatch");
  detail::PayloadWriter payload;
  detail::write_envelope(path, kConditionalFormat, model_body(model, t, opts, payload), &payload);
}

std::string stored_kind(const std::filesystem::path& path) {
  const std::string f = detail::peek_format(path);
  if (f == kFlowFormat) return "flow";
  if (f == kConditionalFormat) return "conditional_flow";
  if (f == kBeliefFormat) return "belief";
  throw FormatError("'" + path.string() + "' is not a model or belief file (format '" + f + "')");
}

StoredFlow load_flow(const std::filesystem::path& path) {
  ParsedModel p = parse_model(path, kFlowFormat);
  if (!p.cond_degree.empty()) throw FormatError("flow model file has conditioning variables");
  return revalidate(path, [&] {
    return StoredFlow{FlowModel(p.degree, std::move(p.factors), p.raise), p.transform};
  });
}

StoredConditionalFlow load_conditional_flow(const std::filesystem::path& path) {
  ParsedModel p = parse_model(path, kConditionalFormat);
  return revalidate(path, [&] {
    return StoredConditionalFlow{ConditionalFlowModel(p.degree, p.cond_degree, std::move(p.factors), p.raise),
                                 p.transform};
  });
}

// --- beliefs ----------------------------------------------------------------

void save_belief(const std::filesystem::path& path, const Belief& belief, const SaveOptions& opts) {
  detail::PayloadWriter payload;
  json body{{"k", belief.k},
            {"density", detail::tensor_to_json(belief.density, opts.binary_payload ? &payload : nullptr)},
            {"transform", detail::transform_to_json(belief.transform)},
            {"certificate",
             {{"raise", belief.certificate.raise},
              {"min_coeff", belief.certificate.min_coeff},
              {"mass_residual", belief.certificate.mass_residual}}}};
  detail::write_envelope(path, kBeliefFormat, std::move(body), &payload);
}

Belief load_belief(const std::filesystem::path& path) {
  const detail::Envelope env = detail::read_envelope(path, kBeliefFormat);
  try {
    const int k = env.body.at("k").get<int>();
    BernsteinTensor density = detail::tensor_from_json(env.body.at("density"), env.payload.get());
    DiagonalTransform t = detail::transform_from_json(env.body.at("transform"));
    std::vector<int> raise = detail::int_vector(env.body.at("certificate").at("raise"), "certificate raise");
    if (k < 0) throw FormatError("belief time index must be >= 0");
    return revalidate(path, [&] { return make_belief(k, std::move(density), std::move(t), std::move(raise)); });
  } catch (const json::exception& e) {
    throw FormatError("'" + path.string() + "': malformed belief: " + e.what());
  }
}

// --- datasets ---------------------------------------------------------------

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  const int n = data.initials.dim();
  std::string csv = "[initials]\n" + header("x", n) + "\n";
  for (std::size_t i = 0; i < data.initials.size(); ++i) append_row(csv, data.initials[i]);
  csv += "[pairs]\n" + header("x", n) + "," + header("x", n, "p") + "\n";
  for (std::size_t i = 0; i < data.from.size(); ++i) append_row(csv, data.from[i], data.to[i]);
  detail::write_text(path, csv);
  json meta{{"system", data.meta.system},
            {"seed", data.meta.seed},
            {"dims", n},
            {"initials", data.meta.initials},
            {"trajectories", data.meta.trajectories},
            {"horizon", data.meta.horizon},
            {"pairs", data.from.size()},
            {"data_file", path.filename().string()},
            {"data_sha256", sha256_hex(csv)}};
  detail::write_envelope(meta_path(path), kDatasetFormat, std::move(meta), nullptr);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const detail::Envelope env = detail::read_envelope(meta_path(path), kDatasetFormat);
  const std::string csv = detail::read_text(path);
  Dataset d;
  int n = 0;
  try {
    if (sha256_hex(csv) != env.body.at("data_sha256").get<std::string>())
      throw FormatError("'" + path.string() + "' does not match the hash in its metadata");
    n = env.body.at("dims").get<int>();
    d.meta.system = env.body.at("system").get<std::string>();
    d.meta.seed = env.body.at("seed").get<std::uint64_t>();
    d.meta.initials = env.body.at("initials").get<std::size_t>();
    d.meta.trajectories = env.body.at("trajectories").get<std::size_t>();
    d.meta.horizon = env.body.at("horizon").get<int>();
  } catch (const json::exception& e) {
    throw FormatError("'" + path.string() + "': malformed dataset metadata: " + e.what());
  }
  if (n < 1) throw FormatError("dataset dimension must be >= 1");
  d.initials = PointSet(n);
  d.from = PointSet(n);
  d.to = PointSet(n);

  std::istringstream in(csv);
  std::string line;
  std::size_t lineno = 0;
  enum { None, Initials, Pairs } section = None;
  bool expect_header = false;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == "[initials]" || line == "[pairs]") {
      section = line == "[initials]" ? Initials : Pairs;
      expect_header = true;
      continue;
    }
    if (expect_header) {
      const std::string want = section == Initials ? header("x", n) : header("x", n) + "," + header("x", n, "p");
      if (line != want) throw FormatError("'" + path.string() + "' line " + std::to_string(lineno) + ": bad header");
      expect_header = false;
      continue;
    }
    if (section == None) throw FormatError("'" + path.string() + "': data before the first section");
    const auto cells = split(line, ',');
    const std::size_t want = static_cast<std::size_t>(section == Initials ? n : 2 * n);
    if (cells.size() != want)
      throw FormatError("'" + path.string() + "' line " + std::to_string(lineno) + ": wrong column count");
    row.clear();
    for (const auto& c : cells) row.push_back(parse_double(c, path, lineno));
    const std::span<const double> r(row);
    if (section == Initials) {
      d.initials.push_back(r);
    } else {
      d.from.push_back(r.subspan(0, static_cast<std::size_t>(n)));
      d.to.push_back(r.subspan(static_cast<std::size_t>(n)));
    }
  }
  revalidate(path, [&] {
    d.validate();
    return 0;
  });
  return d;
}

// --- exports ----------------------------------------------------------------

void write_grid_csv(const std::filesystem::path& path, const DensityGrid& grid) {
  const GridWindow& w = grid.window;
  std::string out = "# window x1=[" + fmt17(w.x1.lo) + "," + fmt17(w.x1.hi) + "] x2=[" + fmt17(w.x2.lo) + "," +
                    fmt17(w.x2.hi) + "] nx=" + std::to_string(w.nx) + " ny=" + std::to_string(w.ny) + "\n";
  out += "x1,x2,density\n";
  for (int i = 0; i < w.nx; ++i)
    for (int j = 0; j < w.ny; ++j) {
      const double r[3] = {w.x1_center(i), w.x2_center(j), grid.at(i, j)};
      append_row(out, r);
    }
  detail::write_text(path, out);
}

DensityGrid read_grid_csv(const std::filesystem::path& path) {
  std::istringstream in(detail::read_text(path));
  std::string line;
  DensityGrid g;
  if (!std::getline(in, line) ||
      std::sscanf(line.c_str(), "# window x1=[%lf,%lf] x2=[%lf,%lf] nx=%d ny=%d", &g.window.x1.lo, &g.window.x1.hi,
                  &g.window.x2.lo, &g.window.x2.hi, &g.window.nx, &g.window.ny) != 6)
    throw FormatError("'" + path.string() + "': missing window comment line");
  if (!std::getline(in, line) || line != "x1,x2,density") throw FormatError("'" + path.string() + "': bad header");
  try {
    g.window.validate();
  } catch (const ContractError& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 3) throw FormatError("'" + path.string() + "': wrong column count");
    g.values.push_back(parse_double(cells[2], path, lineno));
  }
  if (g.values.size() != static_cast<std::size_t>(g.window.nx) * g.window.ny)
    throw FormatError("'" + path.string() + "': grid is not complete");
  return g;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  std::string out = "k,test_loglik,mass_residual,wall_time_s\n";
  for (const auto& r : rows)
    out += std::to_string(r.k) + "," + fmt17(r.test_loglik) + "," + fmt17(r.mass_residual) + "," +
           fmt17(r.wall_time_s) + "\n";
  detail::write_text(path, out);
}

void write_points_csv(const std::filesystem::path& path, const PointSet& points, const std::string& prefix) {
  std::string out = header(prefix, points.dim()) + "\n";
  for (std::size_t i = 0; i < points.size(); ++i) append_row(out, points[i]);
  detail::write_text(path, out);
}

PointSet read_points_csv(const std::filesystem::path& path) {
  std::istringstream in(detail::read_text(path));
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw FormatError("'" + path.string() + "': missing header");
  const int dims = static_cast<int>(split(line, ',').size());
  PointSet out(dims);
  std::vector<double> row;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (static_cast<int>(cells.size()) != dims) throw FormatError("'" + path.string() + "': wrong column count");
    row.clear();
    for (const auto& c : cells) row.push_back(parse_double(c, path, lineno));
    out.push_back(row);
  }
  return out;
}

// --- run manifests ----------------------------------------------------------

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const std::filesystem::path& path, RunManifest manifest, const std::vector<std::string>& files) {
  const std::filesystem::path dir = path.parent_path();
  manifest.files.clear();
  for (const auto& f : files) manifest.files.push_back({f, sha256_file(dir / f)});
  json config;
  try {
    config = manifest.config_json.empty() ? json::object() : json::parse(manifest.config_json);
  } catch (const json::parse_error& e) {
    throw ContractError(std::string("manifest config snapshot is not JSON: ") + e.what());
  }
  json recs = json::array();
  for (const auto& r : manifest.files) recs.push_back({{"path", r.path}, {"sha256", r.sha256}});
  json body{{"tool_version", manifest.tool_version},
            {"command", manifest.command},
            {"config", config},
            {"seeds", manifest.seeds},
            {"files", recs},
            {"created", manifest.created.empty() ? utc_timestamp() : manifest.created}};
  detail::write_envelope(path, kManifestFormat, std::move(body), nullptr);
}

RunManifest load_manifest(const std::filesystem::path& path) {
  const detail::Envelope env = detail::read_envelope(path, kManifestFormat);
  RunManifest m;
  try {
    m.tool_version = env.body.at("tool_version").get<std::string>();
    m.command = env.body.at("command").get<std::string>();
    m.config_json = env.body.at("config").dump();
    m.seeds = env.body.at("seeds").get<std::map<std::string, std::uint64_t>>();
    m.created = env.body.at("created").get<std::string>();
    for (const auto& r : env.body.at("files"))
      m.files.push_back({r.at("path").get<std::string>(), r.at("sha256").get<std::string>()});
  } catch (const json::exception& e) {
    throw FormatError("'" + path.string() + "': malformed manifest: " + e.what());
  }
  for (const auto& r : m.files) {
    const std::filesystem::path f = path.parent_path() / r.path;
    if (!std::filesystem::exists(f)) throw FormatError("manifest references missing file '" + f.string() + "'");
    if (sha256_file(f) != r.sha256) throw FormatError("hash mismatch for '" + f.string() + "'");
  }
  return m;
}

}  // namespace bnf
