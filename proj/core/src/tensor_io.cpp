#include "tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "bnf/error.hpp"
#include "bnf/io.hpp"

namespace bnf::detail {

namespace {

void put_le(double v, unsigned char* out) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int b = 0; b < 8; ++b) out[b] = static_cast<unsigned char>(bits >> (8 * b));
}

double get_le(const unsigned char* in) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(in[b]) << (8 * b);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  return j.at(key);
}

std::filesystem::path payload_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".bin";
  return p;
}

}  // namespace

json PayloadWriter::append(const BernsteinTensor& t) {
  const std::size_t offset = bytes_.size();
  bytes_.resize(offset + 8 * t.size());
  for (std::size_t i = 0; i < t.size(); ++i) put_le(t[i], bytes_.data() + offset + 8 * i);
  return json{{"offset", offset}, {"length", 8 * t.size()}};
}

std::vector<double> PayloadReader::read(std::size_t offset, std::size_t length) const {
  if (length % 8 != 0 || offset > bytes_.size() || length > bytes_.size() - offset)
    throw FormatError("payload reference out of range");
  std::vector<double> out(length / 8);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_le(bytes_.data() + offset + 8 * i);
  return out;
}

std::vector<int> int_vector(const json& j, const char* what) {
  if (!j.is_array()) throw FormatError(std::string(what) + " must be an array");
  std::vector<int> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw FormatError(std::string(what) + " must hold integers");
    out.push_back(v.get<int>());
  }
  return out;
}

json tensor_to_json(const BernsteinTensor& t, PayloadWriter* payload) {
  json j;
  j["degree"] = t.degree();
  if (payload)
    j["payload"] = payload->append(t);
  else
    j["coeffs"] = t.data();
  return j;
}

BernsteinTensor tensor_from_json(const json& j, const PayloadReader* payload) {
  const DegreeVector degree = int_vector(field(j, "degree"), "degree");
  for (int d : degree)
    if (d < 0) throw FormatError("negative tensor degree");
  std::vector<double> coeffs;
  if (j.contains("payload")) {
    if (!payload) throw FormatError("tensor refers to a binary payload but none was provided");
    const json& p = j.at("payload");
    coeffs = payload->read(field(p, "offset").get<std::size_t>(), field(p, "length").get<std::size_t>());
  } else {
    const json& c = field(j, "coeffs");
    if (!c.is_array()) throw FormatError("coeffs must be an array");
    coeffs.reserve(c.size());
    for (const auto& v : c) {
      if (!v.is_number()) throw FormatError("coeffs must be numbers");
      coeffs.push_back(v.get<double>());
    }
  }
  for (double v : coeffs)
    if (!std::isfinite(v)) throw FormatError("non-finite tensor coefficient");
  try {
    return BernsteinTensor(degree, std::move(coeffs));
  } catch (const ContractError& e) {
    throw FormatError(std::string("invalid tensor: ") + e.what());
  }
}

json transform_to_json(const DiagonalTransform& t) {
  json axes = json::array();
  for (const AxisMap& a : t.axes()) axes.push_back({{"kind", to_string(a.kind)}, {"a", a.a}, {"b", a.b}});
  return json{{"axes", axes}};
}

DiagonalTransform transform_from_json(const json& j) {
  std::vector<AxisMap> axes;
  try {
    for (const auto& a : field(j, "axes")) {
      const MapKind kind = map_kind_from_string(field(a, "kind").get<std::string>());
      const double lo = field(a, "a").get<double>();
      const double hi = field(a, "b").get<double>();
      axes.push_back(kind == MapKind::GaussianCdf ? AxisMap::gaussian(lo, hi) : AxisMap::affine(lo, hi));
    }
    return DiagonalTransform(std::move(axes));
  } catch (const ContractError& e) {
    throw FormatError(std::string("invalid transform: ") + e.what());
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid transform: ") + e.what());
  }
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<unsigned char> out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  const auto b = read_bytes(path);
  return std::string(b.begin(), b.end());
}

void write_bytes(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw IoError("error writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' into place: " + ec.message());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, text.data(), text.size());
}

void write_envelope(const std::filesystem::path& path, const std::string& format, json body,
                    const PayloadWriter* payload) {
  body["format"] = format;
  body["version"] = kFormatVersion;
  if (payload && !payload->bytes().empty()) {
    const auto& bytes = payload->bytes();
    write_bytes(payload_path(path), bytes.data(), bytes.size());
    body["payload"] = {{"file", payload_path(path).filename().string()},
                       {"bytes", bytes.size()},
                       {"sha256", sha256_hex(std::span<const unsigned char>(bytes))}};
  }
  // dump() sorts keys, so the checksum is recomputable from the parsed file.
  body.erase("checksum");
  body["checksum"] = sha256_hex(body.dump());
  write_text(path, body.dump(1) + "\n");
}

Envelope read_envelope(const std::filesystem::path& path, const std::string& format) {
  const std::string text = read_text(path);
  json body;
  try {
    body = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!body.is_object()) throw FormatError("'" + path.string() + "' is not a JSON object");
  const json& fmt = field(body, "format");
  if (!fmt.is_string() || fmt.get<std::string>() != format)
    throw FormatError("'" + path.string() + "' is not a " + format + " file");
  const json& ver = field(body, "version");
  if (!ver.is_number_integer() || ver.get<int>() != kFormatVersion)
    throw FormatError("'" + path.string() + "' has unsupported format version " + ver.dump());
  const json& sum = field(body, "checksum");
  json unsealed = body;
  unsealed.erase("checksum");
  if (!sum.is_string() || sum.get<std::string>() != sha256_hex(unsealed.dump()))
    throw FormatError("'" + path.string() + "' failed its checksum");
  Envelope env;
  if (body.contains("payload")) {
    const json& p = body.at("payload");
    const std::filesystem::path bin = path.parent_path() / field(p, "file").get<std::string>();
    auto bytes = read_bytes(bin);
    if (bytes.size() != field(p, "bytes").get<std::size_t>() ||
        sha256_hex(std::span<const unsigned char>(bytes)) != field(p, "sha256").get<std::string>())
      throw FormatError("binary payload '" + bin.string() + "' does not match its envelope");
    env.payload = std::make_unique<PayloadReader>(std::move(bytes));
  }
  env.body = std::move(unsealed);
  return env;
}

std::string peek_format(const std::filesystem::path& path) {
  try {
    const json body = json::parse(read_text(path));
    return field(body, "format").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError("'" + path.string() + "' is not a bnf file: " + e.what());
  }
}

}  // namespace bnf::detail
