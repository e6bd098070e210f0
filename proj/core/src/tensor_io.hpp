#pragma once

// JSON plumbing shared by the io module. Not installed.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "bnf/bernstein.hpp"
#include "bnf/transform.hpp"

namespace bnf::detail {

using json = nlohmann::json;

/// Collects tensor coefficients for a binary sidecar file.
class PayloadWriter {
 public:
  json append(const BernsteinTensor& t);
  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class PayloadReader {
 public:
  explicit PayloadReader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}
  std::vector<double> read(std::size_t offset, std::size_t length) const;

 private:
  std::vector<unsigned char> bytes_;
};

json tensor_to_json(const BernsteinTensor& t, PayloadWriter* payload);
BernsteinTensor tensor_from_json(const json& j, const PayloadReader* payload);

json transform_to_json(const DiagonalTransform& t);
DiagonalTransform transform_from_json(const json& j);

std::vector<int> int_vector(const json& j, const char* what);

/// Reads the whole file; IoError if it cannot be opened.
std::vector<unsigned char> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_bytes(const std::filesystem::path& path, const void* data, std::size_t size);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Adds format, version and checksum, then writes the envelope. If `payload`
/// holds data it is written to <path>.bin and referenced from the envelope.
void write_envelope(const std::filesystem::path& path, const std::string& format, json body,
                    const PayloadWriter* payload);

struct Envelope {
  json body;
  std::unique_ptr<PayloadReader> payload;
};

/// Parses, checks format/version/checksum and loads the payload if any.
Envelope read_envelope(const std::filesystem::path& path, const std::string& format);

/// Format tag of an envelope without further checks.
std::string peek_format(const std::filesystem::path& path);

}  // namespace bnf::detail
