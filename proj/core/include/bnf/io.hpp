#pragma once

// Versioned on-disk formats. Every JSON envelope carries "format", "version"
// and a SHA-256 checksum of its own canonical body; tensors are stored inline
// or in a little-endian float64 sidecar file. See docs/formats.md.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bnf/flow.hpp"
#include "bnf/grid.hpp"
#include "bnf/propagation.hpp"
#include "bnf/systems.hpp"
#include "bnf/transform.hpp"

namespace bnf {

inline constexpr int kFormatVersion = 1;

struct SaveOptions {
  /// Write tensor coefficients to <file>.bin instead of inline JSON arrays.
  bool binary_payload = false;
};

// --- hashing ----------------------------------------------------------------

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::filesystem::path& path);

// --- models -----------------------------------------------------------------

struct StoredFlow {
  FlowModel model;
  DiagonalTransform transform;
};

struct StoredConditionalFlow {
  ConditionalFlowModel model;
  DiagonalTransform transform;
};

void save_model(const std::filesystem::path& path, const FlowModel& model, const DiagonalTransform& t,
                const SaveOptions& opts = {});
void save_model(const std::filesystem::path& path, const ConditionalFlowModel& model, const DiagonalTransform& t,
                const SaveOptions& opts = {});

/// "flow", "conditional_flow" or "belief".
std::string stored_kind(const std::filesystem::path& path);

StoredFlow load_flow(const std::filesystem::path& path);
StoredConditionalFlow load_conditional_flow(const std::filesystem::path& path);

// --- beliefs ----------------------------------------------------------------

void save_belief(const std::filesystem::path& path, const Belief& belief, const SaveOptions& opts = {});
Belief load_belief(const std::filesystem::path& path);

// --- datasets ---------------------------------------------------------------

/// Writes <path> (CSV with [initials] and [pairs] sections) and <path>.meta.json.
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

// --- exports ----------------------------------------------------------------

/// "# window x1=[lo,hi] x2=[lo,hi] nx=.. ny=.." then x1,x2,density rows.
void write_grid_csv(const std::filesystem::path& path, const DensityGrid& grid);
DensityGrid read_grid_csv(const std::filesystem::path& path);

struct MetricsRow {
  int k = 0;
  double test_loglik = 0.0;
  double mass_residual = 0.0;
  double wall_time_s = 0.0;
};

/// Header k,test_loglik,mass_residual,wall_time_s.
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);

void write_points_csv(const std::filesystem::path& path, const PointSet& points, const std::string& prefix = "x");
PointSet read_points_csv(const std::filesystem::path& path);

// --- run manifests ----------------------------------------------------------

struct FileRecord {
  std::string path;  // relative to the manifest's directory
  std::string sha256;
};

struct RunManifest {
  std::string tool_version;
  std::string command;
  std::string config_json;  // snapshot of the effective configuration
  std::map<std::string, std::uint64_t> seeds;
  std::vector<FileRecord> files;
  std::string created;  // UTC, ISO 8601
};

/// Hashes `files` (relative to the manifest directory) and writes the manifest.
void write_manifest(const std::filesystem::path& path, RunManifest manifest, const std::vector<std::string>& files);

/// Parses and re-hashes every referenced file; FormatError on any mismatch.
RunManifest load_manifest(const std::filesystem::path& path);

/// Current UTC time in ISO 8601.
std::string utc_timestamp();

}  // namespace bnf
