#pragma once

// Experiment configuration: TOML or JSON files decoded through one JSON tree,
// with dotted-path overrides applied before decoding.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bnf/grid.hpp"
#include "bnf/propagation.hpp"
#include "bnf/systems.hpp"
#include "bnf/training.hpp"
#include "bnf/transform.hpp"

namespace bnf::cli {

using json = nlohmann::json;

enum class TransformMode { Gaussian, Affine };

struct ModelConfig {
  DegreeVector degree;
  TrainConfig train;
};

struct ExperimentConfig {
  SystemSpec system;
  GenerateOptions data;
  std::size_t test_samples = 10000;
  std::uint64_t test_seed = 1;

  TransformMode transform_mode = TransformMode::Gaussian;
  double variance_buffer = 2.2;

  ModelConfig initial;
  ModelConfig transition;

  int horizon = 9;

  GridWindow window{{-3.0, 3.0}, {-3.0, 3.0}, 50, 50};
  std::size_t mc_grid_samples = 0;  // 0 disables Monte Carlo grid export
  std::uint64_t mc_seed = 2;
  bool binary_payload = false;

  int evaluate_k = 5;
  std::vector<StateBox> boxes;
  std::size_t evaluate_mc_samples = 100000;
  std::uint64_t evaluate_mc_seed = 3;

  std::filesystem::path output_dir = "runs/default";

  /// The merged tree the config was decoded from; stored in manifests.
  json source;
};

/// Parses a .toml or .json file into a JSON tree.
json read_config_tree(const std::filesystem::path& path);

/// Applies "a.b.c=value"; value is parsed as JSON when possible, else taken as a string.
void apply_override(json& tree, const std::string& assignment);

/// Decodes and validates; unknown keys are rejected. Throws ConfigError.
ExperimentConfig decode_config(const json& tree);

/// read_config_tree + overrides + decode. An empty path starts from defaults.
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// Output directory with BNF_OUTPUT_ROOT prefixed to relative paths.
std::filesystem::path resolve_output(const std::filesystem::path& dir);

/// Omega from the pooled states, per the configured mode.
DiagonalTransform build_transform(const ExperimentConfig& cfg, const PointSet& states);

}  // namespace bnf::cli
