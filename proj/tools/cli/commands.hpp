#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace bnf::cli {

enum class ModelRole { Initial, Transition };

/// File layout of one experiment output directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path train() const { return root / "data" / "train.csv"; }
  std::filesystem::path test(int k) const;
  std::filesystem::path model(ModelRole role) const;
  std::filesystem::path training_log(ModelRole role) const;
  std::filesystem::path belief(int k) const;
  std::filesystem::path grid(int k) const;
  std::filesystem::path mc_grid(int k) const;
  std::filesystem::path metrics() const { return root / "metrics.csv"; }
  std::filesystem::path manifest(const std::string& step) const { return root / ("manifest_" + step + ".json"); }
};

struct Context {
  std::ostream& out;  // results
  std::ostream& log;  // progress
  int log_every = 50;
  std::string command_line;
};

void cmd_generate(const ExperimentConfig& cfg, Context& ctx);
void cmd_fit(const ExperimentConfig& cfg, ModelRole role, Context& ctx);
void cmd_propagate(const ExperimentConfig& cfg, Context& ctx);

struct EvaluateOptions {
  std::optional<std::filesystem::path> belief;  // default: the run's belief at cfg.evaluate_k
  std::vector<StateBox> boxes;                  // default: cfg.boxes, else the whole space
  bool mc_check = false;
};
/// Prints one CSV row per box; with mc_check throws NumericalError if any box
/// misses the Monte Carlo frequency by more than three standard errors.
void cmd_evaluate(const ExperimentConfig& cfg, const EvaluateOptions& opts, Context& ctx);

struct SampleOptions {
  std::filesystem::path model;  // flow, conditional flow or belief file
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  std::vector<double> given;    // state to condition on, conditional models only
  std::optional<std::filesystem::path> output;  // default: stdout
};
void cmd_sample(const SampleOptions& opts, Context& ctx);

struct KsOptions {
  std::filesystem::path model;  // flow or belief file
  std::size_t count = 100000;
  std::uint64_t seed = 0;
  double threshold = 0.0;       // > 0: fail when any axis exceeds it
};
/// Per-axis Kolmogorov-Smirnov distance between samples and the exact marginal CDF.
std::vector<double> cmd_ks(const KsOptions& opts, Context& ctx);

/// generate, fit initial, fit transition, propagate.
void cmd_run(const ExperimentConfig& cfg, Context& ctx);

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bnf::cli
