#pragma once

// Discrete-time stochastic systems used to generate training data and the
// Monte Carlo ground truth.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bnf/grid.hpp"
#include "bnf/points.hpp"
#include "bnf/rng.hpp"

namespace bnf {

enum class SystemKind { VanDerPol, StableOscillator, Custom };

std::string to_string(SystemKind kind);
SystemKind system_kind_from_string(const std::string& name);

struct GaussianComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<std::vector<double>> cov;
};

/// Additive or multiplicative process noise: none, one Gaussian, or a mixture.
struct NoiseSpec {
  std::vector<GaussianComponent> components;  // empty = no noise

  static NoiseSpec none() { return {}; }
  static NoiseSpec gaussian(std::vector<double> mean, std::vector<std::vector<double>> cov);

  void validate(int dims) const;
  std::vector<double> sample(Rng& rng) const;
};

/// x' = f(x, v) for a custom system.
using StepFunction = std::function<void(std::span<const double> x, std::span<const double> v, std::span<double> out)>;

struct SystemSpec {
  SystemKind kind = SystemKind::VanDerPol;
  int dims = 2;
  double dt = 0.3;
  double mu = 1.0;
  NoiseSpec noise;
  StepFunction custom;

  /// Euler-discretized Van der Pol with N(0, 0.1 I) additive noise.
  static SystemSpec vanderpol(double mu = 1.0);
  /// Cubic stable oscillator with multiplicative two-component mixture noise.
  static SystemSpec oscillator();

  void validate() const;
};

struct GaussianInit {
  std::vector<double> mean{0.2, 0.1};
  std::vector<std::vector<double>> cov{{0.2, 0.0}, {0.0, 0.2}};

  std::vector<double> sample(Rng& rng) const;
  void validate(int dims) const;
};

/// One step with the given noise realization.
std::vector<double> step_with_noise(const SystemSpec& spec, std::span<const double> x, std::span<const double> v);
/// One step with sampled noise.
std::vector<double> step(const SystemSpec& spec, std::span<const double> x, Rng& rng);

struct DatasetMeta {
  std::string system;
  std::uint64_t seed = 0;
  std::size_t initials = 0;
  std::size_t trajectories = 0;
  int horizon = 0;
};

struct Dataset {
  PointSet initials;  // samples of x_0
  PointSet from;      // x_k
  PointSet to;        // x_{k+1}
  DatasetMeta meta;

  /// Every stored state, used to fit the state-space transform.
  PointSet all_states() const;
  void validate() const;
};

struct GenerateOptions {
  std::size_t initials = 1000;
  std::size_t trajectories = 1000;
  int horizon = 10;
  std::uint64_t seed = 0;
  GaussianInit init;
};

Dataset generate(const SystemSpec& spec, const GenerateOptions& opts);

/// States of `samples` independent trajectories at steps 0..horizon.
std::vector<PointSet> mc_trajectories(const SystemSpec& spec, const GaussianInit& init, int horizon,
                                      std::size_t samples, std::uint64_t seed);

/// 2-D histogram density of the state at step k (samples >= 1e4).
DensityGrid mc_belief_grid(const SystemSpec& spec, const GaussianInit& init, int k, std::size_t samples,
                           const GridWindow& window, std::uint64_t seed);

/// Histogram density of given points over a window.
DensityGrid histogram_grid(const PointSet& points, const GridWindow& window);

}  // namespace bnf
