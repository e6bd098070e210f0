#pragma once

// Diagonal diffeomorphism Omega from state space onto the open unit box.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bnf/points.hpp"

namespace bnf {

enum class MapKind { GaussianCdf, Affine };

std::string to_string(MapKind kind);
MapKind map_kind_from_string(const std::string& name);

/// One monotone component Omega_i. For GaussianCdf, (a, b) = (mean, std);
/// for Affine, (a, b) = (lo, hi).
struct AxisMap {
  MapKind kind = MapKind::GaussianCdf;
  double a = 0.0;
  double b = 1.0;

  static AxisMap gaussian(double mean, double stddev);
  static AxisMap affine(double lo, double hi);

  /// Unclamped Omega_i(x); exactly 0 or 1 for infinite x.
  double cdf(double x) const;
  double inverse(double u) const;
  double log_derivative(double x) const;

  bool operator==(const AxisMap&) const = default;
};

/// Forward images are clamped into [kClampEps, 1 - kClampEps].
inline constexpr double kClampEps = 1e-12;

class DiagonalTransform {
 public:
  DiagonalTransform() = default;
  explicit DiagonalTransform(std::vector<AxisMap> axes);

  int dims() const { return static_cast<int>(axes_.size()); }
  const std::vector<AxisMap>& axes() const { return axes_; }
  const AxisMap& axis(int i) const { return axes_[static_cast<std::size_t>(i)]; }

  /// Writes Omega(x) into `u`; returns how many components were clamped.
  int forward(std::span<const double> x, std::span<double> u) const;
  std::vector<double> forward(std::span<const double> x) const;

  /// Omega^{-1}(u) for u strictly inside (0,1)^n.
  std::vector<double> inverse(std::span<const double> u) const;

  /// sum_i log dOmega_i/dx_i; -infinity when a derivative underflows.
  double log_det_jacobian(std::span<const double> x) const;

  bool operator==(const DiagonalTransform&) const = default;

 private:
  std::vector<AxisMap> axes_;
};

/// Mapped data plus how many points needed clamping.
struct MappedPoints {
  PointSet u;
  std::size_t clamped = 0;
};

MappedPoints map_points(const DiagonalTransform& t, const PointSet& x);

/// Gaussian CDF per dimension with sample mean and unbiased sample variance
/// plus `variance_buffer`.
DiagonalTransform moment_match(const PointSet& data, double variance_buffer);

// Standard normal helpers.
double normal_cdf(double z);
double normal_log_pdf(double z);
/// Inverse standard normal CDF: rational initial guess then Newton polish.
double normal_quantile(double p);

}  // namespace bnf
