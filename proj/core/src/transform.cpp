#include "bnf/transform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "bnf/error.hpp"

namespace bnf {

using detail::require;

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}  // namespace

std::string to_string(MapKind kind) {
  return kind == MapKind::GaussianCdf ? "gaussian_cdf" : "affine";
}

MapKind map_kind_from_string(const std::string& name) {
  if (name == "gaussian_cdf") return MapKind::GaussianCdf;
  if (name == "affine") return MapKind::Affine;
  throw ContractError("unknown transform kind '" + name + "'");
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_log_pdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, "normal_quantile: probability must lie in (0,1)");
  // Acklam's rational approximation, relative error about 1e-9.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Newton polish. In the upper tail work with the complement to keep precision.
  for (int it = 0; it < 2; ++it) {
    const double density = std::exp(normal_log_pdf(x));
    if (density <= 0.0) break;
    const double err = p < 0.5 ? normal_cdf(x) - p : (1.0 - p) - 0.5 * std::erfc(x / std::numbers::sqrt2);
    x -= err / density;
  }
  return x;
}

// --- AxisMap ----------------------------------------------------------------

AxisMap AxisMap::gaussian(double mean, double stddev) {
  require(std::isfinite(mean) && std::isfinite(stddev) && stddev > 0.0,
          "gaussian map needs a finite mean and a positive std");
  return {MapKind::GaussianCdf, mean, stddev};
}

AxisMap AxisMap::affine(double lo, double hi) {
  require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "affine map needs finite lo < hi");
  return {MapKind::Affine, lo, hi};
}

double AxisMap::cdf(double x) const {
  if (kind == MapKind::GaussianCdf) return normal_cdf((x - a) / b);
  return std::clamp((x - a) / (b - a), 0.0, 1.0);
}

double AxisMap::inverse(double u) const {
  if (kind == MapKind::GaussianCdf) return a + b * normal_quantile(u);
  return a + u * (b - a);
}

double AxisMap::log_derivative(double x) const {
  if (!std::isfinite(x)) return kNegInf;
  if (kind == MapKind::GaussianCdf) return normal_log_pdf((x - a) / b) - std::log(b);
  if (x < a || x > b) return kNegInf;
  return -std::log(b - a);
}

// --- DiagonalTransform ------------------------------------------------------

DiagonalTransform::DiagonalTransform(std::vector<AxisMap> axes) : axes_(std::move(axes)) {
  require(!axes_.empty(), "transform needs at least one dimension");
  for (const AxisMap& m : axes_) {
    if (m.kind == MapKind::GaussianCdf)
      require(std::isfinite(m.a) && std::isfinite(m.b) && m.b > 0.0, "gaussian map needs std > 0");
    else
      require(std::isfinite(m.a) && std::isfinite(m.b) && m.a < m.b, "affine map needs lo < hi");
  }
}

int DiagonalTransform::forward(std::span<const double> x, std::span<double> u) const {
  require(static_cast<int>(x.size()) == dims() && u.size() == x.size(), "forward: dimension mismatch");
  int clamped = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw ContractError("forward: non-finite state component");
    const double raw = axes_[i].cdf(x[i]);
    const double c = std::clamp(raw, kClampEps, 1.0 - kClampEps);
    if (c != raw) ++clamped;
    u[i] = c;
  }
  return clamped;
}

std::vector<double> DiagonalTransform::forward(std::span<const double> x) const {
  std::vector<double> u(x.size());
  forward(x, u);
  return u;
}

std::vector<double> DiagonalTransform::inverse(std::span<const double> u) const {
  require(static_cast<int>(u.size()) == dims(), "inverse: dimension mismatch");
  std::vector<double> x(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(u[i] > 0.0 && u[i] < 1.0)) throw ContractError("inverse: u must lie strictly inside (0,1)");
    x[i] = axes_[i].inverse(u[i]);
  }
  return x;
}

double DiagonalTransform::log_det_jacobian(std::span<const double> x) const {
  require(static_cast<int>(x.size()) == dims(), "log_det_jacobian: dimension mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += axes_[i].log_derivative(x[i]);
  return std::isnan(sum) ? kNegInf : sum;
}

MappedPoints map_points(const DiagonalTransform& t, const PointSet& x) {
  require(x.dim() == t.dims(), "map_points: dimension mismatch");
  MappedPoints out{PointSet(x.dim(), x.size()), 0};
  for (std::size_t i = 0; i < x.size(); ++i)
    if (t.forward(x[i], out.u[i]) > 0) ++out.clamped;
  return out;
}

DiagonalTransform moment_match(const PointSet& data, double variance_buffer) {
  require(data.size() >= 2, "moment_match needs at least two points");
  require(variance_buffer >= 0.0 && std::isfinite(variance_buffer), "variance buffer must be >= 0");
  const int n = data.dim();
  std::vector<AxisMap> axes;
  for (int i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double v = data[k][static_cast<std::size_t>(i)];
      require(std::isfinite(v), "moment_match: non-finite data");
      mean += (v - mean) / static_cast<double>(k + 1);
    }
    double ss = 0.0;
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double dv = data[k][static_cast<std::size_t>(i)] - mean;
      ss += dv * dv;
    }
    const double var = ss / static_cast<double>(data.size() - 1);
    if (!(var > 0.0)) throw ContractError("moment_match: zero variance in dimension " + std::to_string(i));
    axes.push_back(AxisMap::gaussian(mean, std::sqrt(var + variance_buffer)));
  }
  return DiagonalTransform(std::move(axes));
}

}  // namespace bnf
