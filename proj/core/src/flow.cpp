#include "bnf/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "bnf/error.hpp"

namespace bnf {

using detail::require;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kSliceTol = 1e-9;
constexpr double kRaisedTol = -1e-12;

std::vector<int> normalize_raise(const FlowLayout& layout, std::vector<int> raise) {
  const auto total = static_cast<std::size_t>(layout.n() + layout.m());
  if (raise.empty()) raise.assign(total, 0);
  require(raise.size() == total, "certificate raise needs one entry per variable");
  for (int r : raise) require(r >= 0, "certificate raise must be non-negative");
  return raise;
}

// Coordinates of factor i: (u_1..u_i, w_1..w_m).
void factor_point(int i, std::span<const double> u, std::span<const double> w, std::vector<double>& out) {
  out.assign(u.begin(), u.begin() + i + 1);
  out.insert(out.end(), w.begin(), w.end());
}

double sum_log_factors(const TriangularFlow& m, std::span<const double> u, std::span<const double> w) {
  std::vector<double> point;
  double total = 0.0;
  for (int i = 0; i < m.dims(); ++i) {
    factor_point(i, u, w, point);
    const double value = eval(m.factor(i), point);
    if (!(value > 0.0)) return kNegInf;
    total += std::log(value);
  }
  return total;
}

void check_open_unit(std::span<const double> p, const char* what) {
  for (double v : p)
    require(v >= 0.0 && v <= 1.0, std::string(what) + ": point outside the unit box");
}

}  // namespace

// --- FlowLayout -------------------------------------------------------------

DegreeVector FlowLayout::factor_degree(int i) const {
  DegreeVector d(degree.begin(), degree.begin() + i + 1);
  d.back() -= 1;
  d.insert(d.end(), cond_degree.begin(), cond_degree.end());
  return d;
}

DegreeVector FlowLayout::factor_raise(int i, std::span<const int> per_variable) const {
  DegreeVector r(per_variable.begin(), per_variable.begin() + i + 1);
  r.insert(r.end(), per_variable.begin() + n(), per_variable.end());
  return r;
}

void FlowLayout::validate() const {
  require(n() >= 1, "flow needs at least one variable");
  for (int d : degree) require(d >= 1, "flow degrees must be >= 1");
  for (int e : cond_degree) require(e >= 0, "conditioning degrees must be >= 0");
}

// --- validation -------------------------------------------------------------

FactorDiagnostics diagnose_factors(const FlowLayout& layout, std::span<const BernsteinTensor> factors,
                                   std::span<const int> certificate_raise) {
  FactorDiagnostics diag{0.0, std::numeric_limits<double>::infinity()};
  for (int i = 0; i < layout.n(); ++i) {
    const BernsteinTensor& f = factors[static_cast<std::size_t>(i)];
    const BernsteinTensor sums = marginalize_axis(f, i);
    const double scale = static_cast<double>(f.extent(i));
    const double target = layout.slice_sum(i);
    for (double s : sums.coeffs()) diag.worst_slice_error = std::max(diag.worst_slice_error, std::abs(s * scale - target));

    const DegreeVector raise = layout.factor_raise(i, certificate_raise);
    DegreeVector raised = f.degree();
    for (std::size_t a = 0; a < raised.size(); ++a) raised[a] += raise[a];
    const BernsteinTensor lifted = degree_raise(f, raised);
    diag.min_raised_coeff = std::min(diag.min_raised_coeff, coeff_bounds(lifted).lower);
  }
  return diag;
}

void check_factors(const FlowLayout& layout, std::span<const BernsteinTensor> factors,
                   std::span<const int> certificate_raise) {
  layout.validate();
  require(static_cast<int>(factors.size()) == layout.n(), "flow needs one factor per variable");
  for (int i = 0; i < layout.n(); ++i) {
    const BernsteinTensor& f = factors[static_cast<std::size_t>(i)];
    if (f.degree() != layout.factor_degree(i))
      throw ContractError("factor " + std::to_string(i) + " has the wrong degree");
    for (double c : f.coeffs())
      if (!std::isfinite(c)) throw NumericalError("factor " + std::to_string(i) + " has a non-finite coefficient");
  }
  const FactorDiagnostics diag = diagnose_factors(layout, factors, certificate_raise);
  double tol = 0.0;
  for (int d : layout.degree) tol = std::max(tol, kSliceTol * std::max(1.0, static_cast<double>(d)));
  if (diag.worst_slice_error > tol)
    throw NumericalError("flow factor slice sums deviate from d_i by " + std::to_string(diag.worst_slice_error));
  if (diag.min_raised_coeff < kRaisedTol)
    throw NumericalError("flow factor has a negative raised coefficient " + std::to_string(diag.min_raised_coeff));
}

// --- models -----------------------------------------------------------------

TriangularFlow::TriangularFlow(FlowLayout layout, std::vector<BernsteinTensor> factors,
                               std::vector<int> certificate_raise)
    : layout_(std::move(layout)), factors_(std::move(factors)) {
  certificate_raise_ = normalize_raise(layout_, std::move(certificate_raise));
  check_factors(layout_, factors_, certificate_raise_);
}

FlowModel::FlowModel(DegreeVector degree, std::vector<BernsteinTensor> factors, std::vector<int> certificate_raise)
    : TriangularFlow(FlowLayout{std::move(degree), {}}, std::move(factors), std::move(certificate_raise)) {}

FlowModel FlowModel::uniform(DegreeVector degree) {
  const FlowLayout layout{degree, {}};
  layout.validate();
  std::vector<BernsteinTensor> factors;
  for (int i = 0; i < layout.n(); ++i) factors.emplace_back(layout.factor_degree(i), 1.0);
  return FlowModel(std::move(degree), std::move(factors));
}

ConditionalFlowModel::ConditionalFlowModel(DegreeVector degree, DegreeVector cond_degree,
                                           std::vector<BernsteinTensor> factors, std::vector<int> certificate_raise)
    : TriangularFlow(FlowLayout{std::move(degree), std::move(cond_degree)}, std::move(factors),
                     std::move(certificate_raise)) {
  require(layout().m() >= 1, "conditional flow needs at least one conditioning variable");
}

ConditionalFlowModel ConditionalFlowModel::uniform(DegreeVector degree, DegreeVector cond_degree) {
  const FlowLayout layout{degree, cond_degree};
  layout.validate();
  std::vector<BernsteinTensor> factors;
  for (int i = 0; i < layout.n(); ++i) factors.emplace_back(layout.factor_degree(i), 1.0);
  return ConditionalFlowModel(std::move(degree), std::move(cond_degree), std::move(factors));
}

FlowModel make_flow(const FlowLayout& layout, std::vector<BernsteinTensor> factors, std::vector<int> raise) {
  require(layout.m() == 0, "make_flow: layout is conditional");
  return FlowModel(layout.degree, std::move(factors), std::move(raise));
}

ConditionalFlowModel make_conditional_flow(const FlowLayout& layout, std::vector<BernsteinTensor> factors,
                                           std::vector<int> raise) {
  return ConditionalFlowModel(layout.degree, layout.cond_degree, std::move(factors), std::move(raise));
}

// --- densities --------------------------------------------------------------

double log_density(const FlowModel& m, std::span<const double> u) {
  require(static_cast<int>(u.size()) == m.dims(), "log_density: dimension mismatch");
  check_open_unit(u, "log_density");
  return sum_log_factors(m, u, {});
}

double log_density_x(const FlowModel& m, const DiagonalTransform& t, std::span<const double> x) {
  require(t.dims() == m.dims(), "log_density_x: transform dimension mismatch");
  const std::vector<double> u = t.forward(x);
  return log_density(m, u) + t.log_det_jacobian(x);
}

double conditional_log_density(const ConditionalFlowModel& m, std::span<const double> u,
                               std::span<const double> w) {
  require(static_cast<int>(u.size()) == m.dims(), "conditional_log_density: u dimension mismatch");
  require(static_cast<int>(w.size()) == m.cond_dims(), "conditional_log_density: w dimension mismatch");
  check_open_unit(u, "conditional_log_density");
  check_open_unit(w, "conditional_log_density");
  return sum_log_factors(m, u, w);
}

namespace {

BernsteinTensor product_of_factors(const TriangularFlow& m) {
  const int n = m.layout().n();
  const int total = n + m.layout().m();
  BernsteinTensor acc;
  for (int i = 0; i < n; ++i) {
    std::vector<int> axis_map;
    for (int a = 0; a <= i; ++a) axis_map.push_back(a);
    for (int a = 0; a < m.layout().m(); ++a) axis_map.push_back(n + a);
    BernsteinTensor f = embed(m.factor(i), total, axis_map);
    acc = i == 0 ? std::move(f) : multiply(acc, f);
  }
  return acc;
}

}  // namespace

BernsteinTensor to_tensor(const FlowModel& m) { return product_of_factors(m); }

BernsteinTensor to_conditional_tensor(const ConditionalFlowModel& m) { return product_of_factors(m); }

// --- sampling ---------------------------------------------------------------

double solve_monotone(const BernsteinTensor& G, const BernsteinTensor& g, double z) {
  require(G.dims() == 1 && g.dims() == 1, "solve_monotone: expects univariate polynomials");
  double lo = 0.0;
  double hi = 1.0;
  double glo = eval(G, std::span<const double>(&lo, 1)) - z;
  double ghi = eval(G, std::span<const double>(&hi, 1)) - z;
  if (glo > 1e-12 || ghi < -1e-12)
    throw NumericalError("solve_monotone: root is not bracketed by [0,1]; the flow is invalid");
  if (glo >= 0.0) return 0.0;
  if (ghi <= 0.0) return 1.0;
  while (hi - lo > 1e-6) {
    double mid = 0.5 * (lo + hi);
    const double v = eval(G, std::span<const double>(&mid, 1)) - z;
    (v < 0.0 ? lo : hi) = mid;
  }
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 50; ++it) {
    const double v = eval(G, std::span<const double>(&t, 1)) - z;
    const double slope = eval(g, std::span<const double>(&t, 1));
    if (v < 0.0) lo = t; else hi = t;
    double next = slope > 0.0 ? t - v / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - t);
    t = next;
    if (step < 1e-10 || hi - lo < 1e-10) break;
  }
  return t;
}

std::vector<double> invert_flow(const TriangularFlow& m, std::span<const double> z, std::span<const double> w) {
  const int n = m.dims();
  const int mm = m.layout().m();
  require(static_cast<int>(z.size()) == n && static_cast<int>(w.size()) == mm, "invert_flow: dimension mismatch");
  std::vector<double> u(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    BernsteinTensor slice = m.factor(i);
    for (int a = mm - 1; a >= 0; --a) slice = restrict_axis(slice, i + 1 + a, w[static_cast<std::size_t>(a)]);
    for (int a = i - 1; a >= 0; --a) slice = restrict_axis(slice, a, u[static_cast<std::size_t>(a)]);
    const BernsteinTensor G = antiderivative_axis(slice, 0);
    u[static_cast<std::size_t>(i)] = solve_monotone(G, slice, z[static_cast<std::size_t>(i)]);
  }
  return u;
}

PointSet sample(const FlowModel& m, Rng& rng, std::size_t count) {
  PointSet out(m.dims());
  out.reserve(count);
  std::vector<double> z(static_cast<std::size_t>(m.dims()));
  for (std::size_t k = 0; k < count; ++k) {
    for (double& v : z) v = rng.uniform();
    out.push_back(invert_flow(m, z, {}));
  }
  return out;
}

PointSet conditional_sample(const ConditionalFlowModel& m, std::span<const double> w, Rng& rng,
                            std::size_t count) {
  require(static_cast<int>(w.size()) == m.cond_dims(), "conditional_sample: w dimension mismatch");
  check_open_unit(w, "conditional_sample");
  // Restrict the conditioning axes once; the remaining flow is unconditional.
  std::vector<BernsteinTensor> factors;
  for (int i = 0; i < m.dims(); ++i) {
    BernsteinTensor f = m.factor(i);
    for (int a = m.cond_dims() - 1; a >= 0; --a) f = restrict_axis(f, i + 1 + a, w[static_cast<std::size_t>(a)]);
    factors.push_back(std::move(f));
  }
  PointSet out(m.dims());
  out.reserve(count);
  std::vector<double> z(static_cast<std::size_t>(m.dims()));
  std::vector<double> u(static_cast<std::size_t>(m.dims()));
  for (std::size_t k = 0; k < count; ++k) {
    for (double& v : z) v = rng.uniform();
    for (int i = 0; i < m.dims(); ++i) {
      BernsteinTensor slice = factors[static_cast<std::size_t>(i)];
      for (int a = i - 1; a >= 0; --a) slice = restrict_axis(slice, a, u[static_cast<std::size_t>(a)]);
      u[static_cast<std::size_t>(i)] = solve_monotone(antiderivative_axis(slice, 0), slice, z[static_cast<std::size_t>(i)]);
    }
    out.push_back(u);
  }
  return out;
}

}  // namespace bnf
