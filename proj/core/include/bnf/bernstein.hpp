#pragma once

// Multivariate Bernstein polynomials on the unit box [0,1]^n.
//
// A BernsteinTensor of degree d = (d_1, ..., d_n) stores the coefficients b_j of
//   p(u) = sum_j b_j prod_i C(d_i, j_i) u_i^j_i (1 - u_i)^(d_i - j_i)
// as a dense row-major tensor of shape (d_1 + 1) x ... x (d_n + 1); the last axis
// is contiguous. A zero-dimensional tensor holds a single scalar and is what
// marginalizing the last remaining axis produces.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace bnf {

using DegreeVector = std::vector<int>;
using MultiIndex = std::vector<int>;

class BernsteinTensor {
 public:
  /// Scalar zero.
  BernsteinTensor();
  explicit BernsteinTensor(DegreeVector degree, double fill = 0.0);
  BernsteinTensor(DegreeVector degree, std::vector<double> coeffs);

  static BernsteinTensor scalar(double value);

  int dims() const { return static_cast<int>(degree_.size()); }
  const DegreeVector& degree() const { return degree_; }
  int degree(int axis) const { return degree_[static_cast<std::size_t>(axis)]; }
  std::size_t extent(int axis) const { return static_cast<std::size_t>(degree(axis)) + 1; }
  std::size_t stride(int axis) const { return strides_[static_cast<std::size_t>(axis)]; }
  std::size_t size() const { return coeffs_.size(); }

  std::span<const double> coeffs() const { return coeffs_; }
  std::span<double> coeffs() { return coeffs_; }
  const std::vector<double>& data() const { return coeffs_; }

  double operator[](std::size_t flat) const { return coeffs_[flat]; }
  double& operator[](std::size_t flat) { return coeffs_[flat]; }

  std::size_t flat_index(std::span<const int> index) const;
  double at(std::span<const int> index) const { return coeffs_[flat_index(index)]; }
  double& at(std::span<const int> index) { return coeffs_[flat_index(index)]; }

  /// Value of a zero-dimensional tensor.
  double value() const;

  bool operator==(const BernsteinTensor&) const = default;

 private:
  void init_strides();

  DegreeVector degree_;
  std::vector<std::size_t> strides_;
  std::vector<double> coeffs_;
};

/// Closed interval inside [0,1].
struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Axis-aligned sub-box of the unit box.
struct Box {
  std::vector<Interval> sides;

  static Box unit(int n);
  int dims() const { return static_cast<int>(sides.size()); }
};

// --- scalar helpers ---------------------------------------------------------

/// C(n, k) in double precision from a cached Pascal triangle.
double binomial(int n, int k);

/// Univariate basis values phi_0^d(u) ... phi_d^d(u) written into `out`
/// (size d + 1). Built by the de Casteljau recurrence, so no binomials appear.
void basis_values(int d, double u, std::span<double> out);
std::vector<double> basis_values(int d, double u);

/// phi_j^d(u) for a multi-index; throws ContractError when j is outside 0..d.
double basis_eval(std::span<const int> j, std::span<const int> d, std::span<const double> u);

// --- evaluation -------------------------------------------------------------

/// p(u) by per-axis de Casteljau reduction.
double eval(const BernsteinTensor& p, std::span<const double> u);

/// Fixes u_axis = value and returns the (n-1)-dimensional slice polynomial.
BernsteinTensor restrict_axis(const BernsteinTensor& p, int axis, double value);

// --- calculus ---------------------------------------------------------------

BernsteinTensor partial_derivative(const BernsteinTensor& p, int axis);

/// P with P|_{u_axis = 0} = 0 and dP/du_axis = p. Degree grows by one along `axis`.
BernsteinTensor antiderivative_axis(const BernsteinTensor& p, int axis);

/// Exact integral over an axis-aligned box, by antiderivative and endpoint
/// difference one axis at a time.
double integrate_box(const BernsteinTensor& p, const Box& box);

/// Integral over the whole unit box (mean of the coefficients).
double total_mass(const BernsteinTensor& p);

/// Integrates out one axis over [0,1]; the result has one axis fewer.
BernsteinTensor marginalize_axis(const BernsteinTensor& p, int axis);

// --- algebra ----------------------------------------------------------------

/// Product of two polynomials in the same variables; degree adds per axis.
BernsteinTensor multiply(const BernsteinTensor& p, const BernsteinTensor& q);

/// Inserts degree-0 axes so that p becomes a polynomial over `total_dims`
/// variables. `axis_map[a]` names the target axis of p's axis a (strictly increasing).
BernsteinTensor embed(const BernsteinTensor& p, int total_dims, std::span<const int> axis_map);

/// Exact re-representation at a componentwise higher degree.
BernsteinTensor degree_raise(const BernsteinTensor& p, const DegreeVector& target);

/// The (d_plus + 1) x (d + 1) matrix M with b_plus = M b for one axis.
Eigen::MatrixXd raise_matrix(int d, int d_plus);

/// Applies a per-axis linear map (rows x extent(axis)) along one axis.
BernsteinTensor apply_axis(const BernsteinTensor& p, int axis, const Eigen::MatrixXd& m);

struct CoeffBounds {
  double lower;
  double upper;
};

/// Coefficient extrema; they enclose the range of p on the unit box.
CoeffBounds coeff_bounds(const BernsteinTensor& p);

}  // namespace bnf
