#pragma once

// Bernstein normalizing flows on the unit box.
//
// A flow of degree d over n variables is stored through the partial derivatives
// of its triangular components: factor i is a Bernstein tensor over
// (u_1, ..., u_i) -- plus the conditioning variables (w_1, ..., w_m) for a
// conditional flow -- of degree (d_1, ..., d_{i-1}, d_i - 1, e_1, ..., e_m).
// The density is the product of the factors. A factor is valid when every
// slice along its own axis u_i sums to d_i (unit integral) and its
// coefficients, raised by the model's certificate raise, are non-negative.

#include <cstddef>
#include <span>
#include <vector>

#include "bnf/bernstein.hpp"
#include "bnf/points.hpp"
#include "bnf/rng.hpp"
#include "bnf/transform.hpp"

namespace bnf {

/// Shapes of the factor tensors of a (possibly conditional) triangular flow.
struct FlowLayout {
  DegreeVector degree;       // d, one entry per modeled variable
  DegreeVector cond_degree;  // e, one entry per conditioning variable; empty if unconditional

  int n() const { return static_cast<int>(degree.size()); }
  int m() const { return static_cast<int>(cond_degree.size()); }
  int factor_dims(int i) const { return i + 1 + m(); }
  DegreeVector factor_degree(int i) const;
  /// Degree raise for factor i built from per-variable amounts (u..., w...).
  DegreeVector factor_raise(int i, std::span<const int> per_variable) const;
  /// Target slice sum along the factor's own axis.
  double slice_sum(int i) const { return static_cast<double>(degree[static_cast<std::size_t>(i)]); }

  void validate() const;
  bool operator==(const FlowLayout&) const = default;
};

/// Largest deviation of a factor set from the flow constraints.
struct FactorDiagnostics {
  double worst_slice_error = 0.0;  // max |slice sum - d_i|
  double min_raised_coeff = 0.0;   // min coefficient at the certificate degree
};

FactorDiagnostics diagnose_factors(const FlowLayout& layout, std::span<const BernsteinTensor> factors,
                                   std::span<const int> certificate_raise);

/// Throws NumericalError when the factors violate the constraints beyond tolerance
/// (slice sums to 1e-9 relative, raised coefficients to -1e-12).
void check_factors(const FlowLayout& layout, std::span<const BernsteinTensor> factors,
                   std::span<const int> certificate_raise);

/// Common storage for FlowModel and ConditionalFlowModel.
class TriangularFlow {
 public:
  const FlowLayout& layout() const { return layout_; }
  const std::vector<BernsteinTensor>& factors() const { return factors_; }
  const BernsteinTensor& factor(int i) const { return factors_[static_cast<std::size_t>(i)]; }
  /// Per-variable degree raise at which the coefficients are certified
  /// non-negative (all zeros for plain non-negative coefficients).
  const std::vector<int>& certificate_raise() const { return certificate_raise_; }
  int dims() const { return layout_.n(); }

  bool operator==(const TriangularFlow&) const = default;

 protected:
  TriangularFlow(FlowLayout layout, std::vector<BernsteinTensor> factors, std::vector<int> certificate_raise);

 private:
  FlowLayout layout_;
  std::vector<BernsteinTensor> factors_;
  std::vector<int> certificate_raise_;
};

class FlowModel : public TriangularFlow {
 public:
  FlowModel(DegreeVector degree, std::vector<BernsteinTensor> factors, std::vector<int> certificate_raise = {});
  static FlowModel uniform(DegreeVector degree);
};

class ConditionalFlowModel : public TriangularFlow {
 public:
  ConditionalFlowModel(DegreeVector degree, DegreeVector cond_degree, std::vector<BernsteinTensor> factors,
                       std::vector<int> certificate_raise = {});
  static ConditionalFlowModel uniform(DegreeVector degree, DegreeVector cond_degree);

  int cond_dims() const { return layout().m(); }
};

/// Builds the model type matching a layout (m == 0 -> FlowModel).
FlowModel make_flow(const FlowLayout& layout, std::vector<BernsteinTensor> factors, std::vector<int> raise = {});
ConditionalFlowModel make_conditional_flow(const FlowLayout& layout, std::vector<BernsteinTensor> factors,
                                           std::vector<int> raise = {});

// --- densities --------------------------------------------------------------

/// log p(u); -infinity if a factor is not positive at u.
double log_density(const FlowModel& m, std::span<const double> u);

/// log p(x) = log p(Omega(x)) + log |det J_Omega(x)|.
double log_density_x(const FlowModel& m, const DiagonalTransform& t, std::span<const double> x);

/// log p(u | w).
double conditional_log_density(const ConditionalFlowModel& m, std::span<const double> u,
                               std::span<const double> w);

/// The density as one Bernstein tensor over (u_1, ..., u_n).
BernsteinTensor to_tensor(const FlowModel& m);

/// The conditional density as one tensor over (u_1, ..., u_n, w_1, ..., w_m).
BernsteinTensor to_conditional_tensor(const ConditionalFlowModel& m);

// --- sampling ---------------------------------------------------------------

/// Draws by inverting the flow: z ~ U(0,1)^n, then u_i solves g_i(u_<=i) = z_i.
PointSet sample(const FlowModel& m, Rng& rng, std::size_t count);
PointSet conditional_sample(const ConditionalFlowModel& m, std::span<const double> w, Rng& rng,
                            std::size_t count);

/// Inverse of the flow map for one latent point (exposed for tests).
std::vector<double> invert_flow(const TriangularFlow& m, std::span<const double> z, std::span<const double> w);

/// Solves G(t) = z on [0,1] for a non-decreasing polynomial G with G(0)=0 and
/// G(1)=1, given its derivative g: bisection to width 1e-6, then Newton.
double solve_monotone(const BernsteinTensor& G, const BernsteinTensor& g, double z);

}  // namespace bnf
