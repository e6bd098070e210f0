#pragma once

// Belief propagation through a Bernstein transition density, box probabilities
// and Bayesian updates, all carried out on coefficient tensors.

#include <cstddef>
#include <span>
#include <vector>

#include "bnf/bernstein.hpp"
#include "bnf/flow.hpp"
#include "bnf/grid.hpp"
#include "bnf/points.hpp"
#include "bnf/rng.hpp"
#include "bnf/transform.hpp"

namespace bnf {

struct Certificate {
  std::vector<int> raise;         // per-axis raise at which min_coeff was taken
  double min_coeff = 0.0;         // smallest coefficient at that raise
  double mass_residual = 0.0;     // |1 - total mass|
};

/// p(u_k): a density tensor on the unit box plus the transform back to x.
struct Belief {
  int k = 0;
  BernsteinTensor density;
  DiagonalTransform transform;
  Certificate certificate;

  int dims() const { return density.dims(); }
};

/// Computes the certificate and checks unit mass (1e-9) and non-negativity at
/// the raise (-1e-9). Throws NumericalError on failure.
Belief make_belief(int k, BernsteinTensor density, DiagonalTransform t, std::vector<int> raise = {});

/// Belief_0 from an initial flow; the certificate raise is inherited from the
/// factors.
Belief initial_belief(const FlowModel& initial, const DiagonalTransform& t);

/// The transition density as a matrix T[u', w] of Bernstein coefficients with
/// cached per-axis contraction data.
class TransitionOperator {
 public:
  explicit TransitionOperator(const ConditionalFlowModel& model);

  /// From a tensor over (u'_1..u'_n, w_1..w_n). Every w-slice of coefficients
  /// must sum to prod(d'_i + 1) and all coefficients must be non-negative.
  static TransitionOperator from_tensor(BernsteinTensor tensor);

  int dims() const { return n_; }
  const BernsteinTensor& tensor() const { return tensor_; }
  DegreeVector output_degree() const;
  DegreeVector cond_degree() const;
  const std::vector<int>& output_raise() const { return output_raise_; }

  /// Coefficients of  int T(u', w) p(w) dw  (degree output_degree()).
  BernsteinTensor apply(const BernsteinTensor& belief) const;

 private:
  TransitionOperator(BernsteinTensor tensor, std::vector<int> output_raise);

  BernsteinTensor tensor_;
  int n_ = 0;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<int> output_raise_;
};

/// Gram matrix G[m][l] = int phi_m^q phi_l^p over [0,1].
Eigen::MatrixXd gram_matrix(int q, int p);

/// Residual above which propagation stops with NumericalError.
inline constexpr double kMassResidualLimit = 1e-6;

Belief propagate_step(const Belief& belief, const TransitionOperator& op);
Belief propagate_step(const Belief& belief, const ConditionalFlowModel& transition);

struct Propagation {
  std::vector<Belief> beliefs;       // k = 0..K
  std::vector<double> step_seconds;  // step_seconds[k] for k >= 1; [0] is the initial conversion
};

Propagation propagate(const FlowModel& initial, const ConditionalFlowModel& transition, const DiagonalTransform& t,
                      int horizon);
Propagation propagate(Belief initial, const TransitionOperator& op, int horizon);

/// Axis-aligned box in state space; sides may be infinite.
struct StateBox {
  std::vector<Interval> sides;

  static StateBox everywhere(int n);
  int dims() const { return static_cast<int>(sides.size()); }
};

/// Image of a state box under the transform.
Box to_unit_box(const StateBox& r, const DiagonalTransform& t);

/// P(x in R), clamped to [0,1].
double evaluate(const Belief& belief, const StateBox& r);

struct LikelihoodSummary {
  double mean = 0.0;
  std::size_t count = 0;
  std::size_t clamped = 0;      // points mapped to the clamp boundary
  std::size_t nonpositive = 0;  // points where the belief density is <= 0
};

/// Mean of log p(x) over the points.
LikelihoodSummary log_likelihood(const Belief& belief, const PointSet& x);

/// Density value p(x) in state space.
double density_x(const Belief& belief, std::span<const double> x);

/// p(x) at every cell center of the window.
DensityGrid belief_grid(const Belief& belief, const GridWindow& window);

/// Posterior over the conditioning variables of `likelihood` after observing
/// beta (in the unit box) for its modeled variables.
Belief bayes_update(const Belief& prior, const ConditionalFlowModel& likelihood, std::span<const double> beta);

/// Posterior for a likelihood already given as a tensor over the prior's axes.
Belief bayes_update(const Belief& prior, const BernsteinTensor& likelihood);

/// Rejection sampling with the largest coefficient as envelope. Returns unit-box points.
PointSet sample_belief_unit(const Belief& belief, Rng& rng, std::size_t count);

/// Same, mapped back to state space.
PointSet sample_belief(const Belief& belief, Rng& rng, std::size_t count);

}  // namespace bnf
