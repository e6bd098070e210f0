#pragma once

// Constrained maximum-likelihood training of Bernstein flows.
//
// Feasible coefficients are produced from unconstrained parameters theta by a
// positive map (softplus or exp) followed by rescaling every slice along the
// factor's own axis to sum to d_i. The relaxed variant drops the positive map,
// keeps the slice-sum constraint hard, penalizes negative coefficients of the
// degree-raised representation, and finally projects onto the raised
// non-negativity constraint.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bnf/bernstein.hpp"
#include "bnf/flow.hpp"
#include "bnf/points.hpp"
#include "bnf/transform.hpp"

namespace bnf {

enum class OptimizerKind { Adam, Sgd };
enum class PositiveMap { Softplus, Exp };

std::string to_string(OptimizerKind kind);
std::string to_string(PositiveMap kind);
OptimizerKind optimizer_from_string(const std::string& name);
PositiveMap positive_map_from_string(const std::string& name);

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 128;
  double learning_rate = 0.01;
  OptimizerKind optimizer = OptimizerKind::Adam;
  PositiveMap positive_map = PositiveMap::Softplus;
  double positive_floor = 1e-8;
  /// Degree raise per variable (u_1..u_n, w_1..w_m); empty means no raise.
  std::vector<int> degree_raise;
  double penalty_weight = 1.0;
  int projection_max_iter = 2000;
  std::uint64_t seed = 0;

  void validate() const;
  bool relaxed() const;
};

/// Fills a per-variable raise vector with one amount for every variable.
std::vector<int> uniform_raise(const FlowLayout& layout, int amount);

struct UnconstrainedParams {
  std::vector<BernsteinTensor> theta;
};

/// Parameters whose constrained image is the uniform flow.
UnconstrainedParams uniform_params(const FlowLayout& layout, PositiveMap map = PositiveMap::Softplus,
                                   double floor = 1e-8);

/// Psi = sigma o delta: positive map, then slice normalization to d_i.
std::vector<BernsteinTensor> constrain(const FlowLayout& layout, const UnconstrainedParams& params,
                                       PositiveMap map = PositiveMap::Softplus, double floor = 1e-8);

/// Slice normalization without the positive map: theta shifted per slice so that
/// each slice sums to d_i. Used by relaxed training.
std::vector<BernsteinTensor> constrain_relaxed(const FlowLayout& layout, const UnconstrainedParams& params);

/// Training data already mapped to the unit box. `given` is empty for an
/// unconditional flow.
struct UnitData {
  PointSet target;
  PointSet given;

  std::size_t size() const { return target.size(); }
};

struct LossAndGradient {
  double value = 0.0;
  std::vector<BernsteinTensor> gradient;  // same shapes as the parameters
  std::size_t excluded = 0;               // points with a non-positive factor
};

/// Mean negative log-likelihood of the batch under constrain(params) and its
/// exact gradient with respect to theta.
LossAndGradient nll_and_gradient(const FlowLayout& layout, const UnconstrainedParams& params,
                                 const UnitData& batch, PositiveMap map = PositiveMap::Softplus,
                                 double floor = 1e-8);

/// Same objective under constrain_relaxed (gradient with respect to theta).
LossAndGradient relaxed_nll_and_gradient(const FlowLayout& layout, const UnconstrainedParams& params,
                                         const UnitData& batch);

/// Mean NLL and its gradient with respect to the coefficient tensors themselves.
LossAndGradient nll_and_coeff_gradient(const FlowLayout& layout, std::span<const BernsteinTensor> coeffs,
                                       const UnitData& batch);

/// Hinge penalty sum_j max(0, -b+_j) over the degree-raised coefficients and
/// its gradient with respect to the (unraised) coefficients.
LossAndGradient degree_raise_penalty(const FlowLayout& layout, std::span<const BernsteinTensor> coeffs,
                                     std::span<const int> raise);

/// Penalty for a single coefficient tensor.
LossAndGradient degree_raise_penalty(const BernsteinTensor& coeffs, const DegreeVector& raise);

/// Repeats raise -> rectify -> least-squares project down -> renormalize until
/// the raised coefficients are >= -1e-12. Each slice along `norm_axis` keeps
/// its input sum. Throws NumericalError if `max_iter` passes do not suffice.
BernsteinTensor feasibility_projection(const BernsteinTensor& coeffs, int norm_axis, const DegreeVector& raise,
                                       int max_iter);

std::vector<BernsteinTensor> feasibility_projection(const FlowLayout& layout, std::span<const BernsteinTensor> coeffs,
                                                    std::span<const int> raise, int max_iter);

struct EpochRecord {
  int epoch = 0;
  double mean_nll = 0.0;
  double penalty = 0.0;
  double wall_seconds = 0.0;
};

/// Called after every epoch; used for logging.
using EpochCallback = std::function<void(const EpochRecord&)>;

template <typename Model>
struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
  std::size_t clamped_points = 0;
};

/// Softplus-constrained maximum likelihood.
TrainResult<FlowModel> fit_initial(const PointSet& x, const DiagonalTransform& t, const DegreeVector& degree,
                                   const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Conditional maximum likelihood on (x, x') pairs; conditioning degree equals `degree`.
TrainResult<ConditionalFlowModel> fit_transition(const PointSet& from, const PointSet& to, const DiagonalTransform& t,
                                                 const DegreeVector& degree, const TrainConfig& cfg,
                                                 const EpochCallback& on_epoch = {});

/// Penalized training with the positive map removed, then feasibility projection.
/// With no raise and zero penalty weight this is exactly fit_initial.
TrainResult<FlowModel> train_relaxed_initial(const PointSet& x, const DiagonalTransform& t, const DegreeVector& degree,
                                             const TrainConfig& cfg, const EpochCallback& on_epoch = {});

TrainResult<ConditionalFlowModel> train_relaxed_transition(const PointSet& from, const PointSet& to,
                                                           const DiagonalTransform& t, const DegreeVector& degree,
                                                           const TrainConfig& cfg,
                                                           const EpochCallback& on_epoch = {});

/// Unit-box entry points used by the ones above.
TrainResult<std::vector<BernsteinTensor>> fit_unit(const FlowLayout& layout, const UnitData& data,
                                                   const TrainConfig& cfg, const EpochCallback& on_epoch = {});
TrainResult<std::vector<BernsteinTensor>> train_relaxed_unit(const FlowLayout& layout, const UnitData& data,
                                                             const TrainConfig& cfg,
                                                             const EpochCallback& on_epoch = {});

/// Mean NLL of unit-box data under explicit coefficients.
double mean_nll(const FlowLayout& layout, std::span<const BernsteinTensor> coeffs, const UnitData& data);

}  // namespace bnf
