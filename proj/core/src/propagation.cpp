#include "bnf/propagation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Core>

#include "bnf/error.hpp"

namespace bnf {

using detail::require;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Certificate certify(const BernsteinTensor& density, std::vector<int> raise) {
  if (raise.empty()) raise.assign(static_cast<std::size_t>(density.dims()), 0);
  require(static_cast<int>(raise.size()) == density.dims(), "certificate raise has the wrong length");
  DegreeVector target = density.degree();
  bool any = false;
  for (std::size_t a = 0; a < target.size(); ++a) {
    require(raise[a] >= 0, "certificate raise must be non-negative");
    target[a] += raise[a];
    any = any || raise[a] > 0;
  }
  Certificate c;
  c.min_coeff = coeff_bounds(any ? degree_raise(density, target) : density).lower;
  c.mass_residual = std::abs(1.0 - total_mass(density));
  c.raise = std::move(raise);
  return c;
}

// Per-axis certificate raise of a product of triangular factors: axis a appears
// in factors a..n-1.
std::vector<int> product_raise(const TriangularFlow& m, int axes) {
  std::vector<int> out(static_cast<std::size_t>(axes), 0);
  const int n = m.layout().n();
  for (int a = 0; a < axes; ++a) {
    const int r = m.certificate_raise()[static_cast<std::size_t>(a)];
    out[static_cast<std::size_t>(a)] = r * (a < n ? n - a : n);
  }
  return out;
}

}  // namespace

Belief make_belief(int k, BernsteinTensor density, DiagonalTransform t, std::vector<int> raise) {
  require(density.dims() >= 1, "belief needs at least one dimension");
  require(t.dims() == density.dims(), "belief transform dimension mismatch");
  Certificate c = certify(density, std::move(raise));
  if (!(c.mass_residual <= 1e-9)) {
    std::ostringstream os;
    os << "belief mass residual " << c.mass_residual << " exceeds 1e-9";
    throw NumericalError(os.str());
  }
  if (!(c.min_coeff >= -1e-9)) {
    std::ostringstream os;
    os << "belief has a negative coefficient " << c.min_coeff << " at its certificate degree";
    throw NumericalError(os.str());
  }
  return Belief{k, std::move(density), std::move(t), std::move(c)};
}

Belief initial_belief(const FlowModel& initial, const DiagonalTransform& t) {
  return make_belief(0, to_tensor(initial), t, product_raise(initial, initial.dims()));
}

// --- transition operator ----------------------------------------------------

Eigen::MatrixXd gram_matrix(int q, int p) {
  require(q >= 0 && p >= 0, "gram_matrix: degrees must be non-negative");
  Eigen::MatrixXd g(q + 1, p + 1);
  const double scale = 1.0 / (p + q + 1);
  for (int m = 0; m <= q; ++m)
    for (int l = 0; l <= p; ++l) g(m, l) = binomial(q, m) * binomial(p, l) / binomial(p + q, m + l) * scale;
  return g;
}

TransitionOperator::TransitionOperator(BernsteinTensor tensor, std::vector<int> output_raise)
    : tensor_(std::move(tensor)), n_(tensor_.dims() / 2), output_raise_(std::move(output_raise)) {
  require(tensor_.dims() >= 2 && tensor_.dims() % 2 == 0, "transition tensor needs 2n axes");
  rows_ = 1;
  cols_ = 1;
  for (int a = 0; a < n_; ++a) rows_ *= tensor_.extent(a);
  for (int a = n_; a < 2 * n_; ++a) cols_ *= tensor_.extent(a);
  if (output_raise_.empty()) output_raise_.assign(static_cast<std::size_t>(n_), 0);
}

TransitionOperator::TransitionOperator(const ConditionalFlowModel& model)
    : TransitionOperator(to_conditional_tensor(model), product_raise(model, model.dims())) {
  require(model.cond_dims() == model.dims(), "transition model must condition on a state of its own dimension");
}

TransitionOperator TransitionOperator::from_tensor(BernsteinTensor tensor) {
  TransitionOperator op(std::move(tensor), {});
  const BernsteinTensor& t = op.tensor_;
  double expected = 1.0;
  for (int a = 0; a < op.n_; ++a) expected *= static_cast<double>(t.extent(a));
  for (std::size_t c = 0; c < op.cols_; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < op.rows_; ++r) {
      const double v = t[r * op.cols_ + c];
      if (!(v >= 0.0)) throw NumericalError("transition tensor has a negative coefficient");
      sum += v;
    }
    if (std::abs(sum - expected) > 1e-9 * expected)
      throw NumericalError("transition tensor is not a normalized conditional density");
  }
  return op;
}

DegreeVector TransitionOperator::output_degree() const {
  return DegreeVector(tensor_.degree().begin(), tensor_.degree().begin() + n_);
}

DegreeVector TransitionOperator::cond_degree() const {
  return DegreeVector(tensor_.degree().begin() + n_, tensor_.degree().end());
}

BernsteinTensor TransitionOperator::apply(const BernsteinTensor& belief) const {
  require(belief.dims() == n_, "propagate: belief dimension does not match the transition");
  BernsteinTensor v = belief;
  for (int a = 0; a < n_; ++a) v = apply_axis(v, a, gram_matrix(tensor_.degree(n_ + a), belief.degree(a)));
  BernsteinTensor out(output_degree());
  Eigen::Map<const RowMatrix> T(tensor_.coeffs().data(), static_cast<Eigen::Index>(rows_),
                                static_cast<Eigen::Index>(cols_));
  Eigen::Map<const Eigen::VectorXd> vv(v.coeffs().data(), static_cast<Eigen::Index>(cols_));
  Eigen::Map<Eigen::VectorXd> o(out.coeffs().data(), static_cast<Eigen::Index>(rows_));
  o.noalias() = T * vv;
  return out;
}

// --- propagation ------------------------------------------------------------

Belief propagate_step(const Belief& belief, const TransitionOperator& op) {
  BernsteinTensor next = op.apply(belief.density);
  Certificate c = certify(next, op.output_raise());
  if (!(c.mass_residual <= kMassResidualLimit)) {
    std::ostringstream os;
    os << "propagation step " << belief.k + 1 << ": mass residual " << c.mass_residual << " exceeds "
       << kMassResidualLimit;
    throw NumericalError(os.str());
  }
  return Belief{belief.k + 1, std::move(next), belief.transform, std::move(c)};
}

Belief propagate_step(const Belief& belief, const ConditionalFlowModel& transition) {
  return propagate_step(belief, TransitionOperator(transition));
}

Propagation propagate(Belief initial, const TransitionOperator& op, int horizon) {
  require(horizon >= 0, "propagate: horizon must be >= 0");
  Propagation out;
  out.beliefs.push_back(std::move(initial));
  out.step_seconds.push_back(0.0);
  for (int k = 1; k <= horizon; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    out.beliefs.push_back(propagate_step(out.beliefs.back(), op));
    out.step_seconds.push_back(seconds_since(t0));
  }
  return out;
}

Propagation propagate(const FlowModel& initial, const ConditionalFlowModel& transition, const DiagonalTransform& t,
                      int horizon) {
  require(horizon >= 0, "propagate: horizon must be >= 0");
  const auto t0 = std::chrono::steady_clock::now();
  Belief b0 = initial_belief(initial, t);
  const double init_seconds = seconds_since(t0);
  if (horizon == 0) return Propagation{{std::move(b0)}, {init_seconds}};
  const TransitionOperator op(transition);
  Propagation out = propagate(std::move(b0), op, horizon);
  out.step_seconds[0] = init_seconds;
  return out;
}

// --- evaluation -------------------------------------------------------------

StateBox StateBox::everywhere(int n) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return StateBox{std::vector<Interval>(static_cast<std::size_t>(n), Interval{-inf, inf})};
}

Box to_unit_box(const StateBox& r, const DiagonalTransform& t) {
  require(r.dims() == t.dims(), "evaluate: box dimension mismatch");
  Box out;
  for (int i = 0; i < r.dims(); ++i) {
    const Interval s = r.sides[static_cast<std::size_t>(i)];
    require(!std::isnan(s.lo) && !std::isnan(s.hi) && s.lo <= s.hi, "evaluate: box sides need lo <= hi");
    const double lo = std::clamp(t.axis(i).cdf(s.lo), 0.0, 1.0);
    const double hi = std::clamp(t.axis(i).cdf(s.hi), 0.0, 1.0);
    out.sides.push_back({lo, std::max(lo, hi)});
  }
  return out;
}

double evaluate(const Belief& belief, const StateBox& r) {
  return std::clamp(integrate_box(belief.density, to_unit_box(r, belief.transform)), 0.0, 1.0);
}

double density_x(const Belief& belief, std::span<const double> x) {
  std::vector<double> u(x.size());
  belief.transform.forward(x, u);
  return eval(belief.density, u) * std::exp(belief.transform.log_det_jacobian(x));
}

LikelihoodSummary log_likelihood(const Belief& belief, const PointSet& x) {
  require(x.dim() == belief.dims(), "log_likelihood: point dimension mismatch");
  LikelihoodSummary s;
  std::vector<double> u(static_cast<std::size_t>(x.dim()));
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (belief.transform.forward(x[i], u) > 0) ++s.clamped;
    const double p = eval(belief.density, u);
    if (!(p > 0.0)) {
      ++s.nonpositive;
      sum = -std::numeric_limits<double>::infinity();
      continue;
    }
    sum += std::log(p) + belief.transform.log_det_jacobian(x[i]);
  }
  s.count = x.size();
  s.mean = s.count == 0 ? 0.0 : sum / static_cast<double>(s.count);
  return s;
}

DensityGrid belief_grid(const Belief& belief, const GridWindow& window) {
  window.validate();
  require(belief.dims() == 2, "belief_grid: only two-dimensional beliefs");
  DensityGrid g{window, std::vector<double>(static_cast<std::size_t>(window.nx) * window.ny)};
  for (int i = 0; i < window.nx; ++i)
    for (int j = 0; j < window.ny; ++j) {
      const double x[2] = {window.x1_center(i), window.x2_center(j)};
      g.values[static_cast<std::size_t>(i) * window.ny + j] = density_x(belief, x);
    }
  return g;
}

// --- Bayesian update --------------------------------------------------------

namespace {

Belief bayes_update_with_raise(const Belief& prior, const BernsteinTensor& likelihood, std::vector<int> lik_raise) {
  require(likelihood.dims() == prior.dims(), "bayes_update: likelihood dimension mismatch");
  BernsteinTensor joint = multiply(prior.density, likelihood);
  const double evidence = total_mass(joint);
  if (!(evidence > 1e-300)) throw NumericalError("bayes_update: the observation has no support under the model");
  for (double& v : joint.coeffs()) v /= evidence;
  std::vector<int> raise = prior.certificate.raise;
  if (raise.empty()) raise.assign(static_cast<std::size_t>(prior.dims()), 0);
  if (!lik_raise.empty())
    for (std::size_t a = 0; a < raise.size(); ++a) raise[a] += lik_raise[a];
  return make_belief(prior.k, std::move(joint), prior.transform, std::move(raise));
}

}  // namespace

Belief bayes_update(const Belief& prior, const BernsteinTensor& likelihood) {
  return bayes_update_with_raise(prior, likelihood, {});
}

Belief bayes_update(const Belief& prior, const ConditionalFlowModel& likelihood, std::span<const double> beta) {
  const int n = likelihood.dims();
  const int m = likelihood.cond_dims();
  require(m == prior.dims(), "bayes_update: the likelihood must condition on the prior's variables");
  require(static_cast<int>(beta.size()) == n, "bayes_update: observation dimension mismatch");
  for (double b : beta) require(b > 0.0 && b < 1.0, "bayes_update: observation must lie in (0,1)");
  BernsteinTensor lik;
  for (int i = 0; i < n; ++i) {
    BernsteinTensor f = likelihood.factor(i);
    for (int a = i; a >= 0; --a) f = restrict_axis(f, a, beta[static_cast<std::size_t>(a)]);
    lik = i == 0 ? std::move(f) : multiply(lik, f);
  }
  std::vector<int> lik_raise(static_cast<std::size_t>(m), 0);
  for (int a = 0; a < m; ++a) lik_raise[static_cast<std::size_t>(a)] = n * likelihood.certificate_raise()[static_cast<std::size_t>(n + a)];
  return bayes_update_with_raise(prior, lik, std::move(lik_raise));
}

// --- sampling ---------------------------------------------------------------

PointSet sample_belief_unit(const Belief& belief, Rng& rng, std::size_t count) {
  const double envelope = coeff_bounds(belief.density).upper;
  if (!(envelope > 0.0)) throw NumericalError("sample_belief: belief has no positive coefficient");
  const int n = belief.dims();
  PointSet out(n);
  out.reserve(count);
  std::vector<double> u(static_cast<std::size_t>(n));
  const std::size_t max_tries = 100000 + count * 10000;
  std::size_t tries = 0;
  while (out.size() < count) {
    if (++tries > max_tries) throw NumericalError("sample_belief: rejection sampler made no progress");
    for (double& v : u) v = rng.uniform_open();
    if (rng.uniform() * envelope < eval(belief.density, u)) out.push_back(u);
  }
  return out;
}

PointSet sample_belief(const Belief& belief, Rng& rng, std::size_t count) {
  const PointSet u = sample_belief_unit(belief, rng, count);
  PointSet x(u.dim());
  x.reserve(count);
  for (std::size_t i = 0; i < u.size(); ++i) x.push_back(belief.transform.inverse(u[i]));
  return x;
}

}  // namespace bnf
