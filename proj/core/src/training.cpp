#include "bnf/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "bnf/error.hpp"
#include "bnf/rng.hpp"

namespace bnf {

using detail::require;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// View of a tensor as (outer, extent, inner) around one axis.
struct Slices {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;

  Slices(const BernsteinTensor& t, int axis) : extent(t.extent(axis)) {
    for (int a = 0; a < axis; ++a) outer *= t.extent(a);
    for (int a = axis + 1; a < t.dims(); ++a) inner *= t.extent(a);
  }
  std::size_t at(std::size_t o, std::size_t j, std::size_t i) const { return (o * extent + j) * inner + i; }
};

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

// ---------------------------------------------------------------------------
// Batched factor evaluation. A factor over k axes is split into a leading and
// a trailing axis group; with K_A and K_B the row-wise Kronecker products of
// the per-axis basis values, pi = rowdot(K_A F, K_B) and the coefficient
// gradient of sum_b c_b pi_b is K_A^T diag(c) K_B.
// ---------------------------------------------------------------------------

class FactorBatch {
 public:
  FactorBatch(const BernsteinTensor& shape, std::span<const std::span<const double>> columns, std::size_t rows)
      : rows_(rows) {
    const int k = shape.dims();
    std::size_t total = shape.size();
    std::size_t best = total;
    split_ = k;
    std::size_t lead = 1;
    for (int s = 0; s <= k; ++s) {
      const std::size_t cost = std::max(lead, total / lead);
      if (cost < best) {
        best = cost;
        split_ = s;
      }
      if (s < k) lead *= shape.extent(s);
    }
    lead_ = build(shape, columns, 0, split_, ka_);
    trail_ = build(shape, columns, split_, k, kb_);
  }

  // pi_b for every row.
  Eigen::VectorXd values(const BernsteinTensor& f) const {
    Eigen::Map<const RowMatrix> F(f.coeffs().data(), static_cast<Eigen::Index>(lead_),
                                  static_cast<Eigen::Index>(trail_));
    const RowMatrix t = ka_ * F;
    return t.cwiseProduct(kb_).rowwise().sum();
  }

  // sum_b weights_b * d pi_b / d coeffs, written into `grad` (accumulated).
  void accumulate_gradient(const Eigen::VectorXd& weights, BernsteinTensor& grad) const {
    Eigen::Map<RowMatrix> G(grad.coeffs().data(), static_cast<Eigen::Index>(lead_),
                            static_cast<Eigen::Index>(trail_));
    const RowMatrix weighted = weights.asDiagonal() * kb_;
    G.noalias() += ka_.transpose() * weighted;
  }

 private:
  std::size_t build(const BernsteinTensor& shape, std::span<const std::span<const double>> columns, int first,
                    int last, RowMatrix& out) const {
    std::size_t width = 1;
    for (int a = first; a < last; ++a) width *= shape.extent(a);
    out.resize(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(width));
    std::vector<std::vector<double>> basis(static_cast<std::size_t>(last - first));
    for (int a = first; a < last; ++a) basis[static_cast<std::size_t>(a - first)].resize(shape.extent(a));
    std::vector<double> row(width);
    std::vector<double> next(width);
    for (std::size_t b = 0; b < rows_; ++b) {
      std::size_t len = 1;
      row[0] = 1.0;
      for (int a = first; a < last; ++a) {
        auto& phi = basis[static_cast<std::size_t>(a - first)];
        basis_values(shape.degree(a), columns[static_cast<std::size_t>(a)][b], phi);
        std::size_t pos = 0;
        for (std::size_t r = 0; r < len; ++r)
          for (double p : phi) next[pos++] = row[r] * p;
        len = pos;
        std::swap(row, next);
      }
      for (std::size_t c = 0; c < width; ++c) out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c)) = row[c];
    }
    return width;
  }

  std::size_t rows_;
  int split_ = 0;
  std::size_t lead_ = 1;
  std::size_t trail_ = 1;
  RowMatrix ka_;
  RowMatrix kb_;
};

// Column-major copies of the coordinates feeding factor i: (u_1..u_i, w_1..w_m).
std::vector<std::vector<double>> transpose_columns(const UnitData& data, std::size_t begin, std::size_t end) {
  const int n = data.target.dim();
  const int m = data.given.empty() ? 0 : data.given.dim();
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(n + m), std::vector<double>(end - begin));
  for (std::size_t r = begin; r < end; ++r) {
    for (int a = 0; a < n; ++a) cols[static_cast<std::size_t>(a)][r - begin] = data.target[r][static_cast<std::size_t>(a)];
    for (int a = 0; a < m; ++a) cols[static_cast<std::size_t>(n + a)][r - begin] = data.given[r][static_cast<std::size_t>(a)];
  }
  return cols;
}

std::vector<std::span<const double>> factor_columns(const FlowLayout& layout, int i,
                                                    const std::vector<std::vector<double>>& cols) {
  std::vector<std::span<const double>> out;
  for (int a = 0; a <= i; ++a) out.emplace_back(cols[static_cast<std::size_t>(a)]);
  for (int a = 0; a < layout.m(); ++a) out.emplace_back(cols[static_cast<std::size_t>(layout.n() + a)]);
  return out;
}

void check_data(const FlowLayout& layout, const UnitData& data) {
  require(data.target.dim() == layout.n(), "training data dimension does not match the flow");
  if (layout.m() > 0) {
    require(data.given.dim() == layout.m() && data.given.size() == data.target.size(),
            "conditional training data needs one conditioning point per target point");
  } else {
    require(data.given.empty(), "unconditional flow given conditioning data");
  }
}

void check_params(const FlowLayout& layout, const UnconstrainedParams& params) {
  require(static_cast<int>(params.theta.size()) == layout.n(), "parameter count does not match the flow");
  for (int i = 0; i < layout.n(); ++i)
    require(params.theta[static_cast<std::size_t>(i)].degree() == layout.factor_degree(i),
            "parameter tensor has the wrong shape");
}

// Chain rule through b = d_i * delta / S over each slice along `axis`.
void normalize_backward(const BernsteinTensor& b, const BernsteinTensor& delta, int axis, double target,
                        BernsteinTensor& grad) {
  const Slices s(b, axis);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      double sum = 0.0;
      double gb = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) {
        sum += delta[s.at(o, j, i)];
        gb += grad[s.at(o, j, i)] * b[s.at(o, j, i)];
      }
      for (std::size_t j = 0; j < s.extent; ++j) {
        const std::size_t k = s.at(o, j, i);
        grad[k] = (target * grad[k] - gb) / sum;
      }
    }
}

void center_slices(BernsteinTensor& grad, int axis) {
  const Slices s(grad, axis);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      double mean = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) mean += grad[s.at(o, j, i)];
      mean /= static_cast<double>(s.extent);
      for (std::size_t j = 0; j < s.extent; ++j) grad[s.at(o, j, i)] -= mean;
    }
}

std::vector<BernsteinTensor> zeros_like(std::span<const BernsteinTensor> ts) {
  std::vector<BernsteinTensor> out;
  for (const auto& t : ts) out.emplace_back(t.degree(), 0.0);
  return out;
}

// Mean NLL over [begin, end) and optionally its coefficient gradient (scaled by
// 1/count_total, accumulated).
struct ChunkResult {
  double nll_sum = 0.0;
  std::size_t included = 0;
};

ChunkResult nll_chunk(const FlowLayout& layout, std::span<const BernsteinTensor> coeffs, const UnitData& data,
                      std::size_t begin, std::size_t end, std::vector<BernsteinTensor>* grad) {
  const std::size_t rows = end - begin;
  const auto cols = transpose_columns(data, begin, end);
  std::vector<Eigen::VectorXd> values;
  std::vector<FactorBatch> batches;
  Eigen::VectorXd ok = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(rows));
  for (int i = 0; i < layout.n(); ++i) {
    const auto fc = factor_columns(layout, i, cols);
    batches.emplace_back(coeffs[static_cast<std::size_t>(i)], fc, rows);
    values.push_back(batches.back().values(coeffs[static_cast<std::size_t>(i)]));
    for (Eigen::Index b = 0; b < values.back().size(); ++b)
      if (!(values.back()[b] > 0.0)) ok[b] = 0.0;
  }
  ChunkResult res;
  for (Eigen::Index b = 0; b < static_cast<Eigen::Index>(rows); ++b) {
    if (ok[b] == 0.0) continue;
    ++res.included;
    for (const auto& v : values) res.nll_sum -= std::log(v[b]);
  }
  if (grad) {
    for (int i = 0; i < layout.n(); ++i) {
      Eigen::VectorXd w(static_cast<Eigen::Index>(rows));
      for (Eigen::Index b = 0; b < w.size(); ++b) w[b] = ok[b] == 0.0 ? 0.0 : -1.0 / values[static_cast<std::size_t>(i)][b];
      batches[static_cast<std::size_t>(i)].accumulate_gradient(w, (*grad)[static_cast<std::size_t>(i)]);
    }
  }
  return res;
}

constexpr std::size_t kChunk = 2048;

LossAndGradient nll_coeff_impl(const FlowLayout& layout, std::span<const BernsteinTensor> coeffs,
                               const UnitData& data, bool with_gradient) {
  check_data(layout, data);
  require(static_cast<int>(coeffs.size()) == layout.n(), "coefficient count does not match the flow");
  LossAndGradient out;
  if (with_gradient) out.gradient = zeros_like(coeffs);
  double nll = 0.0;
  std::size_t included = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    const std::size_t end = std::min(data.size(), begin + kChunk);
    const ChunkResult r = nll_chunk(layout, coeffs, data, begin, end, with_gradient ? &out.gradient : nullptr);
    nll += r.nll_sum;
    included += r.included;
  }
  out.excluded = data.size() - included;
  if (included == 0) {
    out.value = std::numeric_limits<double>::infinity();
    return out;
  }
  out.value = nll / static_cast<double>(included);
  if (with_gradient)
    for (auto& g : out.gradient)
      for (double& v : g.coeffs()) v /= static_cast<double>(included);
  return out;
}

// --- optimizers -------------------------------------------------------------

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, std::span<const BernsteinTensor> shapes) : cfg_(cfg) {
    for (const auto& t : shapes) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }

  void step(std::vector<BernsteinTensor>& params, const std::vector<BernsteinTensor>& grad) {
    ++t_;
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == OptimizerKind::Sgd) {
      for (std::size_t f = 0; f < params.size(); ++f)
        for (std::size_t k = 0; k < params[f].size(); ++k) params[f][k] -= lr * grad[f][k];
      return;
    }
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    const double c1 = 1.0 - std::pow(beta1, t_);
    const double c2 = 1.0 - std::pow(beta2, t_);
    for (std::size_t f = 0; f < params.size(); ++f)
      for (std::size_t k = 0; k < params[f].size(); ++k) {
        const double g = grad[f][k];
        m_[f][k] = beta1 * m_[f][k] + (1.0 - beta1) * g;
        v_[f][k] = beta2 * v_[f][k] + (1.0 - beta2) * g * g;
        params[f][k] -= lr * (m_[f][k] / c1) / (std::sqrt(v_[f][k] / c2) + eps);
      }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  int t_ = 0;
};

UnitData gather(const UnitData& data, std::span<const std::size_t> idx) {
  UnitData out{PointSet(data.target.dim()), data.given.empty() ? PointSet() : PointSet(data.given.dim())};
  out.target.reserve(idx.size());
  if (!data.given.empty()) out.given.reserve(idx.size());
  for (std::size_t k : idx) {
    out.target.push_back(data.target[k]);
    if (!data.given.empty()) out.given.push_back(data.given[k]);
  }
  return out;
}

std::string describe_failure(int epoch, std::size_t batch, double loss) {
  std::ostringstream os;
  os << "training diverged: non-finite loss " << loss << " at epoch " << epoch << ", batch " << batch;
  return os.str();
}

// Runs mini-batch optimization; `loss` returns the objective (with gradient in
// theta) and fills the penalty component.
template <typename LossFn, typename CheckFn>
std::vector<EpochRecord> optimize(std::vector<BernsteinTensor>& theta, const UnitData& data, const TrainConfig& cfg,
                                  LossFn&& loss, CheckFn&& check_epoch, const EpochCallback& on_epoch) {
  require(data.size() > 0, "training data is empty");
  Optimizer opt(cfg, theta);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<EpochRecord> history;
  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double nll_acc = 0.0;
    double pen_acc = 0.0;
    std::size_t seen = 0;
    std::size_t batch_no = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const UnitData batch = gather(data, std::span<const std::size_t>(order).subspan(begin, end - begin));
      double penalty = 0.0;
      LossAndGradient lg = loss(theta, batch, penalty);
      if (!std::isfinite(lg.value) || !std::isfinite(penalty))
        throw NumericalError(describe_failure(epoch, batch_no, lg.value));
      opt.step(theta, lg.gradient);
      const auto rows = static_cast<double>(end - begin);
      nll_acc += lg.value * rows;
      pen_acc += penalty * rows;
      seen += end - begin;
    }
    check_epoch(theta);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_nll = nll_acc / static_cast<double>(seen);
    rec.penalty = pen_acc / static_cast<double>(seen);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

UnitData map_initial(const PointSet& x, const DiagonalTransform& t, std::size_t& clamped) {
  MappedPoints mp = map_points(t, x);
  clamped = mp.clamped;
  return UnitData{std::move(mp.u), PointSet()};
}

UnitData map_pairs(const PointSet& from, const PointSet& to, const DiagonalTransform& t, std::size_t& clamped) {
  require(from.size() == to.size(), "transition data: x and x' counts differ");
  MappedPoints target = map_points(t, to);
  MappedPoints given = map_points(t, from);
  clamped = target.clamped + given.clamped;
  return UnitData{std::move(target.u), std::move(given.u)};
}

std::vector<int> resolve_raise(const FlowLayout& layout, const std::vector<int>& raise) {
  if (raise.empty()) return std::vector<int>(static_cast<std::size_t>(layout.n() + layout.m()), 0);
  if (raise.size() == 1) return uniform_raise(layout, raise[0]);
  require(static_cast<int>(raise.size()) == layout.n() + layout.m(), "degree raise needs one entry per variable");
  return raise;
}

}  // namespace

// --- enums ------------------------------------------------------------------

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }
std::string to_string(PositiveMap kind) { return kind == PositiveMap::Softplus ? "softplus" : "exp"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw ConfigError("unknown optimizer '" + name + "'");
}

PositiveMap positive_map_from_string(const std::string& name) {
  if (name == "softplus") return PositiveMap::Softplus;
  if (name == "exp") return PositiveMap::Exp;
  throw ConfigError("unknown positive map '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(positive_floor >= 0.0)) throw ConfigError("positive_floor must be >= 0");
  if (!(penalty_weight >= 0.0)) throw ConfigError("penalty_weight must be >= 0");
  if (projection_max_iter < 1) throw ConfigError("projection_max_iter must be >= 1");
  for (int r : degree_raise)
    if (r < 0) throw ConfigError("degree_raise must be >= 0");
}

bool TrainConfig::relaxed() const {
  return penalty_weight > 0.0 || std::any_of(degree_raise.begin(), degree_raise.end(), [](int r) { return r > 0; });
}

std::vector<int> uniform_raise(const FlowLayout& layout, int amount) {
  require(amount >= 0, "degree raise must be non-negative");
  return std::vector<int>(static_cast<std::size_t>(layout.n() + layout.m()), amount);
}

// --- parameterization -------------------------------------------------------

UnconstrainedParams uniform_params(const FlowLayout& layout, PositiveMap map, double floor) {
  layout.validate();
  const double one = 1.0 - floor;
  const double theta0 = map == PositiveMap::Softplus ? softplus_inverse(one) : std::log(one);
  UnconstrainedParams p;
  for (int i = 0; i < layout.n(); ++i) p.theta.emplace_back(layout.factor_degree(i), theta0);
  return p;
}

namespace {

BernsteinTensor positive(const BernsteinTensor& theta, PositiveMap map, double floor) {
  BernsteinTensor delta = theta;
  for (double& v : delta.coeffs()) v = (map == PositiveMap::Softplus ? softplus(v) : std::exp(v)) + floor;
  return delta;
}

BernsteinTensor normalize(const BernsteinTensor& delta, int axis, double target) {
  BernsteinTensor b = delta;
  const Slices s(b, axis);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) sum += delta[s.at(o, j, i)];
      if (!(sum > std::numeric_limits<double>::min()))
        throw NumericalError("constrain: slice sum underflow");
      for (std::size_t j = 0; j < s.extent; ++j) b[s.at(o, j, i)] = target * delta[s.at(o, j, i)] / sum;
    }
  return b;
}

}  // namespace

std::vector<BernsteinTensor> constrain(const FlowLayout& layout, const UnconstrainedParams& params, PositiveMap map,
                                       double floor) {
  check_params(layout, params);
  std::vector<BernsteinTensor> out;
  for (int i = 0; i < layout.n(); ++i)
    out.push_back(normalize(positive(params.theta[static_cast<std::size_t>(i)], map, floor), i, layout.slice_sum(i)));
  return out;
}

std::vector<BernsteinTensor> constrain_relaxed(const FlowLayout& layout, const UnconstrainedParams& params) {
  check_params(layout, params);
  std::vector<BernsteinTensor> out;
  for (int i = 0; i < layout.n(); ++i) {
    BernsteinTensor b = params.theta[static_cast<std::size_t>(i)];
    const Slices s(b, i);
    const double target = layout.slice_sum(i);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.inner; ++k) {
        double sum = 0.0;
        for (std::size_t j = 0; j < s.extent; ++j) sum += b[s.at(o, j, k)];
        const double shift = (target - sum) / static_cast<double>(s.extent);
        for (std::size_t j = 0; j < s.extent; ++j) b[s.at(o, j, k)] += shift;
      }
    out.push_back(std::move(b));
  }
  return out;
}

// --- objectives -------------------------------------------------------------

LossAndGradient nll_and_coeff_gradient(const FlowLayout& layout, std::span<const BernsteinTensor> coeffs,
                                       const UnitData& batch) {
  return nll_coeff_impl(layout, coeffs, batch, true);
}

double mean_nll(const FlowLayout& layout, std::span<const BernsteinTensor> coeffs, const UnitData& data) {
  return nll_coeff_impl(layout, coeffs, data, false).value;
}

LossAndGradient nll_and_gradient(const FlowLayout& layout, const UnconstrainedParams& params, const UnitData& batch,
                                 PositiveMap map, double floor) {
  check_params(layout, params);
  std::vector<BernsteinTensor> deltas;
  std::vector<BernsteinTensor> coeffs;
  for (int i = 0; i < layout.n(); ++i) {
    deltas.push_back(positive(params.theta[static_cast<std::size_t>(i)], map, floor));
    coeffs.push_back(normalize(deltas.back(), i, layout.slice_sum(i)));
  }
  LossAndGradient lg = nll_coeff_impl(layout, coeffs, batch, true);
  for (int i = 0; i < layout.n(); ++i) {
    auto& g = lg.gradient[static_cast<std::size_t>(i)];
    normalize_backward(coeffs[static_cast<std::size_t>(i)], deltas[static_cast<std::size_t>(i)], i,
                       layout.slice_sum(i), g);
    const auto& theta = params.theta[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < g.size(); ++k)
      g[k] *= map == PositiveMap::Softplus ? sigmoid(theta[k]) : std::exp(theta[k]);
  }
  return lg;
}

LossAndGradient relaxed_nll_and_gradient(const FlowLayout& layout, const UnconstrainedParams& params,
                                         const UnitData& batch) {
  const std::vector<BernsteinTensor> coeffs = constrain_relaxed(layout, params);
  LossAndGradient lg = nll_coeff_impl(layout, coeffs, batch, true);
  for (int i = 0; i < layout.n(); ++i) center_slices(lg.gradient[static_cast<std::size_t>(i)], i);
  return lg;
}

LossAndGradient degree_raise_penalty(const BernsteinTensor& coeffs, const DegreeVector& raise) {
  require(static_cast<int>(raise.size()) == coeffs.dims(), "penalty: raise vector has the wrong length");
  std::vector<Eigen::MatrixXd> ms;
  BernsteinTensor lifted = coeffs;
  for (int a = 0; a < coeffs.dims(); ++a) {
    const int r = raise[static_cast<std::size_t>(a)];
    require(r >= 0, "penalty: raise must be non-negative");
    ms.push_back(raise_matrix(coeffs.degree(a), coeffs.degree(a) + r));
    if (r > 0) lifted = apply_axis(lifted, a, ms.back());
  }
  LossAndGradient out;
  BernsteinTensor indicator(lifted.degree(), 0.0);
  for (std::size_t k = 0; k < lifted.size(); ++k)
    if (lifted[k] < 0.0) {
      out.value -= lifted[k];
      indicator[k] = -1.0;
    }
  for (int a = coeffs.dims() - 1; a >= 0; --a)
    if (raise[static_cast<std::size_t>(a)] > 0)
      indicator = apply_axis(indicator, a, ms[static_cast<std::size_t>(a)].transpose());
  out.gradient.push_back(std::move(indicator));
  return out;
}

LossAndGradient degree_raise_penalty(const FlowLayout& layout, std::span<const BernsteinTensor> coeffs,
                                     std::span<const int> raise) {
  require(static_cast<int>(coeffs.size()) == layout.n(), "penalty: coefficient count does not match the flow");
  const std::vector<int> per_var = resolve_raise(layout, std::vector<int>(raise.begin(), raise.end()));
  LossAndGradient out;
  for (int i = 0; i < layout.n(); ++i) {
    LossAndGradient part = degree_raise_penalty(coeffs[static_cast<std::size_t>(i)], layout.factor_raise(i, per_var));
    out.value += part.value;
    out.gradient.push_back(std::move(part.gradient.front()));
  }
  return out;
}

// --- feasibility projection -------------------------------------------------

BernsteinTensor feasibility_projection(const BernsteinTensor& coeffs, int norm_axis, const DegreeVector& raise,
                                       int max_iter) {
  require(norm_axis >= 0 && norm_axis < coeffs.dims(), "projection: normalization axis out of range");
  require(static_cast<int>(raise.size()) == coeffs.dims(), "projection: raise vector has the wrong length");
  require(max_iter >= 1, "projection: max_iter must be >= 1");
  constexpr double kFeasible = -1e-12;

  std::vector<Eigen::MatrixXd> up;
  std::vector<Eigen::MatrixXd> down;
  for (int a = 0; a < coeffs.dims(); ++a) {
    up.push_back(raise_matrix(coeffs.degree(a), coeffs.degree(a) + raise[static_cast<std::size_t>(a)]));
    down.push_back(up.back().completeOrthogonalDecomposition().pseudoInverse());
  }
  const auto lift = [&](const BernsteinTensor& t) {
    BernsteinTensor r = t;
    for (int a = 0; a < t.dims(); ++a)
      if (raise[static_cast<std::size_t>(a)] > 0) r = apply_axis(r, a, up[static_cast<std::size_t>(a)]);
    return r;
  };
  const auto lower = [&](const BernsteinTensor& t) {
    BernsteinTensor r = t;
    for (int a = 0; a < t.dims(); ++a)
      if (raise[static_cast<std::size_t>(a)] > 0) r = apply_axis(r, a, down[static_cast<std::size_t>(a)]);
    return r;
  };

  const Slices s(coeffs, norm_axis);
  std::vector<double> targets(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i)
      for (std::size_t j = 0; j < s.extent; ++j) targets[o * s.inner + i] += coeffs[s.at(o, j, i)];
  for (double t : targets)
    if (!(t > 0.0)) throw NumericalError("projection: slice sums must be positive");

  const auto renormalize = [&](BernsteinTensor& t) {
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < s.extent; ++j) sum += t[s.at(o, j, i)];
        if (!(sum > 0.0)) throw NumericalError("projection: a slice collapsed to zero mass");
        const double scale = targets[o * s.inner + i] / sum;
        for (std::size_t j = 0; j < s.extent; ++j) t[s.at(o, j, i)] *= scale;
      }
  };

  // Strictly feasible reference with the same slice sums.
  BernsteinTensor flat(coeffs.degree(), 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i)
      for (std::size_t j = 0; j < s.extent; ++j)
        flat[s.at(o, j, i)] = targets[o * s.inner + i] / static_cast<double>(s.extent);
  const BernsteinTensor flat_lifted = lift(flat);
  double scale = 0.0;
  for (double v : flat.coeffs()) scale = std::max(scale, v);

  BernsteinTensor b = coeffs;
  double worst = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    BernsteinTensor lifted = lift(b);
    worst = coeff_bounds(lifted).lower;
    if (worst >= kFeasible) return b;
    if (worst > -1e-6 * scale) {
      // Close enough: move the smallest distance toward the flat reference that
      // clears every raised coefficient.
      double alpha = 0.0;
      for (std::size_t k = 0; k < lifted.size(); ++k)
        if (lifted[k] < 0.0) alpha = std::max(alpha, -lifted[k] / (flat_lifted[k] - lifted[k]));
      alpha = std::min(1.0, alpha * (1.0 + 1e-6) + 1e-15);
      for (std::size_t k = 0; k < b.size(); ++k) b[k] = (1.0 - alpha) * b[k] + alpha * flat[k];
      if (coeff_bounds(lift(b)).lower >= kFeasible) return b;
      continue;
    }
    for (double& v : lifted.coeffs()) v = std::max(v, 0.0);
    b = lower(lifted);
    renormalize(b);
  }
  throw NumericalError("feasibility projection did not converge; worst raised coefficient " + std::to_string(worst));
}

std::vector<BernsteinTensor> feasibility_projection(const FlowLayout& layout, std::span<const BernsteinTensor> coeffs,
                                                    std::span<const int> raise, int max_iter) {
  require(static_cast<int>(coeffs.size()) == layout.n(), "projection: coefficient count does not match the flow");
  const std::vector<int> per_var = resolve_raise(layout, std::vector<int>(raise.begin(), raise.end()));
  std::vector<BernsteinTensor> out;
  for (int i = 0; i < layout.n(); ++i)
    out.push_back(feasibility_projection(coeffs[static_cast<std::size_t>(i)], i, layout.factor_raise(i, per_var), max_iter));
  return out;
}

// --- training drivers -------------------------------------------------------

TrainResult<std::vector<BernsteinTensor>> fit_unit(const FlowLayout& layout, const UnitData& data,
                                                   const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  layout.validate();
  check_data(layout, data);
  UnconstrainedParams params = uniform_params(layout, cfg.positive_map, cfg.positive_floor);
  const std::vector<int> no_raise(static_cast<std::size_t>(layout.n() + layout.m()), 0);
  auto loss = [&](const std::vector<BernsteinTensor>& theta, const UnitData& batch, double& penalty) {
    penalty = 0.0;
    return nll_and_gradient(layout, UnconstrainedParams{theta}, batch, cfg.positive_map, cfg.positive_floor);
  };
  auto check = [&](const std::vector<BernsteinTensor>& theta) {
    check_factors(layout, constrain(layout, UnconstrainedParams{theta}, cfg.positive_map, cfg.positive_floor), no_raise);
  };
  TrainResult<std::vector<BernsteinTensor>> result;
  result.history = optimize(params.theta, data, cfg, loss, check, on_epoch);
  result.model = constrain(layout, params, cfg.positive_map, cfg.positive_floor);
  return result;
}

TrainResult<std::vector<BernsteinTensor>> train_relaxed_unit(const FlowLayout& layout, const UnitData& data,
                                                             const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (!cfg.relaxed()) return fit_unit(layout, data, cfg, on_epoch);
  cfg.validate();
  layout.validate();
  check_data(layout, data);
  const std::vector<int> raise = resolve_raise(layout, cfg.degree_raise);
  UnconstrainedParams params;
  for (int i = 0; i < layout.n(); ++i) params.theta.emplace_back(layout.factor_degree(i), 1.0);

  auto loss = [&](const std::vector<BernsteinTensor>& theta, const UnitData& batch, double& penalty) {
    const UnconstrainedParams p{theta};
    const std::vector<BernsteinTensor> coeffs = constrain_relaxed(layout, p);
    LossAndGradient lg = nll_coeff_impl(layout, coeffs, batch, true);
    LossAndGradient pen = degree_raise_penalty(layout, coeffs, raise);
    penalty = pen.value;
    for (int i = 0; i < layout.n(); ++i) {
      auto& g = lg.gradient[static_cast<std::size_t>(i)];
      const auto& gp = pen.gradient[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += cfg.penalty_weight * gp[k];
      center_slices(g, i);
    }
    lg.value += cfg.penalty_weight * pen.value;
    return lg;
  };
  auto check = [&](const std::vector<BernsteinTensor>& theta) {
    // Slice sums are hard constraints even while coefficients may be negative.
    const auto coeffs = constrain_relaxed(layout, UnconstrainedParams{theta});
    const FactorDiagnostics diag = diagnose_factors(layout, coeffs, std::vector<int>(raise.size(), 0));
    if (diag.worst_slice_error > 1e-8) throw NumericalError("relaxed training lost the slice-sum constraint");
  };
  TrainResult<std::vector<BernsteinTensor>> result;
  result.history = optimize(params.theta, data, cfg, loss, check, on_epoch);
  // Logged values include the weighted penalty; report the NLL part separately.
  for (auto& rec : result.history) rec.mean_nll -= cfg.penalty_weight * rec.penalty;
  result.model = feasibility_projection(layout, constrain_relaxed(layout, params), raise, cfg.projection_max_iter);
  return result;
}

TrainResult<FlowModel> fit_initial(const PointSet& x, const DiagonalTransform& t, const DegreeVector& degree,
                                   const TrainConfig& cfg, const EpochCallback& on_epoch) {
  const FlowLayout layout{degree, {}};
  require(t.dims() == layout.n(), "fit_initial: transform dimension mismatch");
  std::size_t clamped = 0;
  const UnitData data = map_initial(x, t, clamped);
  auto r = fit_unit(layout, data, cfg, on_epoch);
  return {make_flow(layout, std::move(r.model)), std::move(r.history), clamped};
}

TrainResult<ConditionalFlowModel> fit_transition(const PointSet& from, const PointSet& to, const DiagonalTransform& t,
                                                 const DegreeVector& degree, const TrainConfig& cfg,
                                                 const EpochCallback& on_epoch) {
  const FlowLayout layout{degree, degree};
  require(t.dims() == layout.n(), "fit_transition: transform dimension mismatch");
  std::size_t clamped = 0;
  const UnitData data = map_pairs(from, to, t, clamped);
  auto r = fit_unit(layout, data, cfg, on_epoch);
  return {make_conditional_flow(layout, std::move(r.model)), std::move(r.history), clamped};
}

TrainResult<FlowModel> train_relaxed_initial(const PointSet& x, const DiagonalTransform& t, const DegreeVector& degree,
                                             const TrainConfig& cfg, const EpochCallback& on_epoch) {
  const FlowLayout layout{degree, {}};
  require(t.dims() == layout.n(), "train_relaxed_initial: transform dimension mismatch");
  std::size_t clamped = 0;
  const UnitData data = map_initial(x, t, clamped);
  auto r = train_relaxed_unit(layout, data, cfg, on_epoch);
  std::vector<int> cert = cfg.relaxed() ? resolve_raise(layout, cfg.degree_raise) : std::vector<int>{};
  return {make_flow(layout, std::move(r.model), std::move(cert)), std::move(r.history), clamped};
}

TrainResult<ConditionalFlowModel> train_relaxed_transition(const PointSet& from, const PointSet& to,
                                                           const DiagonalTransform& t, const DegreeVector& degree,
                                                           const TrainConfig& cfg, const EpochCallback& on_epoch) {
  const FlowLayout layout{degree, degree};
  require(t.dims() == layout.n(), "train_relaxed_transition: transform dimension mismatch");
  std::size_t clamped = 0;
  const UnitData data = map_pairs(from, to, t, clamped);
  auto r = train_relaxed_unit(layout, data, cfg, on_epoch);
  std::vector<int> cert = cfg.relaxed() ? resolve_raise(layout, cfg.degree_raise) : std::vector<int>{};
  return {make_conditional_flow(layout, std::move(r.model), std::move(cert)), std::move(r.history), clamped};
}

}  // namespace bnf
