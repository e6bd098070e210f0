#include "bnf/bernstein.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bnf/error.hpp"

namespace bnf {

using detail::require;

namespace {

constexpr int kPascalRows = 512;

std::size_t product_of_extents(const DegreeVector& degree) {
  std::size_t n = 1;
  for (int d : degree) n *= static_cast<std::size_t>(d) + 1;
  return n;
}

// Row-major view of a tensor as (outer, extent(axis), inner).
struct AxisSplit {
  std::size_t outer;
  std::size_t extent;
  std::size_t inner;
};

AxisSplit split_at(const BernsteinTensor& p, int axis) {
  AxisSplit s{1, p.extent(axis), 1};
  for (int a = 0; a < axis; ++a) s.outer *= p.extent(a);
  for (int a = axis + 1; a < p.dims(); ++a) s.inner *= p.extent(a);
  return s;
}

DegreeVector with_axis_degree(DegreeVector degree, int axis, int value) {
  degree[static_cast<std::size_t>(axis)] = value;
  return degree;
}

DegreeVector without_axis(const DegreeVector& degree, int axis) {
  DegreeVector out;
  out.reserve(degree.size() - 1);
  for (int a = 0; a < static_cast<int>(degree.size()); ++a)
    if (a != axis) out.push_back(degree[static_cast<std::size_t>(a)]);
  return out;
}

void check_axis(const BernsteinTensor& p, int axis) {
  require(axis >= 0 && axis < p.dims(),
          "axis " + std::to_string(axis) + " out of range for a " + std::to_string(p.dims()) +
              "-dimensional tensor");
}

const std::vector<std::vector<double>>& pascal() {
  static const std::vector<std::vector<double>> rows = [] {
    std::vector<std::vector<double>> t(kPascalRows);
    for (int n = 0; n < kPascalRows; ++n) {
      t[n].assign(static_cast<std::size_t>(n) + 1, 1.0);
      for (int k = 1; k < n; ++k) t[n][k] = t[n - 1][k - 1] + t[n - 1][k];
    }
    return t;
  }();
  return rows;
}

}  // namespace

// --- BernsteinTensor --------------------------------------------------------

BernsteinTensor::BernsteinTensor() : coeffs_(1, 0.0) {}

BernsteinTensor::BernsteinTensor(DegreeVector degree, double fill) : degree_(std::move(degree)) {
  for (int d : degree_) require(d >= 0, "degrees must be non-negative");
  coeffs_.assign(product_of_extents(degree_), fill);
  init_strides();
}

BernsteinTensor::BernsteinTensor(DegreeVector degree, std::vector<double> coeffs)
    : degree_(std::move(degree)), coeffs_(std::move(coeffs)) {
  for (int d : degree_) require(d >= 0, "degrees must be non-negative");
  require(coeffs_.size() == product_of_extents(degree_),
          "coefficient count " + std::to_string(coeffs_.size()) +
              " does not match the degree vector");
  init_strides();
}

BernsteinTensor BernsteinTensor::scalar(double value) {
  return BernsteinTensor(DegreeVector{}, std::vector<double>{value});
}

void BernsteinTensor::init_strides() {
  strides_.assign(degree_.size(), 1);
  for (int a = dims() - 2; a >= 0; --a)
    strides_[static_cast<std::size_t>(a)] = strides_[static_cast<std::size_t>(a) + 1] * extent(a + 1);
}

std::size_t BernsteinTensor::flat_index(std::span<const int> index) const {
  require(static_cast<int>(index.size()) == dims(), "multi-index has the wrong length");
  std::size_t flat = 0;
  for (int a = 0; a < dims(); ++a) {
    const int j = index[static_cast<std::size_t>(a)];
    require(j >= 0 && j <= degree(a), "multi-index component out of range");
    flat += static_cast<std::size_t>(j) * stride(a);
  }
  return flat;
}

double BernsteinTensor::value() const {
  require(dims() == 0, "value() needs a zero-dimensional tensor");
  return coeffs_[0];
}

Box Box::unit(int n) { return Box{std::vector<Interval>(static_cast<std::size_t>(n))}; }

// --- scalar helpers ---------------------------------------------------------

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  if (n < kPascalRows) return pascal()[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)];
  return std::round(std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0)));
}

void basis_values(int d, double u, std::span<double> out) {
  require(static_cast<int>(out.size()) == d + 1, "basis output has the wrong size");
  const double v = 1.0 - u;
  out[0] = 1.0;
  for (int r = 1; r <= d; ++r) {
    double carry = 0.0;
    for (int k = 0; k < r; ++k) {
      const double t = out[k];
      out[k] = v * t + carry;
      carry = u * t;
    }
    out[r] = carry;
  }
}

std::vector<double> basis_values(int d, double u) {
  std::vector<double> out(static_cast<std::size_t>(d) + 1);
  basis_values(d, u, out);
  return out;
}

double basis_eval(std::span<const int> j, std::span<const int> d, std::span<const double> u) {
  require(j.size() == d.size() && u.size() == d.size(), "basis_eval: length mismatch");
  double value = 1.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    require(d[i] >= 0 && j[i] >= 0 && j[i] <= d[i], "basis_eval: index outside 0..d");
    require(u[i] >= 0.0 && u[i] <= 1.0, "basis_eval: point outside the unit box");
    value *= binomial(d[i], j[i]) * std::pow(u[i], j[i]) * std::pow(1.0 - u[i], d[i] - j[i]);
  }
  return value;
}

// --- evaluation -------------------------------------------------------------

double eval(const BernsteinTensor& p, std::span<const double> u) {
  require(static_cast<int>(u.size()) == p.dims(), "eval: point dimension mismatch");
  std::vector<double> work(p.coeffs().begin(), p.coeffs().end());
  std::size_t len = work.size();
  for (int axis = p.dims() - 1; axis >= 0; --axis) {
    const std::size_t e = p.extent(axis);
    const std::size_t outer = len / e;
    const double t = u[static_cast<std::size_t>(axis)];
    const double s = 1.0 - t;
    for (std::size_t o = 0; o < outer; ++o) {
      double* b = work.data() + o * e;
      for (std::size_t r = 1; r < e; ++r)
        for (std::size_t k = 0; k + r < e; ++k) b[k] = s * b[k] + t * b[k + 1];
      work[o] = b[0];
    }
    len = outer;
  }
  return work[0];
}

BernsteinTensor restrict_axis(const BernsteinTensor& p, int axis, double value) {
  check_axis(p, axis);
  const AxisSplit s = split_at(p, axis);
  const double t = value;
  const double v = 1.0 - value;
  BernsteinTensor out(without_axis(p.degree(), axis));
  std::vector<double> block(s.extent * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    const double* src = p.coeffs().data() + o * s.extent * s.inner;
    std::copy(src, src + block.size(), block.begin());
    for (std::size_t r = 1; r < s.extent; ++r)
      for (std::size_t k = 0; k + r < s.extent; ++k) {
        double* lo = block.data() + k * s.inner;
        const double* hi = lo + s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) lo[i] = v * lo[i] + t * hi[i];
      }
    std::copy(block.begin(), block.begin() + static_cast<std::ptrdiff_t>(s.inner),
              out.coeffs().begin() + static_cast<std::ptrdiff_t>(o * s.inner));
  }
  return out;
}

// --- calculus ---------------------------------------------------------------

BernsteinTensor partial_derivative(const BernsteinTensor& p, int axis) {
  check_axis(p, axis);
  const int d = p.degree(axis);
  if (d == 0) throw ContractError("partial_derivative: polynomial is constant along this axis");
  const AxisSplit s = split_at(p, axis);
  BernsteinTensor out(with_axis_degree(p.degree(), axis, d - 1));
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j + 1 < s.extent; ++j) {
      const double* a = p.coeffs().data() + (o * s.extent + j) * s.inner;
      const double* b = a + s.inner;
      double* c = out.coeffs().data() + (o * (s.extent - 1) + j) * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) c[i] = d * (b[i] - a[i]);
    }
  return out;
}

BernsteinTensor antiderivative_axis(const BernsteinTensor& p, int axis) {
  check_axis(p, axis);
  const int d = p.degree(axis);
  const AxisSplit s = split_at(p, axis);
  const double scale = 1.0 / (d + 1);
  BernsteinTensor out(with_axis_degree(p.degree(), axis, d + 1));
  for (std::size_t o = 0; o < s.outer; ++o) {
    double* prev = out.coeffs().data() + o * (s.extent + 1) * s.inner;
    for (std::size_t k = 1; k <= s.extent; ++k) {
      const double* src = p.coeffs().data() + (o * s.extent + k - 1) * s.inner;
      double* cur = prev + s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) cur[i] = prev[i] + scale * src[i];
      prev = cur;
    }
  }
  return out;
}

double integrate_box(const BernsteinTensor& p, const Box& box) {
  require(box.dims() == p.dims(), "integrate_box: box dimension mismatch");
  for (const Interval& side : box.sides)
    require(0.0 <= side.lo && side.lo <= side.hi && side.hi <= 1.0,
            "integrate_box: box must satisfy 0 <= lo <= hi <= 1");
  BernsteinTensor q = p;
  for (int axis = p.dims() - 1; axis >= 0; --axis) {
    const Interval side = box.sides[static_cast<std::size_t>(axis)];
    const BernsteinTensor primitive = antiderivative_axis(q, axis);
    BernsteinTensor upper = restrict_axis(primitive, axis, side.hi);
    const BernsteinTensor lower = restrict_axis(primitive, axis, side.lo);
    for (std::size_t i = 0; i < upper.size(); ++i) upper[i] -= lower[i];
    q = std::move(upper);
  }
  return q.value();
}

double total_mass(const BernsteinTensor& p) {
  const double sum = std::accumulate(p.coeffs().begin(), p.coeffs().end(), 0.0);
  return sum / static_cast<double>(p.size());
}

BernsteinTensor marginalize_axis(const BernsteinTensor& p, int axis) {
  check_axis(p, axis);
  const AxisSplit s = split_at(p, axis);
  const double scale = 1.0 / static_cast<double>(s.extent);
  BernsteinTensor out(without_axis(p.degree(), axis));
  for (std::size_t o = 0; o < s.outer; ++o) {
    double* c = out.coeffs().data() + o * s.inner;
    for (std::size_t j = 0; j < s.extent; ++j) {
      const double* src = p.coeffs().data() + (o * s.extent + j) * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) c[i] += src[i];
    }
    for (std::size_t i = 0; i < s.inner; ++i) c[i] *= scale;
  }
  return out;
}

// --- algebra ----------------------------------------------------------------

namespace {

// Multiplies every coefficient by prod_a w_a[j_a].
void scale_separable(BernsteinTensor& t, const std::vector<std::vector<double>>& weights,
                     bool divide) {
  const int n = t.dims();
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  for (std::size_t flat = 0; flat < t.size(); ++flat) {
    double w = 1.0;
    for (int a = 0; a < n; ++a) w *= weights[static_cast<std::size_t>(a)][static_cast<std::size_t>(idx[a])];
    t[flat] = divide ? t[flat] / w : t[flat] * w;
    for (int a = n - 1; a >= 0; --a) {
      if (++idx[a] <= t.degree(a)) break;
      idx[a] = 0;
    }
  }
}

std::vector<std::vector<double>> binomial_rows(const DegreeVector& degree) {
  std::vector<std::vector<double>> rows;
  for (int d : degree) {
    std::vector<double> r(static_cast<std::size_t>(d) + 1);
    for (int j = 0; j <= d; ++j) r[static_cast<std::size_t>(j)] = binomial(d, j);
    rows.push_back(std::move(r));
  }
  return rows;
}

struct Convolution {
  const BernsteinTensor& a;
  const BernsteinTensor& b;
  BernsteinTensor& c;
  int last;

  void run(int axis, std::size_t ao, std::size_t bo, std::size_t co) const {
    const std::size_t ea = a.extent(axis);
    const std::size_t eb = b.extent(axis);
    if (axis == last) {
      const double* bp = b.coeffs().data() + bo;
      double* cp = c.coeffs().data() + co;
      for (std::size_t j = 0; j < ea; ++j) {
        const double aj = a[ao + j];
        if (aj == 0.0) continue;
        double* cj = cp + j;
        for (std::size_t l = 0; l < eb; ++l) cj[l] += aj * bp[l];
      }
      return;
    }
    for (std::size_t j = 0; j < ea; ++j)
      for (std::size_t l = 0; l < eb; ++l)
        run(axis + 1, ao + j * a.stride(axis), bo + l * b.stride(axis), co + (j + l) * c.stride(axis));
  }
};

}  // namespace

BernsteinTensor multiply(const BernsteinTensor& p, const BernsteinTensor& q) {
  require(p.dims() == q.dims(), "multiply: operands have different dimensionality");
  if (p.dims() == 0) return BernsteinTensor::scalar(p.value() * q.value());

  DegreeVector out_degree(p.degree());
  for (int a = 0; a < p.dims(); ++a) out_degree[static_cast<std::size_t>(a)] += q.degree(a);

  // phi_j^a phi_l^b = C(a,j) C(b,l) / C(a+b,j+l) phi_{j+l}^{a+b}
  BernsteinTensor ps = p;
  BernsteinTensor qs = q;
  scale_separable(ps, binomial_rows(p.degree()), false);
  scale_separable(qs, binomial_rows(q.degree()), false);
  BernsteinTensor out(out_degree);
  Convolution{ps, qs, out, p.dims() - 1}.run(0, 0, 0, 0);
  scale_separable(out, binomial_rows(out_degree), true);
  return out;
}

BernsteinTensor embed(const BernsteinTensor& p, int total_dims, std::span<const int> axis_map) {
  require(static_cast<int>(axis_map.size()) == p.dims(), "embed: axis map length mismatch");
  require(total_dims >= p.dims(), "embed: target has fewer axes than the source");
  DegreeVector degree(static_cast<std::size_t>(total_dims), 0);
  int prev = -1;
  for (int a = 0; a < p.dims(); ++a) {
    const int target = axis_map[static_cast<std::size_t>(a)];
    require(target > prev && target < total_dims, "embed: axis map must be strictly increasing");
    degree[static_cast<std::size_t>(target)] = p.degree(a);
    prev = target;
  }
  // Extent-1 axes do not change row-major order.
  return BernsteinTensor(std::move(degree), p.data());
}

Eigen::MatrixXd raise_matrix(int d, int d_plus) {
  require(d >= 0, "raise_matrix: negative degree");
  require(d_plus >= d, "raise_matrix: target degree below source degree");
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(d + 1, d + 1);
  for (int cur = d; cur < d_plus; ++cur) {
    // b+_k = k/(cur+1) b_{k-1} + (cur+1-k)/(cur+1) b_k
    Eigen::MatrixXd step = Eigen::MatrixXd::Zero(cur + 2, cur + 1);
    for (int k = 0; k <= cur + 1; ++k) {
      if (k >= 1) step(k, k - 1) = static_cast<double>(k) / (cur + 1);
      if (k <= cur) step(k, k) = static_cast<double>(cur + 1 - k) / (cur + 1);
    }
    m = step * m;
  }
  return m;
}

BernsteinTensor apply_axis(const BernsteinTensor& p, int axis, const Eigen::MatrixXd& m) {
  check_axis(p, axis);
  require(static_cast<std::size_t>(m.cols()) == p.extent(axis), "apply_axis: matrix width mismatch");
  require(m.rows() >= 1, "apply_axis: empty matrix");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const AxisSplit s = split_at(p, axis);
  const auto rows = static_cast<std::size_t>(m.rows());
  BernsteinTensor out(with_axis_degree(p.degree(), axis, static_cast<int>(rows) - 1));
  for (std::size_t o = 0; o < s.outer; ++o) {
    Eigen::Map<const RowMajor> src(p.coeffs().data() + o * s.extent * s.inner,
                                   static_cast<Eigen::Index>(s.extent), static_cast<Eigen::Index>(s.inner));
    Eigen::Map<RowMajor> dst(out.coeffs().data() + o * rows * s.inner, static_cast<Eigen::Index>(rows),
                             static_cast<Eigen::Index>(s.inner));
    dst.noalias() = m * src;
  }
  return out;
}

BernsteinTensor degree_raise(const BernsteinTensor& p, const DegreeVector& target) {
  require(static_cast<int>(target.size()) == p.dims(), "degree_raise: target has the wrong length");
  BernsteinTensor out = p;
  for (int a = 0; a < p.dims(); ++a) {
    const int t = target[static_cast<std::size_t>(a)];
    if (t < p.degree(a)) throw ContractError("degree_raise: target degree below current degree");
    if (t > p.degree(a)) out = apply_axis(out, a, raise_matrix(p.degree(a), t));
  }
  return out;
}

CoeffBounds coeff_bounds(const BernsteinTensor& p) {
  const auto [lo, hi] = std::minmax_element(p.coeffs().begin(), p.coeffs().end());
  return {*lo, *hi};
}

}  // namespace bnf
