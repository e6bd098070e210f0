#include <gtest/gtest.h>

#include <cmath>

#include "bnf/bernstein.hpp"
#include "bnf/error.hpp"
#include "oracles.hpp"

using namespace bnf;
using bnf::test::direct_eval;
using bnf::test::random_tensor;

namespace {

std::vector<double> random_point(int n, Rng& rng) {
  std::vector<double> u(static_cast<std::size_t>(n));
  for (double& v : u) v = rng.uniform();
  return u;
}

}  // namespace

TEST(Basis, PartitionOfUnityAndClosedForm) {
  for (int d : {0, 1, 2, 5, 17, 40}) {
    for (double u : {0.0, 0.1, 0.5, 0.93, 1.0}) {
      const auto phi = basis_values(d, u);
      double s = 0.0;
      for (int j = 0; j <= d; ++j) {
        s += phi[static_cast<std::size_t>(j)];
        const double want = binomial(d, j) * std::pow(u, j) * std::pow(1.0 - u, d - j);
        EXPECT_NEAR(phi[static_cast<std::size_t>(j)], want, 1e-13);
      }
      EXPECT_NEAR(s, 1.0, 1e-13);
    }
  }
}

TEST(Basis, Binomial) {
  EXPECT_EQ(binomial(0, 0), 1.0);
  EXPECT_EQ(binomial(10, 3), 120.0);
  EXPECT_EQ(binomial(60, 30), 118264581564861424.0);
  EXPECT_EQ(binomial(5, 6), 0.0);
  EXPECT_NEAR(binomial(600, 2), 179700.0, 1e-6);
}

TEST(Basis, EvalRejectsOutOfRange) {
  const int j[] = {1};
  const int d[] = {2};
  const double bad[] = {1.5};
  EXPECT_THROW(basis_eval(j, d, bad), ContractError);
  const int jj[] = {3};
  const double ok[] = {0.5};
  EXPECT_THROW(basis_eval(jj, d, ok), ContractError);
}

TEST(Tensor, ShapeAndIndexing) {
  BernsteinTensor t({2, 3});
  EXPECT_EQ(t.size(), 12u);
  EXPECT_EQ(t.stride(0), 4u);
  EXPECT_EQ(t.stride(1), 1u);
  const int idx[] = {1, 2};
  t.at(idx) = 7.0;
  EXPECT_EQ(t[6], 7.0);
  EXPECT_EQ(BernsteinTensor::scalar(2.5).value(), 2.5);
  EXPECT_THROW(BernsteinTensor({1, 1}, std::vector<double>(3)), ContractError);
}

TEST(Eval, MatchesDirectExpansion) {
  Rng rng(11);
  for (const DegreeVector& deg : {DegreeVector{4}, DegreeVector{3, 5}, DegreeVector{2, 1, 3}, DegreeVector{0, 2}}) {
    const BernsteinTensor p = random_tensor(deg, rng);
    for (int k = 0; k < 20; ++k) {
      const auto u = random_point(p.dims(), rng);
      EXPECT_NEAR(eval(p, u), direct_eval(p, u), 1e-12);
    }
  }
}

TEST(Eval, ConstantTensorIsConstant) {
  const BernsteinTensor p({3, 4}, 2.0);
  const double u[] = {0.3, 0.8};
  EXPECT_NEAR(eval(p, u), 2.0, 1e-14);
}

TEST(Restrict, AgreesWithFullEvaluation) {
  Rng rng(12);
  const BernsteinTensor p = random_tensor({3, 4, 2}, rng);
  const double v = 0.37;
  const BernsteinTensor r = restrict_axis(p, 1, v);
  EXPECT_EQ(r.degree(), (DegreeVector{3, 2}));
  for (int k = 0; k < 10; ++k) {
    const auto u = random_point(2, rng);
    const double full[] = {u[0], v, u[1]};
    EXPECT_NEAR(eval(r, u), eval(p, full), 1e-13);
  }
}

TEST(Calculus, DerivativeMatchesFiniteDifference) {
  Rng rng(13);
  const BernsteinTensor p = random_tensor({5, 3}, rng);
  for (int axis = 0; axis < 2; ++axis) {
    const BernsteinTensor dp = partial_derivative(p, axis);
    EXPECT_EQ(dp.degree(axis), p.degree(axis) - 1);
    for (int k = 0; k < 10; ++k) {
      auto u = random_point(2, rng);
      u[static_cast<std::size_t>(axis)] = 0.1 + 0.8 * u[static_cast<std::size_t>(axis)];
      const double h = 1e-6;
      auto up = u, dn = u;
      up[static_cast<std::size_t>(axis)] += h;
      dn[static_cast<std::size_t>(axis)] -= h;
      EXPECT_NEAR(eval(dp, u), (eval(p, up) - eval(p, dn)) / (2 * h), 1e-6);
    }
  }
  EXPECT_THROW(partial_derivative(BernsteinTensor({0}), 0), ContractError);
}

TEST(Calculus, AntiderivativeInvertsDerivative) {
  Rng rng(14);
  const BernsteinTensor p = random_tensor({4, 2}, rng);
  const BernsteinTensor P = antiderivative_axis(p, 0);
  const BernsteinTensor back = partial_derivative(P, 0);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(back[i], p[i], 1e-13);
  const double zero[] = {0.0, 0.6};
  EXPECT_NEAR(eval(P, zero), 0.0, 1e-15);
}

TEST(Calculus, IntegrateBoxMatchesQuadrature) {
  Rng rng(15);
  const BernsteinTensor p = random_tensor({6, 4}, rng);
  const Box box{{{0.1, 0.7}, {0.25, 0.9}}};
  const double want = test::quad2(
      [&](double a, double b) {
        const double u[] = {a, b};
        return direct_eval(p, {u[0], u[1]});
      },
      0.1, 0.7, 0.25, 0.9);
  EXPECT_NEAR(integrate_box(p, box), want, 1e-12);
  EXPECT_THROW(integrate_box(p, Box{{{0.5, 0.2}, {0.0, 1.0}}}), ContractError);
  EXPECT_THROW(integrate_box(p, Box{{{0.0, 1.0}}}), ContractError);
}

TEST(Calculus, TotalMassIsCoefficientMean) {
  Rng rng(16);
  const BernsteinTensor p = random_tensor({3, 5}, rng);
  double mean = 0.0;
  for (double v : p.coeffs()) mean += v;
  mean /= static_cast<double>(p.size());
  EXPECT_NEAR(total_mass(p), mean, 1e-14);
  EXPECT_NEAR(integrate_box(p, Box::unit(2)), mean, 1e-14);
}

TEST(Calculus, MarginalizeMatchesQuadrature) {
  Rng rng(17);
  const BernsteinTensor p = random_tensor({3, 7}, rng);
  const BernsteinTensor m = marginalize_axis(p, 1);
  EXPECT_EQ(m.degree(), DegreeVector{3});
  for (double a : {0.0, 0.2, 0.77, 1.0}) {
    const double want = test::quad([&](double b) { return direct_eval(p, {a, b}); }, 0.0, 1.0);
    EXPECT_NEAR(eval(m, std::vector<double>{a}), want, 1e-13);
  }
}

TEST(Multiply, PointwiseProductAndExactCoefficients) {
  Rng rng(18);
  const BernsteinTensor p = random_tensor({2, 3}, rng);
  const BernsteinTensor q = random_tensor({3, 1}, rng);
  const BernsteinTensor pq = multiply(p, q);
  EXPECT_EQ(pq.degree(), (DegreeVector{5, 4}));
  for (int k = 0; k < 10; ++k) {
    const auto u = random_point(2, rng);
    EXPECT_NEAR(eval(pq, u), eval(p, u) * eval(q, u), 1e-13);
  }
  // Exact monomial-basis product converted back to Bernstein form.
  test::MonoPoly mp = test::to_monomial(p);
  test::MonoPoly mq = test::to_monomial(q);
  test::MonoPoly prod{{5, 4}, std::vector<test::Rational>(6 * 5, 0)};
  test::for_each_index(mp.deg, [&](const std::vector<int>& a) {
    test::for_each_index(mq.deg, [&](const std::vector<int>& b) {
      prod.c[prod.index({a[0] + b[0], a[1] + b[1]})] += mp.c[mp.index(a)] * mq.c[mq.index(b)];
    });
  });
  const auto want = test::to_bernstein(prod, {5, 4});
  for (std::size_t i = 0; i < pq.size(); ++i) EXPECT_NEAR(pq[i], want[i].convert_to<double>(), 1e-13);
}

TEST(Multiply, ScalarAndShapeErrors) {
  const BernsteinTensor p({2}, 3.0);
  const BernsteinTensor s = BernsteinTensor::scalar(2.0);
  EXPECT_EQ(multiply(s, s).value(), 4.0);
  EXPECT_THROW(multiply(p, BernsteinTensor({1, 1})), ContractError);
}

TEST(Embed, InsertsConstantAxes) {
  Rng rng(19);
  const BernsteinTensor p = random_tensor({3}, rng);
  const int map[] = {2};
  const BernsteinTensor e = embed(p, 3, map);
  EXPECT_EQ(e.degree(), (DegreeVector{0, 0, 3}));
  const double u[] = {0.9, 0.1, 0.4};
  EXPECT_NEAR(eval(e, u), eval(p, std::vector<double>{0.4}), 1e-15);
}

TEST(Raise, MatrixMatchesClosedFormAndSums) {
  for (int d : {0, 1, 4, 9}) {
    for (int r : {0, 1, 3, 20}) {
      const Eigen::MatrixXd M = raise_matrix(d, d + r);
      ASSERT_EQ(M.rows(), d + r + 1);
      ASSERT_EQ(M.cols(), d + 1);
      for (int k = 0; k <= d + r; ++k) {
        for (int j = 0; j <= d; ++j) {
          const double want = binomial(d, j) * binomial(r, k - j) / binomial(d + r, k);
          EXPECT_NEAR(M(k, j), k - j < 0 || k - j > r ? 0.0 : want, 1e-14);
        }
        EXPECT_NEAR(M.row(k).sum(), 1.0, 1e-13);
      }
      for (int j = 0; j <= d; ++j) EXPECT_NEAR(M.col(j).sum(), (d + r + 1.0) / (d + 1.0), 1e-12);
    }
  }
}

TEST(Raise, PreservesValuesAndTightensBounds) {
  Rng rng(20);
  const BernsteinTensor p = random_tensor({4, 3}, rng);
  const BernsteinTensor q = degree_raise(p, {9, 7});
  for (int k = 0; k < 10; ++k) {
    const auto u = random_point(2, rng);
    EXPECT_NEAR(eval(q, u), eval(p, u), 1e-13);
  }
  const CoeffBounds bp = coeff_bounds(p);
  const CoeffBounds bq = coeff_bounds(q);
  EXPECT_GE(bq.lower, bp.lower - 1e-15);
  EXPECT_LE(bq.upper, bp.upper + 1e-15);
  EXPECT_THROW(degree_raise(p, {3, 3}), ContractError);
}

TEST(Bounds, CoefficientsEncloseValues) {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    const BernsteinTensor p = random_tensor({1 + static_cast<int>(rng.below(6)), 1 + static_cast<int>(rng.below(6))}, rng);
    const CoeffBounds b = coeff_bounds(p);
    for (int k = 0; k < 50; ++k) {
      const double v = eval(p, random_point(2, rng));
      EXPECT_GE(v, b.lower - 1e-12);
      EXPECT_LE(v, b.upper + 1e-12);
    }
  }
}

TEST(ApplyAxis, WidthMismatchThrows) {
  const BernsteinTensor p({2, 2});
  EXPECT_THROW(apply_axis(p, 0, Eigen::MatrixXd::Identity(2, 2)), ContractError);
}
