#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "bnf/error.hpp"
#include "bnf/rng.hpp"
#include "bnf/transform.hpp"
#include "oracles.hpp"

using namespace bnf;

TEST(NormalFunctions, QuantileInvertsCdf) {
  for (double p : {1e-12, 1e-6, 0.01, 0.02425, 0.3, 0.5, 0.77, 0.975, 0.999999, 1.0 - 1e-12}) {
    const double x = normal_quantile(p);
    if (p < 0.5)
      EXPECT_NEAR(normal_cdf(x) / p, 1.0, 1e-10) << p;
    else
      EXPECT_NEAR((1.0 - normal_cdf(x)) / (1.0 - p), 1.0, 1e-8) << p;
  }
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_THROW(normal_quantile(0.0), ContractError);
  EXPECT_THROW(normal_quantile(1.0), ContractError);
}

TEST(NormalFunctions, LogPdfIntegratesToOne) {
  const double mass = test::quad_adaptive([](double z) { return std::exp(normal_log_pdf(z)); }, -12.0, 12.0);
  EXPECT_NEAR(mass, 1.0, 1e-12);
}

TEST(AxisMap, GaussianRoundTripAndDerivative) {
  const AxisMap m = AxisMap::gaussian(0.3, 1.7);
  for (double x : {-4.0, -0.2, 0.3, 2.5}) {
    EXPECT_NEAR(m.inverse(m.cdf(x)), x, 1e-9);
    const double h = 1e-5;
    const double fd = (m.cdf(x + h) - m.cdf(x - h)) / (2 * h);
    EXPECT_NEAR(std::exp(m.log_derivative(x)), fd, 1e-8);
  }
  EXPECT_THROW(AxisMap::gaussian(0.0, 0.0), ContractError);
}

TEST(AxisMap, AffineClampsOutsideDomain) {
  const AxisMap m = AxisMap::affine(-2.0, 2.0);
  EXPECT_DOUBLE_EQ(m.cdf(0.0), 0.5);
  EXPECT_DOUBLE_EQ(m.cdf(5.0), 1.0);
  EXPECT_DOUBLE_EQ(m.log_derivative(1.0), -std::log(4.0));
  EXPECT_EQ(m.log_derivative(3.0), -std::numeric_limits<double>::infinity());
  EXPECT_THROW(AxisMap::affine(1.0, 1.0), ContractError);
}

TEST(DiagonalTransform, ForwardClampsAndCounts) {
  const DiagonalTransform t({AxisMap::gaussian(0.0, 1.0), AxisMap::affine(0.0, 1.0)});
  std::vector<double> u(2);
  const double inside[] = {0.1, 0.5};
  EXPECT_EQ(t.forward(inside, u), 0);
  const double far[] = {60.0, -1.0};
  EXPECT_EQ(t.forward(far, u), 2);
  EXPECT_EQ(u[0], 1.0 - kClampEps);
  EXPECT_EQ(u[1], kClampEps);
  const double bad[] = {std::nan(""), 0.0};
  EXPECT_THROW(t.forward(bad, u), ContractError);
  const double edge[] = {0.0, 1.0};
  EXPECT_THROW(t.inverse(edge), ContractError);
}

TEST(DiagonalTransform, LogDetIsSumOfAxes) {
  const DiagonalTransform t({AxisMap::gaussian(1.0, 2.0), AxisMap::gaussian(-1.0, 0.5)});
  const double x[] = {0.4, -0.8};
  EXPECT_NEAR(t.log_det_jacobian(x), t.axis(0).log_derivative(0.4) + t.axis(1).log_derivative(-0.8), 1e-15);
}

TEST(MomentMatch, UsesUnbiasedVariancePlusBuffer) {
  PointSet p(2);
  const double pts[][2] = {{1.0, 0.0}, {2.0, 2.0}, {3.0, 4.0}};
  for (const auto& q : pts) p.push_back(q);
  const DiagonalTransform t = moment_match(p, 2.2);
  EXPECT_DOUBLE_EQ(t.axis(0).a, 2.0);
  EXPECT_NEAR(t.axis(0).b, std::sqrt(1.0 + 2.2), 1e-15);
  EXPECT_NEAR(t.axis(1).b, std::sqrt(4.0 + 2.2), 1e-15);

  PointSet flat(1);
  const double v[] = {3.0};
  flat.push_back(v);
  flat.push_back(v);
  EXPECT_THROW(moment_match(flat, 0.0), ContractError);
  PointSet one(1);
  one.push_back(v);
  EXPECT_THROW(moment_match(one, 1.0), ContractError);
}

TEST(Rng, DeterministicAndDistinctStreams) {
  Rng a(5), b(5), c = Rng::derive(5, 1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
  Rng d(5);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += d.next() == c.next();
  EXPECT_EQ(same, 0);
}

TEST(Rng, UniformAndNormalMoments) {
  Rng r(99);
  const int n = 200000;
  double s = 0, s2 = 0, m = 0, m2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
    const double z = r.normal();
    m += z;
    m2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.5, 0.005);
  EXPECT_NEAR(s2 / n - 0.25, 1.0 / 12.0, 0.003);
  EXPECT_NEAR(m / n, 0.0, 0.01);
  EXPECT_NEAR(m2 / n, 1.0, 0.01);
}

TEST(Rng, BelowIsUnbiasedAndShuffleIsPermutation) {
  Rng r(3);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) ++hist[r.below(7)];
  for (int h : hist) EXPECT_NEAR(h, 10000, 400);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[static_cast<std::size_t>(i)] = i;
  r.shuffle(std::span<int>(v));
  EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 50u);
}
