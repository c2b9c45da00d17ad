#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <gtest/gtest.h>

#include "ensloss/ensemble_returns.hpp"
#include "oracle_values.hpp"

using namespace ensloss;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// integral of x^power * density over the real line
double moment(double n, int power) {
  boost::math::quadrature::exp_sinh<double> integrator;
  auto f = [&](double x) { return x > 500.0 ? 0.0 : std::pow(x, power) * univariate_rescaled_density(x, n); };
  return 2.0 * integrator.integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-13);
}

}  // namespace

TEST(UnivariateDensity, MatchesMixtureIntegral) {
  EXPECT_LT(rel(univariate_rescaled_density(0.0, 4.2), oracle::univariate_4_2_0_0), 1e-12);
  EXPECT_LT(rel(univariate_rescaled_density(0.5, 4.2), oracle::univariate_4_2_0_5), 1e-12);
  EXPECT_LT(rel(univariate_rescaled_density(-3.0, 4.2), oracle::univariate_4_2_3_0), 1e-12);
  EXPECT_LT(rel(univariate_rescaled_density(6.0, 6.0), oracle::univariate_6_0_6_0), 1e-12);
  EXPECT_LT(rel(univariate_rescaled_density(10.0, 2.5), oracle::univariate_2_5_10_0), 1e-11);
}

TEST(UnivariateDensity, ContinuousAtZero) {
  for (double n : {2.5, 4.2, 6.0, 30.0}) {
    EXPECT_LT(rel(univariate_rescaled_density(1e-7, n), univariate_rescaled_density(0.0, n)), 1e-9);
  }
  EXPECT_THROW(univariate_rescaled_density(0.0, 0.8), DomainError);
}

TEST(UnivariateDensity, NormalizedWithUnitVariance) {
  for (double n : {4.2, 6.0}) {
    EXPECT_NEAR(moment(n, 0), 1.0, 1e-6) << n;
    EXPECT_NEAR(moment(n, 2), 1.0, 1e-4) << n;
    // excess kurtosis of the chi-square mixture is 6 / N
    EXPECT_NEAR(moment(n, 4), 3.0 * (1.0 + 2.0 / n), 1e-6) << n;
  }
}

TEST(UnivariateDensity, SmallerNHasHeavierTails) {
  EXPECT_GT(univariate_rescaled_density(6.0, 4.2), univariate_rescaled_density(6.0, 6.0));
}

TEST(AveragedDensity, MatchesMixtureIntegral) {
  const auto cov = CovarianceSpec::one_factor({0.1, 0.2, 0.15}, 0.3);
  const std::vector<double> r{0.05, -0.12, 0.2};
  EXPECT_LT(rel(averaged_density(r, cov, 5.0), oracle::multivariate_k3), 1e-11);

  Eigen::MatrixXd c(2, 2);
  c << 1.0, 0.01 / (0.2 * 0.3), 0.01 / (0.2 * 0.3), 1.0;
  const auto full = CovarianceSpec::full({0.2, 0.3}, c);
  const std::vector<double> r2{0.1, 0.3};
  EXPECT_LT(rel(averaged_density(r2, full, 4.2), oracle::multivariate_k2_full), 1e-11);
}

TEST(AveragedDensity, OneAssetReducesToUnivariate) {
  const auto cov = CovarianceSpec::one_factor({1.0}, 0.0);
  for (double r : {0.0, 0.3, -1.7, 5.0}) {
    const double x[] = {r};
    EXPECT_LT(rel(averaged_density(x, cov, 4.2), univariate_rescaled_density(r, 4.2)), 1e-12) << r;
  }
}

TEST(AveragedDensity, OriginWhenKBelowN) {
  const auto cov = CovarianceSpec::one_factor({0.1, 0.2, 0.3}, 0.2);
  const double zero[] = {0.0, 0.0, 0.0};
  const double tiny[] = {1e-9, -1e-9, 2e-9};
  EXPECT_LT(rel(averaged_density(zero, cov, 6.0), averaged_density(tiny, cov, 6.0)), 1e-8);
  EXPECT_THROW(averaged_density(zero, cov, 2.5), DomainError);
}

TEST(AveragedDensity, OneFactorRepresentationAgrees) {
  const EnsembleParams params{0.26, 4.2};
  for (int k : {2, 3, 5}) {
    std::vector<double> vols;
    for (int i = 0; i < k; ++i) vols.push_back(0.05 + 0.02 * i);
    const auto cov = CovarianceSpec::one_factor(vols, params.c);
    std::mt19937_64 rng(k);
    std::normal_distribution<double> normal(0.0, 1.5);
    for (int p = 0; p < 20; ++p) {
      std::vector<double> r(k);
      for (int i = 0; i < k; ++i) r[i] = vols[i] * normal(rng);
      const double direct = averaged_density(r, cov, params.n_eff);
      EXPECT_LT(rel(averaged_density_onefactor(r, vols, params), direct), 1e-6) << k << ' ' << p;
    }
  }
}

TEST(AveragedDensity, RejectsSingularCovariance) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Ones(2, 2);
  const auto cov = CovarianceSpec::full({0.1, 0.1}, c);
  const double r[] = {0.01, 0.02};
  EXPECT_THROW(averaged_density(r, cov, 4.2), DomainError);
  EXPECT_THROW(CovarianceSpec::one_factor({0.1, 0.1}, 1.0).validate(), DomainError);
  EXPECT_THROW((EnsembleParams{0.2, 2.0}.validate()), DomainError);
  EXPECT_THROW((EnsembleParams{-0.1, 5.0}.validate()), DomainError);
}

TEST(Sampler, MomentsAndCorrelation) {
  const double n = 8.0;
  const auto cov = CovarianceSpec::one_factor({0.1, 0.3}, 0.4);
  const auto x = sample_returns(cov, n, 400000, 11);
  const Eigen::VectorXd a = x.col(0);
  const Eigen::VectorXd b = x.col(1);
  const double va = a.squaredNorm() / a.size();
  const double vb = b.squaredNorm() / b.size();
  EXPECT_NEAR(std::sqrt(va), 0.1, 0.002);
  EXPECT_NEAR(std::sqrt(vb), 0.3, 0.006);
  EXPECT_NEAR(a.dot(b) / a.size() / std::sqrt(va * vb), 0.4, 0.01);
  const double kurt = a.array().pow(4).mean() / (va * va);
  EXPECT_NEAR(kurt - 3.0, 6.0 / n, 0.1);
}

TEST(Sampler, KolmogorovSmirnovAgainstDensity) {
  const double n = 4.2;
  const auto x = sample_returns(CovarianceSpec::one_factor({1.0}, 0.0), n, 20000, 5);
  std::vector<double> s(x.data(), x.data() + x.size());
  std::sort(s.begin(), s.end());
  // CDF on a fine grid by cumulative Simpson-free trapezoid in small steps
  const double lo = -30.0;
  const double step = 1e-3;
  std::vector<double> cdf{0.0};
  double prev = univariate_rescaled_density(lo, n);
  for (double t = lo + step; t <= 30.0 + 1e-12; t += step) {
    const double cur = univariate_rescaled_density(t, n);
    cdf.push_back(cdf.back() + 0.5 * step * (prev + cur));
    prev = cur;
  }
  auto F = [&](double v) {
    const double pos = (v - lo) / step;
    if (pos <= 0) return 0.0;
    const std::size_t i = static_cast<std::size_t>(pos);
    if (i + 1 >= cdf.size()) return 1.0;
    return cdf[i] + (pos - i) * (cdf[i + 1] - cdf[i]);
  };
  double d = 0.0;
  const double m = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = F(s[i]);
    d = std::max({d, std::abs(f - i / m), std::abs((i + 1) / m - f)});
  }
  EXPECT_LT(d * std::sqrt(m), 1.63);  // 1% critical value
}

TEST(Sampler, ThreadCountDoesNotChangeDraws) {
  const auto cov = CovarianceSpec::one_factor({0.1, 0.2, 0.3}, 0.26);
  const auto a = sample_returns(cov, 4.2, 10000, 3, 1);
  const auto b = sample_returns(cov, 4.2, 10000, 3, 3);
  EXPECT_TRUE((a.array() == b.array()).all());
  const auto c = sample_returns(cov, 4.2, 10000, 4, 1);
  EXPECT_FALSE((a.array() == c.array()).all());
}

TEST(Sampler, FullCorrelationMatchesOneFactor) {
  const double c = 0.3;
  Eigen::MatrixXd corr = Eigen::MatrixXd::Constant(3, 3, c);
  corr.diagonal().setOnes();
  const auto x = sample_returns(CovarianceSpec::full({0.1, 0.1, 0.1}, corr), 6.0, 200000, 9);
  const Eigen::MatrixXd emp = x.transpose() * x / static_cast<double>(x.rows());
  EXPECT_NEAR(emp(0, 1) / emp(0, 0), c, 0.015);
  EXPECT_NEAR(emp(1, 1), 0.01, 3e-4);
}

TEST(DensityCurve, InterpolationAndMass) {
  DensityCurve curve{{0.0, 1.0, 2.0}, {0.0, 1.0, 0.0}, {}};
  EXPECT_DOUBLE_EQ(curve.trapezoid_mass(), 1.0);
  EXPECT_DOUBLE_EQ(curve.at(0.5), 0.5);
  EXPECT_DOUBLE_EQ(curve.at(3.0), 0.0);
}
