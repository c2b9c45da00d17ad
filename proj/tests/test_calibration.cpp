#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ensloss/calibration.hpp"
#include "ensloss/io.hpp"

using namespace ensloss;

namespace {

PricePanel make_panel(const std::vector<std::vector<double>>& rows) {
  PricePanel p;
  const int k = static_cast<int>(rows.front().size());
  for (int i = 0; i < k; ++i) p.tickers.push_back("T" + std::to_string(i + 1));
  p.prices.resize(k, static_cast<int>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "2020-01-%02d", static_cast<int>(t + 1));
    p.dates.emplace_back(buf);
    for (int i = 0; i < k; ++i) p.prices(i, static_cast<int>(t)) = rows[t][i];
  }
  return p;
}

std::vector<double> compound_samples(double n, int count, std::uint64_t seed) {
  const auto x = sample_returns(CovarianceSpec::one_factor({1.0}, 0.0), n, count, seed);
  return std::vector<double>(x.data(), x.data() + x.size());
}

}  // namespace

TEST(Returns, SimpleAndMultiDay) {
  const auto p = make_panel({{100.0}, {110.0}, {99.0}, {99.0}, {108.9}});
  const auto r1 = compute_returns(p, 1);
  ASSERT_EQ(r1.observations(), 4);
  EXPECT_NEAR(r1.returns(0, 0), 0.1, 1e-14);
  EXPECT_NEAR(r1.returns(0, 1), -0.1, 1e-14);
  const auto r2 = compute_returns(p, 2);
  ASSERT_EQ(r2.observations(), 2);
  EXPECT_NEAR(r2.returns(0, 0), -0.01, 1e-14);
  EXPECT_NEAR(r2.returns(0, 1), 0.1, 1e-14);
  const auto r2o = compute_returns(p, 2, true);
  EXPECT_EQ(r2o.observations(), 3);
  EXPECT_THROW(compute_returns(p, 5), DomainError);
}

TEST(Returns, NonpositivePriceNamesTickerAndDate) {
  const auto p = make_panel({{100.0, 5.0}, {101.0, 0.0}, {102.0, 6.0}});
  try {
    compute_returns(p, 1);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("T2"), std::string::npos);
    EXPECT_NE(msg.find("2020-01-02"), std::string::npos);
  }
}

TEST(Correlation, KnownSeries) {
  std::vector<std::vector<double>> rows{{100.0, 100.0, 100.0}};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 0.01);
  for (int t = 0; t < 4000; ++t) {
    const double common = normal(rng);
    auto last = rows.back();
    rows.push_back({last[0] * (1 + common), last[1] * (1 + 2 * common), last[2] * (1 + normal(rng))});
  }
  const auto rm = compute_returns(make_panel(rows), 1);
  const auto corr = correlation_matrix(rm);
  EXPECT_NEAR(corr(0, 1), 1.0, 1e-12);
  EXPECT_NEAR(corr(0, 2), 0.0, 0.05);
  EXPECT_NEAR(mean_correlation(rm), (corr(0, 1) + corr(0, 2) + corr(1, 2)) / 3.0, 1e-14);
}

TEST(Correlation, ZeroVarianceNamesSeries) {
  const auto rm = compute_returns(make_panel({{100.0, 7.0}, {101.0, 7.0}, {103.0, 7.0}, {102.0, 7.0}}), 1);
  try {
    mean_correlation(rm);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("T2"), std::string::npos);
  }
}

TEST(Rotation, WhitensAndPools) {
  const auto panel = synthetic_panel(6, 3000, 0.4, 5.0, 0.02, 12);
  const auto rm = compute_returns(panel, 1);
  const auto pooled = rotate_and_rescale(rm);
  ASSERT_EQ(pooled.size(), static_cast<std::size_t>(6 * rm.observations()));
  const Eigen::Map<const Eigen::MatrixXd> z(pooled.data(), 6, rm.observations());
  const Eigen::MatrixXd cov = z * z.transpose() / static_cast<double>(rm.observations());
  EXPECT_LT((cov - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Rotation, DegenerateCovarianceIsDataError) {
  const auto rm = compute_returns(make_panel({{100.0, 50.0}, {101.0, 50.5}, {99.0, 49.5}, {102.0, 51.0}}), 1);
  EXPECT_THROW(rotate_and_rescale(rm), DataError);
}

TEST(FitN, LogDensityConsistent) {
  for (double n : {2.5, 4.2, 12.0}) {
    for (double r : {0.0, 1e-8, 0.3, 4.0, 25.0}) {
      EXPECT_NEAR(log_univariate_rescaled_density(r, n), std::log(univariate_rescaled_density(r, n)), 1e-11);
    }
  }
  const std::vector<double> s{0.0, 1e-8, -0.5, 3.0, 50.0, 1e-7, -200.0};
  double direct = 0.0;
  for (double x : s) direct += log_univariate_rescaled_density(x, 4.2);
  EXPECT_NEAR(rescaled_log_likelihood(s, 4.2), direct, 1e-8 * std::abs(direct));
}

TEST(FitN, RecoversGeneratingValue) {
  const auto s = compound_samples(4.2, 200000, 21);
  const auto fit = fit_n(s);
  EXPECT_NEAR(fit.n_hat, 4.2, 0.2);
  EXPECT_FALSE(fit.at_bound);
  EXPECT_GT(fit.trace.size(), 10u);

  FitNOptions lsq;
  lsq.objective = FitObjective::log_histogram_least_squares;
  EXPECT_NEAR(fit_n(s, lsq).n_hat, 4.2, 0.63);
}

TEST(FitN, ThreadsDoNotChangeResult) {
  const auto s = compound_samples(6.0, 50000, 4);
  FitNOptions a;
  FitNOptions b;
  b.threads = 3;
  EXPECT_EQ(fit_n(s, a).n_hat, fit_n(s, b).n_hat);
}

TEST(FitN, LikelihoodIsUnimodal) {
  const auto s = compound_samples(4.2, 50000, 8);
  std::vector<double> ll;
  for (int i = 0; i < 50; ++i) ll.push_back(rescaled_log_likelihood(s, 2.2 + i * 0.5));
  int changes = 0;
  for (std::size_t i = 2; i < ll.size(); ++i) {
    if ((ll[i] - ll[i - 1] > 0) != (ll[i - 1] - ll[i - 2] > 0)) ++changes;
  }
  EXPECT_LE(changes, 1);
}

TEST(FitN, GaussianDataHitsUpperBound) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  std::vector<double> s(50000);
  for (double& x : s) x = normal(rng);
  const auto fit = fit_n(s);
  EXPECT_TRUE(fit.at_bound);
  EXPECT_GT(fit.n_hat, 50.0);
  EXPECT_THROW(fit_n(std::vector<double>(10, 0.1)), DomainError);
}

TEST(DriftVol, RecoversGbmParameters) {
  const double mu = 0.01;
  const double rho = 0.08;
  const int per_unit = 20;
  const double dt = 1.0 / per_unit;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> rows{{100.0}};
  for (int t = 0; t < 20000; ++t) {
    const double x = (mu - 0.5 * rho * rho) * dt + rho * std::sqrt(dt) * normal(rng);
    rows.push_back({rows.back()[0] * std::exp(x)});
  }
  PricePanel p = make_panel({{1.0}, {1.0}});
  p.prices.resize(1, static_cast<int>(rows.size()));
  p.dates.clear();
  for (std::size_t t = 0; t < rows.size(); ++t) {
    p.prices(0, static_cast<int>(t)) = rows[t][0];
    p.dates.push_back(std::to_string(t));
  }
  const auto dv = estimate_drift_vol(compute_returns(p, 1), per_unit);
  EXPECT_NEAR(dv.rho[0], rho, 0.002);
  EXPECT_NEAR(dv.mu[0], mu, 4.0 * rho / std::sqrt(1000.0));
  EXPECT_DOUBLE_EQ(dv.dt_units, dt);
}

TEST(Calibrate, SyntheticFixture) {
  const auto panel = io::read_price_panel(std::string(ENSLOSS_TEST_DATA) + "/synthetic_panel.csv");
  CalibrationOptions daily;
  daily.horizon_days = 1;
  const auto r = calibrate(panel, daily);
  EXPECT_GE(r.c_hat, 0.24);
  EXPECT_LE(r.c_hat, 0.28);
  ASSERT_TRUE(r.n_hat.has_value());
  EXPECT_NEAR(*r.n_hat, 4.2, 0.15 * 4.2);
  EXPECT_EQ(r.mu_hat.size(), panel.tickers.size());
  EXPECT_NEAR(r.rho_hat[0], 0.02 * std::sqrt(20.0), 0.01);

  const auto monthly = calibrate(panel, {});
  EXPECT_GE(monthly.c_hat, 0.24);
  EXPECT_LE(monthly.c_hat, 0.28);
}

TEST(Calibrate, IdenticalSeriesAreDegenerate) {
  std::vector<std::vector<double>> rows{{100.0, 100.0}};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 0.01);
  for (int t = 0; t < 100; ++t) {
    const double x = rows.back()[0] * (1 + normal(rng));
    rows.push_back({x, x});
  }
  CalibrationOptions opt;
  opt.horizon_days = 1;
  const auto r = calibrate(make_panel(rows), opt);
  EXPECT_NEAR(r.c_hat, 1.0, 1e-12);
  EXPECT_FALSE(r.n_hat.has_value());
  EXPECT_FALSE(r.warnings.empty());
}

TEST(Calibrate, ConstantPricesAreDataError) {
  const auto p = make_panel({{10.0, 5.0}, {10.0, 5.1}, {10.0, 5.2}, {10.0, 5.0}});
  CalibrationOptions opt;
  opt.horizon_days = 1;
  EXPECT_THROW(calibrate(p, opt), DataError);
}

TEST(SyntheticPanel, WeekdayDates) {
  const auto p = synthetic_panel(2, 12, 0.2, 5.0, 0.01, 1);
  EXPECT_EQ(p.dates.front(), "2000-01-03");
  EXPECT_EQ(p.dates[5], "2000-01-10");
  EXPECT_TRUE(std::is_sorted(p.dates.begin(), p.dates.end()));
  EXPECT_TRUE((p.prices.array() > 0).all());
}
