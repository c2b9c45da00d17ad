#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ensloss/montecarlo.hpp"
#include "ensloss/numerics/quadrature.hpp"

using namespace ensloss;

namespace {

const Obligor kYearly{75.0, 100.0, 0.17, 0.35};
const EnsembleParams kYearlyParams{0.28, 6.0};
const Horizon kOne{1.0, "year"};

SimConfig config(long samples, std::uint64_t seed, int threads, long batch = 65536) {
  SimConfig c;
  c.num_samples = samples;
  c.seed = seed;
  c.threads = threads;
  c.batch_size = batch;
  return c;
}

// E[f(M1, M2)] over z ~ chi2(N) and u ~ Normal(0, 1/N) by tensor Gauss rules.
template <class F>
double model_expectation(const Portfolio& pf, F&& f) {
  const double n = kYearlyParams.n_eff;
  const auto zr = numerics::gauss_laguerre(0.5 * n - 1.0, 200);
  const auto ur = numerics::gauss_hermite_scaled(0.5 * n, 200);
  double total = 0.0;
  for (std::size_t i = 0; i < zr.nodes.size(); ++i) {
    double inner = 0.0;
    for (std::size_t j = 0; j < ur.nodes.size(); ++j) {
      const auto m = aggregate_moments(2.0 * zr.nodes[i], ur.nodes[j], pf, kYearlyParams, kOne);
      inner += ur.weights[j] * f(m);
    }
    total += zr.weights[i] * inner;
  }
  return total / std::tgamma(0.5 * n) * std::sqrt(n / (2.0 * std::numbers::pi));
}

}  // namespace

TEST(Simulate, BitwiseReproducibleAcrossThreads) {
  const auto pf = Portfolio::homogeneous(kYearly, 25);
  const auto a = simulate_losses(pf, kYearlyParams, kOne, config(50000, 7, 1, 4096));
  const auto b = simulate_losses(pf, kYearlyParams, kOne, config(50000, 7, 2, 4096));
  const auto c = simulate_losses(pf, kYearlyParams, kOne, config(50000, 7, 4, 4096));
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.values, c.values);
  const auto d = simulate_losses(pf, kYearlyParams, kOne, config(50000, 8, 1, 4096));
  EXPECT_NE(a.values, d.values);
  EXPECT_EQ(a.fingerprint, d.fingerprint);
}

TEST(Simulate, FingerprintTracksModel) {
  const auto pf = Portfolio::homogeneous(kYearly, 3);
  const auto f1 = model_fingerprint(pf, kYearlyParams, kOne);
  EXPECT_EQ(f1.size(), 16u);
  EXPECT_NE(f1, model_fingerprint(pf, {0.29, 6.0}, kOne));
  EXPECT_NE(f1, model_fingerprint(Portfolio::homogeneous(kYearly, 4), kYearlyParams, kOne));
}

TEST(Simulate, Validation) {
  const auto pf = Portfolio::homogeneous(kYearly, 3);
  EXPECT_THROW(simulate_losses(pf, kYearlyParams, kOne, config(0, 1, 1)), DomainError);
  EXPECT_THROW(simulate_losses(pf, {1.0, 6.0}, kOne, config(10, 1, 1)), DomainError);
}

TEST(Simulate, MeanAndSecondMomentMatchConditionalMoments) {
  const auto pf = Portfolio::homogeneous(kYearly, 15);
  const auto s = simulate_losses(pf, kYearlyParams, kOne, config(400000, 3, 1));
  double s1 = 0.0;
  double s2 = 0.0;
  double s4 = 0.0;
  for (double x : s.values) {
    s1 += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  const double n = static_cast<double>(s.values.size());
  const double mean = s1 / n;
  const double second = s2 / n;
  const double want_mean = model_expectation(pf, [](const AggregateMoments& m) { return m.M1; });
  const double want_second = model_expectation(pf, [](const AggregateMoments& m) { return m.M2 + m.M1 * m.M1; });
  EXPECT_NEAR(mean, want_mean, 4.0 * std::sqrt((second - mean * mean) / n));
  EXPECT_NEAR(second, want_second, 4.0 * std::sqrt((s4 / n - second * second) / n));
}

TEST(Histogram, CountsAndAtom) {
  const std::vector<double> samples{0.0, 0.0, 0.05, 0.1, 0.15, 0.2, 0.5, 1e-7};
  const std::vector<double> edges{1e-6, 0.1, 0.2};
  const auto h = histogram(samples, edges);
  EXPECT_EQ(h.total, 8);
  EXPECT_EQ(h.zero_count, 2);
  EXPECT_EQ(h.below_range, 1);
  EXPECT_EQ(h.above_range, 1);
  EXPECT_EQ(h.counts, (std::vector<long>{1, 3}));
  EXPECT_NEAR(h.densities[1], 3.0 / (8 * 0.1), 1e-12);
  EXPECT_NEAR(h.std_errors[1], std::sqrt(3.0) / (8 * 0.1), 1e-12);
  EXPECT_DOUBLE_EQ(h.zero_fraction(), 0.25);
  EXPECT_THROW(histogram(samples, std::vector<double>{0.2, 0.1}), DomainError);
}

namespace {

// Exponential(rate) samples and a matching analytic curve on [lo, hi].
struct ExpFixture {
  double rate = 20.0;
  std::vector<double> samples;
  std::vector<double> edges = log_spaced_edges(1e-4, 0.5, 60);
  DensityCurve curve;

  ExpFixture() {
    std::mt19937_64 rng(1);
    std::exponential_distribution<double> e(rate);
    for (int i = 0; i < 1000000; ++i) samples.push_back(e(rng));
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
      const double lo = edges[i];
      const double hi = edges[i + 1];
      curve.abscissae.push_back(0.5 * (lo + hi));
      curve.values.push_back((std::exp(-rate * lo) - std::exp(-rate * hi)) / (hi - lo));
    }
    curve.meta["kind"] = "bin_average";
  }
};

}  // namespace

TEST(Compare, ExactCurvePasses) {
  const ExpFixture f;
  const auto report = compare_density(histogram(f.samples, f.edges), f.curve);
  EXPECT_TRUE(report.pass) << report.chi2_per_dof << ' ' << report.max_abs_z;
  EXPECT_GT(report.dof, 40);
}

TEST(Compare, TailDistortionFails) {
  ExpFixture f;
  for (std::size_t i = 0; i < f.curve.abscissae.size(); ++i) {
    if (f.curve.abscissae[i] > 0.1) f.curve.values[i] *= 1.1;
  }
  const auto report = compare_density(histogram(f.samples, f.edges), f.curve);
  EXPECT_FALSE(report.pass);
  EXPECT_GT(report.max_abs_z, 4.0);
}

TEST(Compare, PointwiseCurveIsAveragedOverBins) {
  DensityCurve line{{0.0, 1.0}, {0.0, 2.0}, {}};
  EXPECT_NEAR(curve_bin_average(line, 0.2, 0.6), 0.8, 1e-14);
  DensityCurve hat{{0.0, 0.5, 1.0}, {0.0, 1.0, 0.0}, {}};
  EXPECT_NEAR(curve_bin_average(hat, 0.25, 0.75), 0.75, 1e-14);
}

TEST(Compare, SparseBinsAreSkipped) {
  const std::vector<double> samples(50, 0.3);
  const std::vector<double> edges{0.1, 0.5};
  DensityCurve curve{{0.0, 1.0}, {1.0, 1.0}, {}};
  const auto report = compare_density(histogram(samples, edges), curve);
  EXPECT_EQ(report.dof, 0);
  EXPECT_FALSE(report.pass);
}
