#pragma once

// Estimation of the model parameters from a panel of prices: the mean
// correlation c, the fluctuation parameter N (fitted to the pooled
// distribution of returns rotated into the covariance eigenbasis and scaled
// to unit variance) and per-asset drift and volatility.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include "ensloss/ensemble_returns.hpp"
#include "ensloss/error.hpp"
#include "ensloss/numerics/eigen.hpp"
#include "ensloss/numerics/special.hpp"
#include "ensloss/parallel.hpp"

namespace ensloss {

inline constexpr int kTradingDaysPerMonth = 20;
inline constexpr int kTradingDaysPerYear = 252;

struct PricePanel {
  std::vector<std::string> tickers;
  std::vector<std::string> dates;
  Eigen::MatrixXd prices;  // K x T_obs
  long dropped_rows = 0;

  int assets() const { return static_cast<int>(prices.rows()); }
  int observations() const { return static_cast<int>(prices.cols()); }
};

struct ReturnMatrix {
  std::vector<std::string> tickers;
  Eigen::MatrixXd returns;  // K x number of return windows
  int horizon_days = 1;
  bool overlapping = false;

  int assets() const { return static_cast<int>(returns.rows()); }
  int observations() const { return static_cast<int>(returns.cols()); }
};

/// r_k(t) = (S_k(t + dt) - S_k(t)) / S_k(t); disjoint windows unless
/// `overlapping` is set.
inline ReturnMatrix compute_returns(const PricePanel& panel, int horizon_days,
                                    bool overlapping = false) {
  detail::require(horizon_days >= 1, "compute_returns: horizon must be >= 1 day");
  const int t_obs = panel.observations();
  detail::require(horizon_days < t_obs, "compute_returns: horizon must be shorter than the panel");
  for (int k = 0; k < panel.assets(); ++k) {
    for (int t = 0; t < t_obs; ++t) {
      const double p = panel.prices(k, t);
      if (!(p > 0.0) || !std::isfinite(p)) {
        const std::string who = k < static_cast<int>(panel.tickers.size()) ? panel.tickers[k] : std::to_string(k);
        const std::string when = t < static_cast<int>(panel.dates.size()) ? panel.dates[t] : std::to_string(t);
        throw DataError("compute_returns: nonpositive price for " + who + " on " + when);
      }
    }
  }
  const int step = overlapping ? 1 : horizon_days;
  const int windows = (t_obs - 1 - horizon_days) / step + 1;
  ReturnMatrix rm;
  rm.tickers = panel.tickers;
  rm.horizon_days = horizon_days;
  rm.overlapping = overlapping;
  rm.returns.resize(panel.assets(), windows);
  for (int w = 0; w < windows; ++w) {
    const int t = w * step;
    rm.returns.col(w) = (panel.prices.col(t + horizon_days) - panel.prices.col(t)).cwiseQuotient(
        panel.prices.col(t));
  }
  return rm;
}

namespace detail {

inline std::string series_name(const ReturnMatrix& rm, int k) {
  return k < static_cast<int>(rm.tickers.size()) ? rm.tickers[k] : "series " + std::to_string(k);
}

inline Eigen::MatrixXd centered(const ReturnMatrix& rm) {
  const Eigen::VectorXd mean = rm.returns.rowwise().mean();
  return rm.returns.colwise() - mean;
}

}  // namespace detail

/// Sample correlation matrix over the full interval.
inline Eigen::MatrixXd correlation_matrix(const ReturnMatrix& rm) {
  detail::require(rm.observations() >= 2, "correlation: need at least two observations");
  const Eigen::MatrixXd x = detail::centered(rm);
  const Eigen::MatrixXd cov = x * x.transpose() / static_cast<double>(rm.observations() - 1);
  Eigen::VectorXd sd(rm.assets());
  for (int k = 0; k < rm.assets(); ++k) {
    if (!(cov(k, k) > 0.0)) {
      throw DataError("zero-variance return series: " + detail::series_name(rm, k));
    }
    sd[k] = std::sqrt(cov(k, k));
  }
  Eigen::MatrixXd corr = sd.asDiagonal().inverse() * cov * sd.asDiagonal().inverse();
  corr.diagonal().setOnes();
  return corr;
}

/// Average of the K (K - 1) off-diagonal sample correlations.
inline double mean_correlation(const ReturnMatrix& rm) {
  detail::require(rm.assets() >= 2, "mean_correlation: need at least two series");
  const Eigen::MatrixXd corr = correlation_matrix(rm);
  const double k = rm.assets();
  return (corr.sum() - k) / (k * (k - 1.0));
}

/// Rotates the centred return vectors into the eigenbasis of the sample
/// covariance, divides each component by the square root of its eigenvalue
/// and pools every component of every window into one list.
inline std::vector<double> rotate_and_rescale(const ReturnMatrix& rm) {
  detail::require(rm.observations() >= 2, "rotate_and_rescale: need at least two observations");
  const Eigen::MatrixXd x = detail::centered(rm);
  const double t = rm.observations();
  const Eigen::MatrixXd cov = x * x.transpose() / t;
  const auto eig = numerics::sym_eigen(cov);
  const double top = eig.values.size() ? eig.values[0] : 0.0;
  const double floor = 1e-12 * std::max(top, 1e-300);
  if (rm.observations() <= rm.assets() || !(eig.values.minCoeff() > floor)) {
    throw DataError(
        "rotate_and_rescale: sample covariance is not positive definite; reduce the number of "
        "assets or extend the data interval");
  }
  const Eigen::VectorXd inv_sqrt = eig.values.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd rotated = inv_sqrt.asDiagonal() * eig.vectors.transpose() * x;
  return std::vector<double>(rotated.data(), rotated.data() + rotated.size());
}

/// log of the rescaled single-return density; see univariate_rescaled_density.
inline double log_univariate_rescaled_density(double r_tilde, double n_eff) {
  detail::require(n_eff > 0.0, "log_univariate_rescaled_density: N must be > 0");
  if (r_tilde == 0.0) return std::log(univariate_rescaled_density(0.0, n_eff));
  const double x = std::sqrt(n_eff) * std::abs(r_tilde);
  const double nu = 0.5 * (n_eff - 1.0);
  return 0.5 * (1.0 - n_eff) * std::numbers::ln2 + 0.5 * std::log(n_eff) -
         0.5 * std::log(std::numbers::pi) - std::lgamma(0.5 * n_eff) + nu * std::log(x) +
         numerics::log_bessel_k(nu, x);
}

enum class FitObjective { max_likelihood, log_histogram_least_squares };

struct FitNOptions {
  double n_lo = 2.1;
  double n_hi = 60.0;
  double tol = 1e-3;
  FitObjective objective = FitObjective::max_likelihood;
  int threads = 1;
  // Binning for the least-squares mode.
  int histogram_bins = 80;
  double histogram_extent = 8.0;
  long histogram_min_count = 5;
};

struct FitNResult {
  double n_hat = 0.0;
  double objective = 0.0;
  bool at_bound = false;
  std::vector<std::pair<double, double>> trace;  // (N, objective) per evaluation
};

namespace detail {

// log density tabulated on a uniform grid in ln|x|, with direct evaluation
// outside the table.
class LogDensityTable {
 public:
  static constexpr double kLogLo = -13.8;  // |x| ~ 1e-6
  static constexpr double kLogHi = 4.2;    // |x| ~ 67
  static constexpr int kPoints = 4096;

  explicit LogDensityTable(double n_eff) : n_eff_(n_eff) {
    const double step = (kLogHi - kLogLo) / (kPoints - 1);
    std::vector<double> y(kPoints);
    for (int i = 0; i < kPoints; ++i) {
      y[i] = log_univariate_rescaled_density(std::exp(kLogLo + i * step), n_eff);
    }
    spline_.emplace(y.begin(), y.end(), kLogLo, step);
  }

  double operator()(double x) const {
    const double a = std::abs(x);
    if (a == 0.0) return log_univariate_rescaled_density(0.0, n_eff_);
    const double l = std::log(a);
    if (l <= kLogLo || l >= kLogHi) return log_univariate_rescaled_density(a, n_eff_);
    return (*spline_)(l);
  }

 private:
  double n_eff_;
  std::optional<boost::math::interpolators::cardinal_cubic_b_spline<double>> spline_;
};

}  // namespace detail

/// Sum of log densities, evaluated in fixed-size chunks whose partial sums
/// are added in chunk order.
inline double rescaled_log_likelihood(std::span<const double> samples, double n_eff, int threads = 1) {
  const detail::LogDensityTable table(n_eff);
  constexpr std::size_t chunk = 8192;
  const std::size_t chunks = (samples.size() + chunk - 1) / chunk;
  std::vector<double> partial(chunks, 0.0);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t end = std::min(samples.size(), (c + 1) * chunk);
    double s = 0.0;
    for (std::size_t i = c * chunk; i < end; ++i) s += table(samples[i]);
    partial[c] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

namespace detail {

// Negative squared distance between log empirical and log model densities.
inline double log_histogram_score(std::span<const double> samples, double n_eff,
                                  const FitNOptions& opt) {
  const int bins = opt.histogram_bins;
  const double lo = -opt.histogram_extent;
  const double width = 2.0 * opt.histogram_extent / bins;
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (double x : samples) {
    const double pos = (x - lo) / width;
    if (pos >= 0.0 && pos < bins) ++counts[static_cast<std::size_t>(pos)];
  }
  double sse = 0.0;
  const double n = static_cast<double>(samples.size());
  for (int b = 0; b < bins; ++b) {
    if (counts[b] < opt.histogram_min_count) continue;
    const double emp = counts[b] / (n * width);
    const double center = lo + (b + 0.5) * width;
    const double model = univariate_rescaled_density(center, n_eff);
    const double d = std::log(emp) - std::log(model);
    sse += d * d;
  }
  return -sse;
}

}  // namespace detail

/// Fits N to pooled rescaled returns by golden-section search on
/// [n_lo, n_hi], maximizing the log-likelihood (default) or the negative
/// squared error between log histogram and log density.
inline FitNResult fit_n(std::span<const double> samples, const FitNOptions& opt = {}) {
  detail::require(samples.size() >= 1000, "fit_n: at least 1000 samples required");
  detail::require(opt.n_lo > 2.0 && opt.n_hi > opt.n_lo, "fit_n: need 2 < n_lo < n_hi");
  FitNResult result;
  auto score = [&](double n) {
    const double v = opt.objective == FitObjective::max_likelihood
                         ? rescaled_log_likelihood(samples, n, opt.threads)
                         : detail::log_histogram_score(samples, n, opt);
    result.trace.emplace_back(n, v);
    return v;
  };
  const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = opt.n_lo;
  double b = opt.n_hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = score(x1);
  double f2 = score(x2);
  while (b - a > opt.tol) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = score(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = score(x2);
    }
  }
  result.n_hat = f1 >= f2 ? x1 : x2;
  result.objective = std::max(f1, f2);
  const double margin = 2.0 * opt.tol;
  result.at_bound = result.n_hat - opt.n_lo < margin || opt.n_hi - result.n_hat < margin;
  return result;
}

struct DriftVol {
  std::vector<double> mu;
  std::vector<double> rho;
  double dt_units = 0.0;  // return horizon in horizon units
};

/// Per-asset GBM drift and volatility in horizon units. Uses log returns
/// x = ln(1 + r): rho = std(x) / sqrt(dt), mu = mean(x) / dt + rho^2 / 2.
inline DriftVol estimate_drift_vol(const ReturnMatrix& rm, double days_per_unit) {
  detail::require(days_per_unit > 0.0, "estimate_drift_vol: days_per_unit must be > 0");
  detail::require(rm.observations() >= 2, "estimate_drift_vol: need at least two returns per asset");
  DriftVol out;
  out.dt_units = rm.horizon_days / days_per_unit;
  const int t = rm.observations();
  for (int k = 0; k < rm.assets(); ++k) {
    double mean = 0.0;
    for (int i = 0; i < t; ++i) {
      const double r = rm.returns(k, i);
      if (!(r > -1.0)) throw DataError("estimate_drift_vol: return <= -100% in " + detail::series_name(rm, k));
      mean += std::log1p(r);
    }
    mean /= t;
    double var = 0.0;
    for (int i = 0; i < t; ++i) {
      const double d = std::log1p(rm.returns(k, i)) - mean;
      var += d * d;
    }
    var /= (t - 1);
    const double rho = std::sqrt(var / out.dt_units);
    out.rho.push_back(rho);
    out.mu.push_back(mean / out.dt_units + 0.5 * rho * rho);
  }
  return out;
}

struct CalibrationOptions {
  int horizon_days = kTradingDaysPerMonth;
  double days_per_unit = kTradingDaysPerMonth;
  bool overlapping = false;
  FitNOptions fit;
};

struct FitReport {
  double c_hat = 0.0;
  std::optional<double> n_hat;
  std::vector<double> mu_hat;
  std::vector<double> rho_hat;
  long dropped_rows = 0;
  // diagnostics
  std::optional<FitNResult> fit;
  std::vector<std::string> warnings;
  int horizon_days = 0;
  double days_per_unit = 0.0;
  int windows = 0;
  std::vector<double> rescaled;  // pooled rotated returns
};

/// Full pipeline. c_hat is always reported; a degenerate covariance or too
/// few pooled samples leave n_hat empty with a warning. Zero-variance series
/// and bad prices raise DataError.
inline FitReport calibrate(const PricePanel& panel, const CalibrationOptions& opt = {}) {
  const ReturnMatrix rm = compute_returns(panel, opt.horizon_days, opt.overlapping);
  FitReport report;
  report.dropped_rows = panel.dropped_rows;
  report.horizon_days = opt.horizon_days;
  report.days_per_unit = opt.days_per_unit;
  report.windows = rm.observations();
  if (rm.assets() >= 2) {
    report.c_hat = mean_correlation(rm);
    if (report.c_hat > 1.0 - 1e-9) {
      report.warnings.push_back("degenerate correlation: series are perfectly correlated (c_hat = 1)");
    }
  } else {
    report.warnings.push_back("single series: c_hat undefined, reported as 0");
  }
  const auto dv = estimate_drift_vol(rm, opt.days_per_unit);
  report.mu_hat = dv.mu;
  report.rho_hat = dv.rho;
  try {
    report.rescaled = rotate_and_rescale(rm);
  } catch (const DataError& e) {
    report.warnings.push_back(e.what());
    return report;
  }
  if (report.rescaled.size() < 1000) {
    report.warnings.push_back("fewer than 1000 pooled returns; N not fitted");
    return report;
  }
  report.fit = fit_n(report.rescaled, opt.fit);
  report.n_hat = report.fit->n_hat;
  if (report.fit->at_bound) {
    report.warnings.push_back("N estimate at a search bound; data may be closer to Gaussian");
  }
  return report;
}

/// Price panel driven by model returns: every row of sample_returns is one
/// day's return vector and S(t + 1) = S(t) (1 + r). Dates are consecutive
/// weekdays from 2000-01-03.
inline PricePanel synthetic_panel(int assets, int days, double c, double n_eff, double daily_vol,
                                  std::uint64_t seed, double start_price = 100.0) {
  detail::require(assets >= 1 && days >= 2, "synthetic_panel: need at least one asset and two days");
  const CovarianceSpec cov = CovarianceSpec::one_factor(std::vector<double>(assets, daily_vol), c);
  const Eigen::MatrixXd r = sample_returns(cov, n_eff, days - 1, seed);
  PricePanel panel;
  for (int k = 0; k < assets; ++k) panel.tickers.push_back("S" + std::to_string(k + 1));
  panel.prices.resize(assets, days);
  panel.prices.col(0).setConstant(start_price);
  for (int t = 1; t < days; ++t) {
    for (int k = 0; k < assets; ++k) {
      const double step = std::max(r(t - 1, k), -0.99);
      panel.prices(k, t) = panel.prices(k, t - 1) * (1.0 + step);
    }
  }
  std::chrono::sys_days day{std::chrono::year{2000} / std::chrono::January / 3};
  while (static_cast<int>(panel.dates.size()) < days) {
    const std::chrono::weekday wd{day};
    if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) {
      const std::chrono::year_month_day ymd{day};
      char buf[16];
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                    static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
      panel.dates.emplace_back(buf);
    }
    day += std::chrono::days{1};
  }
  return panel;
}

}  // namespace ensloss
