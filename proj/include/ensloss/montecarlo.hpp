#pragma once

// Brute-force oracle for the analytic loss densities: draws the mixing
// variable, the common factor and the idiosyncratic shocks, maps returns to
// terminal values and accumulates the weighted default losses.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "ensloss/ensemble_returns.hpp"
#include "ensloss/error.hpp"
#include "ensloss/parallel.hpp"
#include "ensloss/portfolio_loss.hpp"
#include "ensloss/random.hpp"

namespace ensloss {

struct SimConfig {
  long num_samples = 1;
  std::uint64_t seed = 0;
  long batch_size = 65536;
  int threads = 1;

  void validate() const {
    detail::require(num_samples >= 1, "SimConfig: num_samples must be >= 1");
    detail::require(batch_size >= 1, "SimConfig: batch_size must be >= 1");
  }
};

struct LossSamples {
  std::vector<double> values;
  SimConfig config;
  std::string fingerprint;
};

/// FNV-1a hash of the model inputs, as 16 hex digits.
inline std::string model_fingerprint(const Portfolio& pf, const EnsembleParams& params,
                                     const Horizon& h) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&hash](double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof buf, "%.17g;", v);
    for (int i = 0; i < len; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ULL;
    }
  };
  mix(params.c);
  mix(params.n_eff);
  mix(h.T);
  for (const auto& ob : pf.obligors()) {
    mix(ob.face_value);
    mix(ob.initial_value);
    mix(ob.drift);
    mix(ob.vol);
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(hash));
  return out;
}

/// Simulates the portfolio loss at maturity. Batch b of the output is drawn
/// from stream (seed, b), so results are bitwise identical for any thread
/// count.
inline LossSamples simulate_losses(const Portfolio& pf, const EnsembleParams& params,
                                   const Horizon& h, const SimConfig& cfg) {
  params.validate();
  h.validate();
  cfg.validate();
  const std::size_t k = pf.size();
  std::vector<double> drift(k), threshold(k), sigma(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& ob = pf.obligors()[i];
    drift[i] = (ob.drift - 0.5 * ob.vol * ob.vol) * h.T;
    threshold[i] = std::log(ob.face_value / ob.initial_value);
    sigma[i] = ob.vol * std::sqrt(h.T);
  }
  const double n = params.n_eff;
  const double sqrt_c = std::sqrt(params.c);
  const double sqrt_1mc = std::sqrt(1.0 - params.c);

  LossSamples out;
  out.config = cfg;
  out.fingerprint = model_fingerprint(pf, params, h);
  out.values.resize(static_cast<std::size_t>(cfg.num_samples));
  const long batches = (cfg.num_samples + cfg.batch_size - 1) / cfg.batch_size;

  parallel_for(static_cast<std::size_t>(batches), cfg.threads, [&](std::size_t b) {
    auto rng = stream_engine(cfg.seed, b);
    std::gamma_distribution<double> chi_square(0.5 * n, 2.0);
    std::normal_distribution<double> normal;
    const long begin = static_cast<long>(b) * cfg.batch_size;
    const long end = std::min(cfg.num_samples, begin + cfg.batch_size);
    for (long s = begin; s < end; ++s) {
      const double scale = std::sqrt(chi_square(rng) / n);
      const double common = sqrt_c * normal(rng);
      double loss = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const double r = sigma[i] * scale * (common + sqrt_1mc * normal(rng));
        if (drift[i] + r < threshold[i]) {
          const auto& ob = pf.obligors()[i];
          loss += pf.weights()[i] * individual_loss(terminal_value(r, ob, h), ob.face_value);
        }
      }
      out.values[static_cast<std::size_t>(s)] = std::clamp(loss, 0.0, 1.0);
    }
  });
  return out;
}

inline std::vector<double> log_spaced_edges(double lo, double hi, int bins) {
  detail::require(lo > 0.0 && hi > lo && bins >= 1, "log_spaced_edges: need 0 < lo < hi, bins >= 1");
  std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (int i = 0; i <= bins; ++i) edges[i] = std::exp(a + (b - a) * i / bins);
  edges.front() = lo;
  edges.back() = hi;
  return edges;
}

inline std::vector<double> linear_edges(double lo, double hi, int bins) {
  detail::require(hi > lo && bins >= 1, "linear_edges: need lo < hi, bins >= 1");
  std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) edges[i] = lo + (hi - lo) * i / bins;
  edges.back() = hi;
  return edges;
}

/// Default binning: 200 log-spaced bins on [1e-5, 1].
inline std::vector<double> default_loss_edges() { return log_spaced_edges(1e-5, 1.0, 200); }

struct EmpiricalDensity {
  std::vector<double> edges;
  std::vector<long> counts;
  std::vector<double> densities;
  std::vector<double> std_errors;
  long total = 0;
  long zero_count = 0;   // samples exactly at L = 0 (the no-default atom)
  long below_range = 0;  // nonzero samples below the first edge
  long above_range = 0;

  double zero_fraction() const { return total ? static_cast<double>(zero_count) / total : 0.0; }
};

/// Bins samples; each bin is half-open [e_i, e_{i+1}) except the last,
/// which includes its right edge. Exact zeros are counted separately.
inline EmpiricalDensity histogram(std::span<const double> samples, std::span<const double> edges) {
  detail::require(!samples.empty(), "histogram: empty sample set");
  detail::require(edges.size() >= 2, "histogram: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    detail::require(edges[i] > edges[i - 1], "histogram: edges must be increasing");
  }
  EmpiricalDensity out;
  out.edges.assign(edges.begin(), edges.end());
  const std::size_t bins = edges.size() - 1;
  out.counts.assign(bins, 0);
  out.total = static_cast<long>(samples.size());
  for (double x : samples) {
    if (x == 0.0 && edges.front() > 0.0) {
      ++out.zero_count;
      continue;
    }
    if (x < edges.front()) {
      ++out.below_range;
      continue;
    }
    if (x > edges.back()) {
      ++out.above_range;
      continue;
    }
    auto it = std::upper_bound(edges.begin(), edges.end(), x);
    std::size_t bin = static_cast<std::size_t>(it - edges.begin());
    bin = bin == 0 ? 0 : std::min(bin - 1, bins - 1);
    ++out.counts[bin];
  }
  out.densities.resize(bins);
  out.std_errors.resize(bins);
  const double n = static_cast<double>(out.total);
  for (std::size_t i = 0; i < bins; ++i) {
    const double width = edges[i + 1] - edges[i];
    out.densities[i] = out.counts[i] / (n * width);
    out.std_errors[i] = std::sqrt(static_cast<double>(out.counts[i])) / (n * width);
  }
  return out;
}

inline EmpiricalDensity histogram(const LossSamples& samples, std::span<const double> edges) {
  return histogram(std::span<const double>(samples.values), edges);
}

struct CompareOptions {
  long min_count = 100;
  double chi2_threshold = 1.5;
  double z_threshold = 4.0;
};

struct ComparisonReport {
  std::vector<std::size_t> bins;  // indices of bins that entered the statistic
  std::vector<double> expected;   // analytic bin-average densities
  std::vector<double> z_scores;
  double chi2_per_dof = 0.0;
  double max_abs_z = 0.0;
  int dof = 0;
  bool pass = false;
};

/// Average of a curve over [lo, hi]. Curves tagged meta["kind"] =
/// "bin_average" already hold bin averages at bin centres; other curves are
/// integrated as piecewise-linear functions.
inline double curve_bin_average(const DensityCurve& curve, double lo, double hi) {
  const auto kind = curve.meta.find("kind");
  if (kind != curve.meta.end() && kind->second == "bin_average") return curve.at(0.5 * (lo + hi));
  const auto& x = curve.abscissae;
  double sum = 0.0;
  double prev_x = lo;
  double prev_y = curve.at(lo);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= lo) continue;
    if (x[i] >= hi) break;
    sum += 0.5 * (prev_y + curve.values[i]) * (x[i] - prev_x);
    prev_x = x[i];
    prev_y = curve.values[i];
  }
  sum += 0.5 * (prev_y + curve.at(hi)) * (hi - prev_x);
  return sum / (hi - lo);
}

/// Per-bin z-scores of the empirical density against the analytic curve,
/// over bins with at least min_count samples that the curve covers.
inline ComparisonReport compare_density(const EmpiricalDensity& emp, const DensityCurve& analytic,
                                        const CompareOptions& opt = {}) {
  detail::require(!analytic.abscissae.empty(), "compare_density: empty analytic curve");
  detail::require(emp.edges.size() >= 2, "compare_density: empty histogram");
  const double a_lo = analytic.abscissae.front();
  const double a_hi = analytic.abscissae.back();
  if (a_hi < emp.edges.front() || a_lo > emp.edges.back()) {
    throw DomainError("compare_density: analytic and empirical supports are disjoint");
  }
  ComparisonReport report;
  double chi2 = 0.0;
  for (std::size_t i = 0; i + 1 < emp.edges.size(); ++i) {
    const double lo = emp.edges[i];
    const double hi = emp.edges[i + 1];
    if (emp.counts[i] < opt.min_count) continue;
    if (lo < a_lo || hi > a_hi) continue;
    const double expected = curve_bin_average(analytic, lo, hi);
    const double z = (emp.densities[i] - expected) / emp.std_errors[i];
    report.bins.push_back(i);
    report.expected.push_back(expected);
    report.z_scores.push_back(z);
    chi2 += z * z;
    report.max_abs_z = std::max(report.max_abs_z, std::abs(z));
  }
  report.dof = static_cast<int>(report.bins.size());
  report.chi2_per_dof = report.dof ? chi2 / report.dof : 0.0;
  report.pass = report.dof > 0 && report.chi2_per_dof < opt.chi2_threshold &&
                report.max_abs_z < opt.z_threshold;
  return report;
}

}  // namespace ensloss
