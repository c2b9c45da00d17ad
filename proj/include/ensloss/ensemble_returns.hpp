#pragma once

// Ensemble-averaged return distributions. Correlation matrices fluctuate
// around a mean C following a Wishart law with N "model time steps"; the
// resulting return density is a Bessel-K function of r^T Sigma^{-1} r.
// Every density here has an equivalent compound representation,
//   r | z ~ Normal(0, (z / N) Sigma),  z ~ chi-square(N),
// which is what the samplers draw from. N may be any real > 0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ensloss/error.hpp"
#include "ensloss/numerics/adaptive.hpp"
#include "ensloss/numerics/special.hpp"
#include "ensloss/parallel.hpp"
#include "ensloss/random.hpp"

namespace ensloss {

/// Mean pairwise correlation c and fluctuation strength N.
struct EnsembleParams {
  double c = 0.0;
  double n_eff = 0.0;

  void validate() const {
    detail::require(c >= 0.0 && c < 1.0, "EnsembleParams: c must lie in [0, 1)");
    detail::require(n_eff > 2.0, "EnsembleParams: N must be > 2");
  }
};

/// Tag for the one-factor correlation matrix (1 - c) I + c e e^T.
struct OneFactorCorrelation {
  double c = 0.0;
};

/// Covariance Sigma = diag(vols) C diag(vols).
struct CovarianceSpec {
  std::vector<double> vols;
  std::variant<Eigen::MatrixXd, OneFactorCorrelation> correlation;

  static CovarianceSpec one_factor(std::vector<double> vols, double c) {
    return {std::move(vols), OneFactorCorrelation{c}};
  }
  static CovarianceSpec full(std::vector<double> vols, Eigen::MatrixXd corr) {
    return {std::move(vols), std::move(corr)};
  }

  int dimension() const { return static_cast<int>(vols.size()); }

  bool is_one_factor() const {
    return std::holds_alternative<OneFactorCorrelation>(correlation);
  }

  Eigen::MatrixXd correlation_matrix() const {
    const int k = dimension();
    if (const auto* f = std::get_if<OneFactorCorrelation>(&correlation)) {
      Eigen::MatrixXd m = Eigen::MatrixXd::Constant(k, k, f->c);
      m.diagonal().setOnes();
      return m;
    }
    return std::get<Eigen::MatrixXd>(correlation);
  }

  Eigen::MatrixXd covariance() const {
    const Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(vols.data(), dimension());
    return s.asDiagonal() * correlation_matrix() * s.asDiagonal();
  }

  void validate() const {
    detail::require(!vols.empty(), "CovarianceSpec: at least one volatility required");
    for (double v : vols) detail::require(v > 0.0, "CovarianceSpec: volatilities must be > 0");
    if (const auto* f = std::get_if<OneFactorCorrelation>(&correlation)) {
      detail::require(f->c >= 0.0 && f->c < 1.0, "CovarianceSpec: one-factor c must lie in [0, 1)");
      return;
    }
    const auto& m = std::get<Eigen::MatrixXd>(correlation);
    detail::require(m.rows() == dimension() && m.cols() == dimension(),
                    "CovarianceSpec: correlation matrix has wrong shape");
    for (int i = 0; i < m.rows(); ++i) {
      detail::require(std::abs(m(i, i) - 1.0) < 1e-12, "CovarianceSpec: diagonal of C must be 1");
      for (int j = 0; j < m.cols(); ++j) {
        detail::require(std::abs(m(i, j) - m(j, i)) < 1e-10, "CovarianceSpec: C not symmetric");
        detail::require(std::abs(m(i, j)) <= 1.0, "CovarianceSpec: |C_kl| must be <= 1");
      }
    }
  }
};

/// A sampled density with free-form metadata.
struct DensityCurve {
  std::vector<double> abscissae;
  std::vector<double> values;
  std::map<std::string, std::string> meta;

  double trapezoid_mass() const {
    double sum = 0.0;
    for (std::size_t i = 1; i < abscissae.size(); ++i) {
      sum += 0.5 * (values[i] + values[i - 1]) * (abscissae[i] - abscissae[i - 1]);
    }
    return sum;
  }

  /// Linear interpolation; zero outside the sampled range.
  double at(double x) const {
    if (abscissae.empty() || x < abscissae.front() || x > abscissae.back()) return 0.0;
    const auto it = std::lower_bound(abscissae.begin(), abscissae.end(), x);
    const auto i = static_cast<std::size_t>(it - abscissae.begin());
    if (abscissae[i] == x) return values[i];
    const double t = (x - abscissae[i - 1]) / (abscissae[i] - abscissae[i - 1]);
    return values[i - 1] + t * (values[i] - values[i - 1]);
  }
};

namespace detail {

struct Whitened {
  double quadratic_form;  // r^T Sigma^{-1} r
  double log_det;         // log det Sigma
};

inline Whitened whiten(std::span<const double> r, const CovarianceSpec& cov) {
  cov.validate();
  require(static_cast<int>(r.size()) == cov.dimension(),
          "density: point dimension does not match covariance");
  const Eigen::LLT<Eigen::MatrixXd> llt(cov.covariance());
  if (llt.info() != Eigen::Success) throw DomainError("density: covariance is singular");
  const Eigen::MatrixXd& l = llt.matrixL();
  double log_det = 0.0;
  for (int i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) throw DomainError("density: covariance is singular");
    log_det += 2.0 * std::log(l(i, i));
  }
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(r.data(), cov.dimension());
  const Eigen::VectorXd y = llt.matrixL().solve(x);
  return {y.squaredNorm(), log_det};
}

}  // namespace detail

/// Multivariate normal density at r.
inline double gaussian_density(std::span<const double> r, const CovarianceSpec& cov) {
  const auto w = detail::whiten(r, cov);
  const double k = cov.dimension();
  return std::exp(-0.5 * w.quadratic_form - 0.5 * w.log_det -
                  0.5 * k * std::log(2.0 * std::numbers::pi));
}

/// log of the ensemble-averaged density as a function of the quadratic form
/// q = r^T Sigma^{-1} r, the dimension K and log det Sigma.
inline double log_averaged_density_q(double q, int dim, double log_det, double n_eff) {
  detail::require(n_eff > 0.0, "averaged_density: N must be > 0");
  const double k = dim;
  const double nu = 0.5 * (k - n_eff);
  const double prefactor = 0.5 * k * std::log(n_eff) - 0.5 * (n_eff - 2.0) * std::numbers::ln2 -
                           std::lgamma(0.5 * n_eff) - 0.5 * log_det -
                           0.5 * k * std::log(2.0 * std::numbers::pi);
  if (q <= 0.0) {
    // x^{-nu} K_nu(x) -> Gamma(|nu|) 2^{|nu|-1} as x -> 0 when nu < 0.
    if (nu >= 0.0) {
      throw DomainError("averaged_density: density diverges at r = 0 when K >= N");
    }
    const double a = -nu;
    return prefactor + std::lgamma(a) + (a - 1.0) * std::numbers::ln2;
  }
  const double x = std::sqrt(n_eff * q);
  return prefactor + numerics::log_bessel_k(nu, x) - nu * std::log(x);
}

/// Ensemble-averaged return density <g>(r | Sigma, N).
inline double averaged_density(std::span<const double> r, const CovarianceSpec& cov,
                               double n_eff) {
  const auto w = detail::whiten(r, cov);
  return std::exp(log_averaged_density_q(w.quadratic_form, cov.dimension(), w.log_det, n_eff));
}

/// Density of one rotated and rescaled return (unit variance for N > 2).
inline double univariate_rescaled_density(double r_tilde, double n_eff) {
  detail::require(n_eff > 0.0, "univariate_rescaled_density: N must be > 0");
  if (r_tilde == 0.0) {
    detail::require(n_eff > 1.0, "univariate_rescaled_density: diverges at 0 for N <= 1");
    // sqrt(N) Gamma((N-1)/2) / (2 sqrt(pi) Gamma(N/2))
    return std::exp(0.5 * std::log(n_eff) + std::lgamma(0.5 * (n_eff - 1.0)) -
                    std::numbers::ln2 - 0.5 * std::log(std::numbers::pi) -
                    std::lgamma(0.5 * n_eff));
  }
  const double x = std::sqrt(n_eff) * std::abs(r_tilde);
  const double nu = 0.5 * (n_eff - 1.0);
  const double log_value = 0.5 * (1.0 - n_eff) * std::numbers::ln2 + 0.5 * std::log(n_eff) -
                           0.5 * std::log(std::numbers::pi) - std::lgamma(0.5 * n_eff) +
                           nu * std::log(x) + numerics::log_bessel_k(nu, x);
  return std::exp(log_value);
}

struct OneFactorQuadrature {
  double rel_tol = 1e-11;
  int max_intervals = 2000;
};

/// One-factor averaged density evaluated from its (z, u) integral
/// representation: u ~ Normal(0, 1/N) is the common factor and z the
/// chi-square mixing variable. The u-integrand is Gaussian and is integrated
/// exactly; the z-integral is adaptive Gauss-Kronrod in ln z.
inline double averaged_density_onefactor(std::span<const double> r, std::span<const double> vols,
                                         const EnsembleParams& params,
                                         const OneFactorQuadrature& quad = {}) {
  params.validate();
  detail::require(r.size() == vols.size() && !r.empty(),
                  "averaged_density_onefactor: r and vols must have equal nonzero length");
  for (double v : vols) detail::require(v > 0.0, "averaged_density_onefactor: vols must be > 0");
  const double n = params.n_eff;
  const double c = params.c;
  const double k = static_cast<double>(r.size());
  double log_sigma = 0.0;
  double sum_a = 0.0;
  for (std::size_t m = 0; m < r.size(); ++m) {
    log_sigma += std::log(vols[m]);
    sum_a += r[m] / vols[m];
  }
  const double log_norm_u = 0.5 * std::log(n / (2.0 * std::numbers::pi));
  const double log_norm_z = -0.5 * n * std::numbers::ln2 - std::lgamma(0.5 * n);
  // curvature of the u-exponent does not depend on z
  const double curv = 0.5 * n + 0.5 * n * k * c / (1.0 - c);

  auto per_z = [&](double t) {
    const double z = std::exp(t);
    const double b = std::sqrt(c * z);
    const double scale = n / (2.0 * z * (1.0 - c));
    auto exponent = [&](double u) {
      double e = -0.5 * n * u * u;
      for (std::size_t m = 0; m < r.size(); ++m) {
        const double d = r[m] / vols[m] + b * u;
        e -= scale * d * d;
      }
      return e;
    };
    const double centre = -scale * b * sum_a / curv;
    // exponent(u) = exponent(centre) - curv (u - centre)^2
    const double log_inner = exponent(centre) + 0.5 * std::log(std::numbers::pi / curv);
    const double log_chi2 = log_norm_z + (0.5 * n - 1.0) * t - 0.5 * z;
    const double log_pref = 0.5 * k * std::log(scale / std::numbers::pi) - log_sigma + log_norm_u;
    return std::exp(log_chi2 + t + log_pref + log_inner);
  };
  std::vector<double> breaks;
  for (double t = -60.0; t < std::log(2.0 * n + 400.0); t += 2.0) breaks.push_back(t);
  breaks.push_back(std::log(2.0 * n + 400.0));
  const auto res = numerics::integrate_adaptive(per_z, breaks, quad.rel_tol, 0.0, quad.max_intervals);
  if (!(res.error <= 1e3 * quad.rel_tol * std::abs(res.value))) {
    throw QuadratureError("averaged_density_onefactor", res.value - res.error, res.value);
  }
  return res.value;
}

/// Draws `count` i.i.d. return vectors (rows) from the ensemble-averaged
/// density. One-factor covariances use the O(K) factor construction; full
/// covariances use a Cholesky factor. Rows are produced in fixed batches,
/// each from its own (seed, batch) stream, so output is thread-independent.
inline Eigen::MatrixXd sample_returns(const CovarianceSpec& cov, double n_eff, long count,
                                      std::uint64_t seed, int threads = 1) {
  cov.validate();
  detail::require(n_eff > 0.0, "sample_returns: N must be > 0");
  detail::require(count >= 1, "sample_returns: count must be >= 1");
  constexpr long batch = 4096;
  const int k = cov.dimension();
  Eigen::MatrixXd out(count, k);
  const long batches = (count + batch - 1) / batch;

  const auto* one = std::get_if<OneFactorCorrelation>(&cov.correlation);
  Eigen::MatrixXd chol;
  if (!one) {
    const Eigen::LLT<Eigen::MatrixXd> llt(cov.covariance());
    if (llt.info() != Eigen::Success) throw DomainError("sample_returns: covariance is singular");
    chol = llt.matrixL();
  }
  parallel_for(static_cast<std::size_t>(batches), threads, [&](std::size_t b) {
    auto rng = stream_engine(seed, b);
    std::gamma_distribution<double> gamma(0.5 * n_eff, 2.0);
    std::normal_distribution<double> normal;
    const long begin = static_cast<long>(b) * batch;
    const long end = std::min(count, begin + batch);
    Eigen::VectorXd xi(k);
    for (long row = begin; row < end; ++row) {
      const double scale = std::sqrt(gamma(rng) / n_eff);
      if (one) {
        const double common = std::sqrt(one->c) * normal(rng);
        const double idio = std::sqrt(1.0 - one->c);
        for (int m = 0; m < k; ++m) {
          out(row, m) = cov.vols[m] * scale * (common + idio * normal(rng));
        }
      } else {
        for (int m = 0; m < k; ++m) xi[m] = normal(rng);
        out.row(row) = (scale * (chol * xi)).transpose();
      }
    }
  });
  return out;
}

}  // namespace ensloss
