#pragma once

// Special functions: normal distribution helpers, the scaled complementary
// error function and the modified Bessel function of the second kind.

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/policies/policy.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include "ensloss/error.hpp"

namespace ensloss::numerics {

inline double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}

/// Phi(x), accurate in both tails (relative accuracy of erfc).
inline double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// exp(x^2) erfc(x). Overflows to +inf for x below about -26.6.
inline double erfcx(double x) {
  // exp(x^2) with the rounding error of x * x carried separately.
  const double sq = x * x;
  const double exp_sq = std::exp(sq) * (1.0 + std::fma(x, x, -sq));
  if (x < 0.0) return 2.0 * exp_sq - erfcx(-x);
  if (x < 10.0) return exp_sq * std::erfc(x);
  // Laplace continued fraction, converges rapidly for x >= 10.
  double t = x;
  for (int k = 60; k >= 1; --k) t = x + 0.5 * k / t;
  return std::numbers::inv_sqrtpi / t;
}

/// Mills-type ratio Phi(x) / phi(x). Finite for all x <= 0; use the direct
/// form for large positive x where it grows like exp(x^2 / 2).
inline double mills_ratio(double x) {
  constexpr double half_sqrt_2pi = 1.2533141373155002512;  // sqrt(pi/2)
  return half_sqrt_2pi * erfcx(-x / std::numbers::sqrt2);
}

namespace detail {

using bessel_policy = boost::math::policies::policy<
    boost::math::policies::overflow_error<boost::math::policies::ignore_error>,
    boost::math::policies::underflow_error<boost::math::policies::ignore_error>,
    boost::math::policies::domain_error<boost::math::policies::ignore_error>>;

// Debye uniform expansion of log K_nu(nu * t); relative error ~ nu^-4.
inline double log_bessel_k_debye(double nu, double x) {
  const double t = x / nu;
  const double root = std::sqrt(1.0 + t * t);
  const double eta = root + std::log(t / (1.0 + root));
  const double p = 1.0 / root;
  const double p2 = p * p;
  const double u1 = p * (3.0 - 5.0 * p2) / 24.0;
  const double u2 = p2 * (81.0 - 462.0 * p2 + 385.0 * p2 * p2) / 1152.0;
  const double u3 = p * p2 *
                    (30375.0 - 369603.0 * p2 + 765765.0 * p2 * p2 -
                     425425.0 * p2 * p2 * p2) /
                    414720.0;
  const double series = 1.0 - u1 / nu + u2 / (nu * nu) - u3 / (nu * nu * nu);
  return 0.5 * std::log(std::numbers::pi / (2.0 * nu)) - nu * eta -
         0.25 * std::log1p(t * t) + std::log(series);
}

// Hankel large-argument expansion of log K_nu(x), for x >> nu^2.
inline double log_bessel_k_hankel(double nu, double x) {
  const double mu = 4.0 * nu * nu;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 40; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = term * (mu - odd * odd) / (8.0 * k * x);
    if (std::abs(next) >= std::abs(term)) break;
    term = next;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x + std::log(sum);
}

}  // namespace detail

/// Modified Bessel function of the second kind K_nu(x) for real order.
/// Underflows to 0 for large x; throws OverflowError when the value exceeds
/// the double range (small x with large |nu|, e.g. x < 1e-300 at nu = 1).
inline double bessel_k(double nu, double x) {
  if (!(x > 0.0)) throw DomainError("bessel_k: argument must be > 0");
  const double order = std::abs(nu);
  const double v = boost::math::cyl_bessel_k(order, x, detail::bessel_policy{});
  if (std::isinf(v) || v > std::numeric_limits<double>::max()) {
    throw OverflowError("bessel_k: K_nu(x) overflows for nu=" +
                        std::to_string(nu) + ", x=" + std::to_string(x));
  }
  return v;
}

/// log K_nu(x) without overflow or underflow.
inline double log_bessel_k(double nu, double x) {
  if (!(x > 0.0)) throw DomainError("log_bessel_k: argument must be > 0");
  const double order = std::abs(nu);
  const double v = boost::math::cyl_bessel_k(order, x, detail::bessel_policy{});
  if (std::isfinite(v) && v > 1e-290 && v < 1e290) return std::log(v);
  if (order >= 8.0) return detail::log_bessel_k_debye(order, x);
  if (x > 1.0) return detail::log_bessel_k_hankel(order, x);
  // Small-argument leading behaviour.
  if (order == 0.0) return std::log(-std::log(0.5 * x) - std::numbers::egamma);
  return std::lgamma(order) + (order - 1.0) * std::numbers::ln2 - order * std::log(x);
}

}  // namespace ensloss::numerics
