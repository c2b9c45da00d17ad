#pragma once

#include <cmath>
#include <utility>

#include "ensloss/error.hpp"

namespace ensloss::numerics {

/// Derivative-free root of a function with a sign change on [lo, hi].
///
/// Regula falsi steps are taken while they shrink the bracket quickly;
/// otherwise the step falls back to bisection. Terminates when |f(x)| <= tol
/// or the bracket is narrower than tol. Deterministic.
template <class F>
double bracketed_root(F&& f, double lo, double hi, double tol) {
  ensloss::detail::require(tol > 0.0, "bracketed_root: tol must be > 0");
  if (lo > hi) std::swap(lo, hi);
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0) || std::isnan(flo) || std::isnan(fhi)) {
    throw BracketError("bracketed_root: no sign change on [" + std::to_string(lo) +
                       ", " + std::to_string(hi) + "]");
  }
  double previous_width = hi - lo;
  for (int iter = 0; iter < 400; ++iter) {
    const double width = hi - lo;
    double x = 0.5 * (lo + hi);
    // Secant step only if the last iteration at least halved the bracket.
    if (width <= 0.5 * previous_width || iter == 0) {
      const double s = lo - flo * width / (fhi - flo);
      const double margin = 1e-3 * width;
      if (s > lo + margin && s < hi - margin) x = s;
    }
    if (!(x > lo && x < hi)) break;  // bracket at floating-point resolution
    previous_width = width;
    const double fx = f(x);
    if (std::abs(fx) <= tol) return x;
    if ((fx > 0.0) == (flo > 0.0)) {
      lo = x;
      flo = fx;
    } else {
      hi = x;
      fhi = fx;
    }
    if (hi - lo <= tol) return std::abs(flo) < std::abs(fhi) ? lo : hi;
  }
  return std::abs(flo) < std::abs(fhi) ? lo : hi;
}

/// Grows [lo, hi] geometrically around its midpoint until f changes sign.
template <class F>
std::pair<double, double> expand_bracket(F&& f, double lo, double hi,
                                         int max_steps = 60) {
  double flo = f(lo);
  double fhi = f(hi);
  for (int i = 0; i < max_steps && (flo > 0.0) == (fhi > 0.0); ++i) {
    const double width = hi - lo;
    if (std::abs(flo) < std::abs(fhi)) {
      lo -= width;
      flo = f(lo);
    } else {
      hi += width;
      fhi = f(hi);
    }
  }
  if ((flo > 0.0) == (fhi > 0.0)) {
    throw BracketError("expand_bracket: no sign change found");
  }
  return {lo, hi};
}

}  // namespace ensloss::numerics
