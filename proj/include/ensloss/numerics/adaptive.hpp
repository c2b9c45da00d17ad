#pragma once

#include <algorithm>
#include <cmath>
#include <queue>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace ensloss::numerics {

struct AdaptiveResult {
  double value = 0.0;
  double error = 0.0;
  int intervals = 0;
};

/// Globally adaptive 15-point Gauss-Kronrod over the partition given by
/// `breaks` (sorted, at least two points). The interval with the largest
/// error estimate is bisected until the summed error is below
/// max(abs_tol, rel_tol * |value|) or max_intervals is reached.
template <class F>
AdaptiveResult integrate_adaptive(F&& f, std::span<const double> breaks, double rel_tol,
                                  double abs_tol, int max_intervals = 400) {
  using gk = boost::math::quadrature::gauss_kronrod<double, 15>;
  static const auto& x = gk::abscissa();
  static const auto& wk = gk::weights();
  static const auto& wg = boost::math::quadrature::gauss<double, 7>::weights();

  struct Piece {
    double a, b, value, error;
    bool operator<(const Piece& o) const { return error < o.error; }
  };
  auto rule = [&](double a, double b) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double f0 = f(mid);
    double kron = wk[0] * f0;
    double gauss = wg[0] * f0;
    for (std::size_t i = 1; i < x.size(); ++i) {
      const double s = f(mid - half * x[i]) + f(mid + half * x[i]);
      kron += wk[i] * s;
      if (i % 2 == 0) gauss += wg[i / 2] * s;
    }
    return Piece{a, b, kron * half, std::abs((kron - gauss) * half)};
  };

  std::priority_queue<Piece> queue;
  AdaptiveResult out;
  for (std::size_t i = 1; i < breaks.size(); ++i) {
    if (!(breaks[i] > breaks[i - 1])) continue;
    const Piece p = rule(breaks[i - 1], breaks[i]);
    out.value += p.value;
    out.error += p.error;
    queue.push(p);
  }
  out.intervals = static_cast<int>(queue.size());
  while (!queue.empty() && out.intervals < max_intervals &&
         out.error > std::max(abs_tol, rel_tol * std::abs(out.value))) {
    const Piece worst = queue.top();
    queue.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) break;
    const Piece left = rule(worst.a, mid);
    const Piece right = rule(mid, worst.b);
    out.value += left.value + right.value - worst.value;
    out.error += left.error + right.error - worst.error;
    queue.push(left);
    queue.push(right);
    ++out.intervals;
  }
  // Re-sum to remove drift from the incremental updates.
  double value = 0.0;
  double error = 0.0;
  while (!queue.empty()) {
    value += queue.top().value;
    error += queue.top().error;
    queue.pop();
  }
  out.value = value;
  out.error = error;
  return out;
}

}  // namespace ensloss::numerics
