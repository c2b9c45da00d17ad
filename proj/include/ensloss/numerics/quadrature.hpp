#pragma once

// Gauss rules for the two weights that appear in the ensemble loss
// integrals: generalized Laguerre t^alpha e^{-t} on (0, inf) and the scaled
// Gaussian e^{-scale u^2} on the real line.
//
// Nodes come from the Golub-Welsch eigenvalue problem, are polished by
// Newton iteration on the orthonormal recurrence and the weights are
// evaluated from the Christoffel function, all in long double.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ensloss/error.hpp"

namespace ensloss::numerics {

enum class RuleKind { generalized_laguerre, hermite_scaled };

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  RuleKind kind = RuleKind::generalized_laguerre;
  double parameter = 0.0;  // alpha for Laguerre, scale for Hermite
  int order = 0;

  template <class F>
  double integrate(F&& f) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) sum += weights[i] * f(nodes[i]);
    return sum;
  }
};

namespace detail {

// Monic three-term recurrence p_{k+1} = (x - a_k) p_k - b_k p_{k-1},
// with b_0 = integral of the weight.
struct Recurrence {
  std::vector<long double> a;
  std::vector<long double> b;
};

inline QuadratureRule gauss_from_recurrence(const Recurrence& rec, int n,
                                            RuleKind kind, double parameter) {
  Eigen::VectorXd diag(n);
  Eigen::VectorXd sub(std::max(n - 1, 1));
  for (int k = 0; k < n; ++k) diag[k] = static_cast<double>(rec.a[k]);
  for (int k = 1; k < n; ++k) sub[k - 1] = static_cast<double>(std::sqrt(rec.b[k]));

  std::vector<long double> x(n);
  if (n == 1) {
    x[0] = rec.a[0];
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub.head(n - 1), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
      throw NumericalError("quadrature: Jacobi matrix eigenvalues did not converge");
    }
    for (int k = 0; k < n; ++k) x[k] = solver.eigenvalues()[k];
  }

  // Orthonormal polynomials q_k and the derivative of q_n.
  auto evaluate = [&](long double t, long double& qn, long double& dqn,
                      long double& christoffel) {
    long double q_prev = 0.0L;
    long double q = 1.0L / std::sqrt(rec.b[0]);
    long double d_prev = 0.0L;
    long double d = 0.0L;
    christoffel = q * q;
    for (int k = 0; k < n; ++k) {
      const long double s_next = std::sqrt(rec.b[k + 1]);
      const long double s_cur = k == 0 ? 0.0L : std::sqrt(rec.b[k]);
      const long double q_next = ((t - rec.a[k]) * q - s_cur * q_prev) / s_next;
      const long double d_next = (q + (t - rec.a[k]) * d - s_cur * d_prev) / s_next;
      q_prev = q;
      q = q_next;
      d_prev = d;
      d = d_next;
      if (k + 1 < n) christoffel += q * q;
    }
    qn = q;
    dqn = d;
  };

  QuadratureRule rule;
  rule.kind = kind;
  rule.parameter = parameter;
  rule.order = n;
  rule.nodes.reserve(n);
  rule.weights.reserve(n);
  for (int i = 0; i < n; ++i) {
    long double t = x[i];
    long double qn = 0, dqn = 0, ch = 0;
    for (int it = 0; it < 8; ++it) {
      evaluate(t, qn, dqn, ch);
      if (dqn == 0.0L || !std::isfinite(static_cast<double>(qn / dqn))) break;
      const long double step = qn / dqn;
      t -= step;
      if (std::abs(step) <= 1e-18L * std::max(1.0L, std::abs(t))) break;
    }
    evaluate(t, qn, dqn, ch);
    const double w = static_cast<double>(1.0L / ch);
    if (!std::isfinite(static_cast<double>(t)) || !(ch > 0.0L)) {
      throw NumericalError("quadrature: node refinement failed at order " +
                           std::to_string(n));
    }
    // Nodes whose weight underflows contribute nothing and are omitted.
    if (w > 0.0) {
      rule.nodes.push_back(static_cast<double>(t));
      rule.weights.push_back(w);
    }
  }
  for (std::size_t i = 1; i < rule.nodes.size(); ++i) {
    if (!(rule.nodes[i] > rule.nodes[i - 1])) {
      throw NumericalError("quadrature: nodes not separated at order " +
                           std::to_string(n));
    }
  }
  return rule;
}

}  // namespace detail

/// Gauss rule of order n for the weight t^alpha e^{-t} on (0, inf).
inline QuadratureRule gauss_laguerre(double alpha, int n) {
  ensloss::detail::require(alpha > -1.0, "gauss_laguerre: alpha must be > -1");
  ensloss::detail::require(n >= 1, "gauss_laguerre: order must be >= 1");
  detail::Recurrence rec;
  rec.a.resize(n);
  rec.b.resize(n + 1);
  const long double al = alpha;
  rec.b[0] = std::tgamma(al + 1.0L);
  for (int k = 0; k < n; ++k) rec.a[k] = 2.0L * k + al + 1.0L;
  for (int k = 1; k <= n; ++k) rec.b[k] = static_cast<long double>(k) * (k + al);
  return detail::gauss_from_recurrence(rec, n, RuleKind::generalized_laguerre, alpha);
}

/// Gauss rule of order n for the weight e^{-scale u^2} on the real line.
inline QuadratureRule gauss_hermite_scaled(double scale, int n) {
  ensloss::detail::require(scale > 0.0, "gauss_hermite_scaled: scale must be > 0");
  ensloss::detail::require(n >= 1, "gauss_hermite_scaled: order must be >= 1");
  detail::Recurrence rec;
  rec.a.assign(n, 0.0L);
  rec.b.resize(n + 1);
  const long double s = scale;
  rec.b[0] = std::sqrt(std::numbers::pi_v<long double> / s);
  for (int k = 1; k <= n; ++k) rec.b[k] = static_cast<long double>(k) / (2.0L * s);
  return detail::gauss_from_recurrence(rec, n, RuleKind::hermite_scaled, scale);
}

struct DoublingOptions {
  int initial_order = 64;
  int max_order = 1024;
  double rel_tol = 1e-8;
  double abs_tol = 0.0;
};

/// Runs `estimate(order)` at successively doubled orders until two
/// consecutive estimates agree to rel_tol (or abs_tol); returns the last.
template <class Estimate>
double integrate_doubling(Estimate&& estimate, const DoublingOptions& opt,
                          const char* what) {
  double previous = estimate(opt.initial_order);
  if (2 * opt.initial_order > opt.max_order) return previous;
  for (int n = 2 * opt.initial_order; n <= opt.max_order; n *= 2) {
    const double current = estimate(n);
    const double diff = std::abs(current - previous);
    if (diff <= opt.rel_tol * std::abs(current) || diff <= opt.abs_tol) return current;
    if (2 * n > opt.max_order) throw QuadratureError(what, previous, current);
    previous = current;
  }
  throw QuadratureError(what, previous, previous);
}

}  // namespace ensloss::numerics
