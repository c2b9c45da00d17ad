#pragma once

// Merton-model credit portfolio losses under ensemble-averaged returns.
//
// Conditional on the chi-square mixing variable z and the common factor u,
// the log terminal value of obligor k is Gaussian and the default loss
// 1 - V_k(T) / F_k (for V_k(T) < F_k) has first and second moments in
// closed form. The finite-K density averages a Gaussian kernel with those
// moments over (z, u); the K -> infinity limit collapses the kernel onto the
// curve M1(z, u) = L.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ensloss/ensemble_returns.hpp"
#include "ensloss/error.hpp"
#include "ensloss/numerics/adaptive.hpp"
#include "ensloss/numerics/quadrature.hpp"
#include "ensloss/numerics/roots.hpp"
#include "ensloss/numerics/special.hpp"
#include "ensloss/parallel.hpp"

namespace ensloss {

struct Obligor {
  double face_value = 0.0;     // F_k
  double initial_value = 0.0;  // V_k(0)
  double drift = 0.0;          // mu_k, per horizon unit
  double vol = 0.0;            // rho_k, per sqrt(horizon unit)

  void validate() const {
    detail::require(face_value > 0.0, "Obligor: face value must be > 0");
    detail::require(initial_value > 0.0, "Obligor: initial value must be > 0");
    detail::require(vol > 0.0, "Obligor: volatility must be > 0");
    detail::require(std::isfinite(drift), "Obligor: drift must be finite");
  }

  bool operator==(const Obligor&) const = default;
};

/// Maturity in horizon units (months, years, ...), matching drift/vol units.
struct Horizon {
  double T = 1.0;
  std::string unit = "month";

  void validate() const { detail::require(T > 0.0, "Horizon: T must be > 0"); }
};

/// All obligors share F0, V0, mu0, rho0. An empty K denotes the K -> inf limit.
struct HomogeneousSpec {
  double F0 = 75.0;
  double V0 = 100.0;
  double mu0 = 0.0;
  double rho0 = 0.0;
  std::optional<long> K;

  Obligor obligor() const { return {F0, V0, mu0, rho0}; }
  bool infinite() const { return !K.has_value(); }
};

class Portfolio {
 public:
  explicit Portfolio(std::vector<Obligor> obligors) : obligors_(std::move(obligors)) {
    detail::require(!obligors_.empty(), "Portfolio: at least one obligor required");
    double total = 0.0;
    for (const auto& ob : obligors_) {
      ob.validate();
      total += ob.face_value;
    }
    weights_.reserve(obligors_.size());
    for (const auto& ob : obligors_) weights_.push_back(ob.face_value / total);
  }

  static Portfolio homogeneous(const Obligor& ob, long k) {
    detail::require(k >= 1, "Portfolio: K must be >= 1");
    return Portfolio(std::vector<Obligor>(static_cast<std::size_t>(k), ob));
  }

  const std::vector<Obligor>& obligors() const { return obligors_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return obligors_.size(); }

 private:
  std::vector<Obligor> obligors_;
  std::vector<double> weights_;
};

/// Normalised loss of one contract: (F - V) / F if V < F, else 0.
inline double individual_loss(double v_terminal, double face) {
  detail::require(face > 0.0, "individual_loss: face value must be > 0");
  detail::require(v_terminal >= 0.0, "individual_loss: terminal value must be >= 0");
  return v_terminal < face ? (face - v_terminal) / face : 0.0;
}

inline double portfolio_loss(std::span<const double> losses, std::span<const double> weights) {
  detail::require(losses.size() == weights.size(), "portfolio_loss: length mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < losses.size(); ++k) total += weights[k] * losses[k];
  return total;
}

/// V(T) = V0 exp(r + (mu - rho^2 / 2) T).
inline double terminal_value(double r, const Obligor& ob, const Horizon& h) {
  return ob.initial_value * std::exp(r + (ob.drift - 0.5 * ob.vol * ob.vol) * h.T);
}

/// Inverse of terminal_value.
inline double return_from_terminal_value(double v_terminal, const Obligor& ob, const Horizon& h) {
  return std::log(v_terminal / ob.initial_value) - (ob.drift - 0.5 * ob.vol * ob.vol) * h.T;
}

struct ConditionalMoments {
  double m1 = 0.0;      // E[loss | z, u]
  double m2 = 0.0;      // E[loss^2 | z, u]
  double dm1_du = 0.0;  // d m1 / du
};

/// Per-obligor constants of the conditional moment closed form.
///
/// With s = sqrt(z), the log-value Y = ln(V(T)/V0) is Normal(mean, sd) with
///   mean = (mu - rho^2/2) T - s sqrt(c T) rho u,   sd = s rho sqrt(T (1-c) / N),
/// default happens for Y < d = ln(F / V0) and the loss is 1 - exp(Y - d).
/// With h = (d - mean) / sd and R(x) = Phi(x) / phi(x):
///   m1 = phi(h) [R(h) - R(h - sd)]
///   m2 = phi(h) [R(h) - 2 R(h - sd) + R(h - 2 sd)]
///   dm1/dmean = -phi(h) R(h - sd)
class MomentTerms {
 public:
  MomentTerms(const Obligor& ob, const EnsembleParams& params, const Horizon& h) {
    ob.validate();
    params.validate();
    h.validate();
    drift_ = (ob.drift - 0.5 * ob.vol * ob.vol) * h.T;
    threshold_ = std::log(ob.face_value / ob.initial_value);
    sd_unit_ = ob.vol * std::sqrt(h.T * (1.0 - params.c) / params.n_eff);
    loading_ = std::sqrt(params.c * h.T) * ob.vol;
  }

  ConditionalMoments operator()(double z, double u) const {
    const double s = std::sqrt(z);
    const double sd = s * sd_unit_;
    const double mean = drift_ - s * loading_ * u;
    const double h = (threshold_ - mean) / sd;
    ConditionalMoments out;
    double tail1 = 0.0;  // E[exp(Y - d); Y < d]
    if (h < -3.0 && sd < 0.05 * -h) {
      // Far from default the differences of R cancel. Use
      //   m_j = phi(h) / a * int_0^inf e^{-t} (1 - e^{-sd t / a})^j e^{-(t/a)^2 / 2} dt,  a = -h.
      const double a = -h;
      double s1 = 0.0;
      double s2 = 0.0;
      const auto& rule = tail_rule();
      for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double t = rule.nodes[i] / a;
        const double g = -std::expm1(-sd * t);
        const double w = rule.weights[i] * std::exp(-0.5 * t * t);
        s1 += w * g;
        s2 += w * g * g;
      }
      const double ph = numerics::std_normal_pdf(h);
      out.m1 = ph * s1 / a;
      out.m2 = ph * s2 / a;
      tail1 = ph * numerics::mills_ratio(h - sd);
    } else if (h <= 0.0) {
      const double ph = numerics::std_normal_pdf(h);
      const double r0 = numerics::mills_ratio(h);
      const double r1 = numerics::mills_ratio(h - sd);
      const double r2 = numerics::mills_ratio(h - 2.0 * sd);
      out.m1 = ph * (r0 - r1);
      out.m2 = ph * (r0 - 2.0 * r1 + r2);
      tail1 = ph * r1;
    } else {
      const double p0 = numerics::std_normal_cdf(h);
      tail1 = std::exp(0.5 * sd * sd - sd * h) * numerics::std_normal_cdf(h - sd);
      const double tail2 = std::exp(2.0 * sd * sd - 2.0 * sd * h) * numerics::std_normal_cdf(h - 2.0 * sd);
      out.m1 = p0 - tail1;
      out.m2 = p0 - 2.0 * tail1 + tail2;
    }
    out.m1 = std::clamp(out.m1, 0.0, 1.0);
    out.m2 = std::clamp(out.m2, 0.0, out.m1);
    out.dm1_du = s * loading_ * tail1;
    return out;
  }

 private:
  static const numerics::QuadratureRule& tail_rule() {
    static const numerics::QuadratureRule rule = numerics::gauss_laguerre(0.0, 40);
    return rule;
  }

  double drift_ = 0.0;
  double threshold_ = 0.0;
  double sd_unit_ = 0.0;
  double loading_ = 0.0;
};

/// m_jk(z, u) for j = 1, 2.
inline double moment_mjk(int j, double z, double u, const Obligor& ob,
                         const EnsembleParams& params, const Horizon& h) {
  detail::require(j == 1 || j == 2, "moment_mjk: order must be 1 or 2");
  detail::require(z > 0.0, "moment_mjk: z must be > 0");
  const auto m = MomentTerms(ob, params, h)(z, u);
  return j == 1 ? m.m1 : m.m2;
}

/// Analytic d m_1k / du.
inline double moment_m1_du(double z, double u, const Obligor& ob, const EnsembleParams& params,
                           const Horizon& h) {
  detail::require(z > 0.0, "moment_m1_du: z must be > 0");
  return MomentTerms(ob, params, h)(z, u).dm1_du;
}

struct AggregateMoments {
  double M1 = 0.0;
  double M2 = 0.0;
  double dM1_du = 0.0;
};

namespace detail {

inline double checked_variance(double m2) {
  if (m2 < -1e-14) {
    throw NumericalError("aggregate_moments: negative conditional variance " + std::to_string(m2));
  }
  return std::max(m2, 0.0);
}

// Obligors with identical parameters share one MomentTerms evaluation.
struct ObligorGroup {
  MomentTerms terms;
  double weight;     // sum of f_k
  double weight_sq;  // sum of f_k^2
};

inline std::vector<ObligorGroup> group_obligors(const Portfolio& pf, const EnsembleParams& params,
                                                const Horizon& h) {
  std::vector<Obligor> keys;
  std::vector<ObligorGroup> groups;
  for (std::size_t k = 0; k < pf.size(); ++k) {
    const auto& ob = pf.obligors()[k];
    const double f = pf.weights()[k];
    const auto it = std::find(keys.begin(), keys.end(), ob);
    if (it == keys.end()) {
      keys.push_back(ob);
      groups.push_back({MomentTerms(ob, params, h), f, f * f});
    } else {
      auto& g = groups[static_cast<std::size_t>(it - keys.begin())];
      g.weight += f;
      g.weight_sq += f * f;
    }
  }
  return groups;
}

inline AggregateMoments aggregate(std::span<const ObligorGroup> groups, double z, double u) {
  AggregateMoments out;
  double m2 = 0.0;
  for (const auto& g : groups) {
    const auto m = g.terms(z, u);
    out.M1 += g.weight * m.m1;
    m2 += g.weight_sq * (m.m2 - m.m1 * m.m1);
    out.dM1_du += g.weight * m.dm1_du;
  }
  out.M2 = checked_variance(m2);
  return out;
}

}  // namespace detail

/// M1 = sum f_k m_1k, M2 = sum f_k^2 (m_2k - m_1k^2).
inline AggregateMoments aggregate_moments(double z, double u, const Portfolio& pf,
                                          const EnsembleParams& params, const Horizon& h) {
  detail::require(z > 0.0, "aggregate_moments: z must be > 0");
  const auto groups = detail::group_obligors(pf, params, h);
  return detail::aggregate(groups, z, u);
}

struct LossQuadrature {
  numerics::DoublingOptions z{64, 4096, 1e-8, 1e-13};
  double u_rel_tol = 1e-10;
  int u_max_intervals = 600;
};

namespace detail {

// Gauss-Laguerre rules are built on first use and shared by all instances.
inline const numerics::QuadratureRule& cached_laguerre(double alpha, int order) {
  static std::mutex mutex;
  static std::map<std::pair<double, int>, std::unique_ptr<const numerics::QuadratureRule>> cache;
  const std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{alpha, order}];
  if (!slot) slot = std::make_unique<const numerics::QuadratureRule>(numerics::gauss_laguerre(alpha, order));
  return *slot;
}

// Sum over z nodes of rule(order) with the chi-square(N) normalisation.
template <class PerZ>
double chi_square_average(const numerics::DoublingOptions& opt, double n_eff, PerZ&& per_z,
                          const char* what) {
  const double norm = std::exp(-std::lgamma(0.5 * n_eff));
  auto estimate = [&](int order) {
    const auto& rule = cached_laguerre(0.5 * n_eff - 1.0, order);
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) sum += rule.weights[i] * per_z(2.0 * rule.nodes[i]);
    return sum * norm;
  };
  return numerics::integrate_doubling(estimate, opt, what);
}

inline double normal_interval_mass(double lo, double hi) {
  // Phi(hi) - Phi(lo), evaluated on the side where it does not cancel.
  if (lo > 0.0) return numerics::std_normal_cdf(-lo) - numerics::std_normal_cdf(-hi);
  return numerics::std_normal_cdf(hi) - numerics::std_normal_cdf(lo);
}

}  // namespace detail

namespace detail {

template <class Mass>
DensityCurve bin_average_curve(std::span<const double> edges, int threads, Mass&& mass) {
  ensloss::detail::require(edges.size() >= 2, "bin_average_curve: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    ensloss::detail::require(edges[i] > edges[i - 1], "bin_average_curve: edges must increase");
  }
  DensityCurve out;
  const std::size_t bins = edges.size() - 1;
  out.abscissae.resize(bins);
  out.values.assign(bins, 0.0);
  for (std::size_t i = 0; i < bins; ++i) out.abscissae[i] = 0.5 * (edges[i] + edges[i + 1]);
  parallel_for(bins, threads, [&](std::size_t i) {
    out.values[i] = mass(edges[i], edges[i + 1]) / (edges[i + 1] - edges[i]);
  });
  out.meta["kind"] = "bin_average";
  return out;
}

}  // namespace detail

/// Averaged loss distribution of a finite portfolio, second order in 1/K.
///
/// density(L) integrates the Gaussian kernel N(L; M1, M2) against the
/// chi-square(N) law of z (generalized Gauss-Laguerre with order doubling)
/// and the Normal(0, 1/N) law of u (adaptive Gauss-Kronrod with breakpoints
/// around the kernel peak, whose width shrinks like 1/sqrt(K)).
/// mass(lo, hi) is the exact L-integral of density over [lo, hi].
/// The kernel is not truncated to [0, 1].
class LossDistribution {
 public:
  LossDistribution(const Portfolio& pf, const EnsembleParams& params, const Horizon& h,
                   const LossQuadrature& quad = {})
      : params_(params),
        quad_(quad),
        groups_(detail::group_obligors(pf, params, h)) {}

  LossDistribution(const Obligor& ob, long k, const EnsembleParams& params, const Horizon& h,
                   const LossQuadrature& quad = {})
      : params_(params), quad_(quad) {
    detail::require(k >= 1, "LossDistribution: K must be >= 1");
    const double kk = static_cast<double>(k);
    groups_.push_back({MomentTerms(ob, params, h), 1.0, 1.0 / kk});
  }

  const EnsembleParams& params() const { return params_; }

  AggregateMoments moments(double z, double u) const { return detail::aggregate(groups_, z, u); }

  double density(double loss) const {
    const double levels[] = {std::abs(loss)};
    auto kernel = [loss](const AggregateMoments& m) {
      const double sd = std::max(std::sqrt(m.M2), 1e-12);
      const double x = (loss - m.M1) / sd;
      if (std::abs(x) > 12.0) return 0.0;
      return std::exp(-0.5 * x * x) / (sd * std::sqrt(2.0 * std::numbers::pi));
    };
    return detail::chi_square_average(
        quad_.z, params_.n_eff,
        [&](double z) { return u_integral(z, levels, kernel); }, "loss density z-integral");
  }

  /// Integral of density over [lo, hi]; either bound may be infinite.
  double mass(double lo, double hi) const {
    detail::require(lo <= hi, "LossDistribution::mass: lo must be <= hi");
    std::vector<double> levels;
    if (std::isfinite(lo)) levels.push_back(std::abs(lo));
    if (std::isfinite(hi)) levels.push_back(std::abs(hi));
    auto kernel = [lo, hi](const AggregateMoments& m) {
      const double sd = std::max(std::sqrt(m.M2), 1e-12);
      return detail::normal_interval_mass((lo - m.M1) / sd, (hi - m.M1) / sd);
    };
    return detail::chi_square_average(
        quad_.z, params_.n_eff,
        [&](double z) { return u_integral(z, levels, kernel); }, "loss mass z-integral");
  }

  DensityCurve curve(std::span<const double> grid, int threads = 1) const {
    DensityCurve out;
    out.abscissae.assign(grid.begin(), grid.end());
    out.values.assign(grid.size(), 0.0);
    parallel_for(grid.size(), threads, [&](std::size_t i) { out.values[i] = density(grid[i]); });
    return out;
  }

  /// Mean density over each bin, placed at the bin centres.
  DensityCurve bin_average_curve(std::span<const double> edges, int threads = 1) const {
    return detail::bin_average_curve(edges, threads, [this](double lo, double hi) { return mass(lo, hi); });
  }

 private:
  template <class Kernel>
  double u_integral(double z, std::span<const double> levels, Kernel&& kernel) const {
    const double n = params_.n_eff;
    const double s = 1.0 / std::sqrt(n);
    const double outer = 40.0 * s;
    std::vector<double> breaks{-outer, -6.0 * s, -3.0 * s, 0.0, 3.0 * s, 6.0 * s, outer};
    if (params_.c > 0.0) {
      for (double level : levels) {
        if (!(level > 0.0 && level < 1.0)) continue;
        auto f = [&](double u) { return moments(z, u).M1 - level; };
        try {
          const auto [lo, hi] = numerics::expand_bracket(f, -3.0 * s, 3.0 * s);
          const double root = numerics::bracketed_root(f, lo, hi, 1e-10 * level);
          const auto m = moments(z, root);
          if (!(m.dM1_du > 0.0)) continue;
          const double width = std::max(std::sqrt(m.M2), 1e-12) / m.dM1_du;
          for (double k : {-30.0, -8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0, 30.0}) {
            const double b = root + k * width;
            if (b > -outer && b < outer) breaks.push_back(b);
          }
        } catch (const BracketError&) {
          // Level not reachable at this z; the kernel tail is smooth there.
        }
      }
    }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    const double log_norm = 0.5 * std::log(n / (2.0 * std::numbers::pi));
    auto integrand = [&](double u) {
      const double prior = std::exp(log_norm - 0.5 * n * u * u);
      if (prior == 0.0) return 0.0;
      return prior * kernel(moments(z, u));
    };
    return numerics::integrate_adaptive(integrand, breaks, quad_.u_rel_tol, 1e-300,
                                        quad_.u_max_intervals)
        .value;
  }

  EnsembleParams params_;
  LossQuadrature quad_;
  std::vector<detail::ObligorGroup> groups_;
};

/// Exact K -> infinity loss distribution of a homogeneous portfolio.
///
/// For each z node the loss is the deterministic, strictly increasing
/// function m_10(z, u) of the common factor, so the density is
///   E_z[ phi_N(u0) / (d m_10 / du)(z, u0) ],  m_10(z, u0) = L,
/// with phi_N the Normal(0, 1/N) density. Requires c > 0.
class LimitLossDistribution {
 public:
  LimitLossDistribution(const Obligor& ob, const EnsembleParams& params, const Horizon& h,
                        const LossQuadrature& quad = {})
      : params_(params),
        quad_(quad),
        terms_(ob, params, h) {
    detail::require(params.c > 0.0, "LimitLossDistribution: requires c > 0");
  }

  /// u0 with m_10(z, u0) = L, or nullopt if L is numerically unreachable.
  std::optional<double> root(double z, double loss) const {
    auto f = [&](double u) { return terms_(z, u).m1 - loss; };
    const double s = 1.0 / std::sqrt(params_.n_eff);
    try {
      const auto [lo, hi] = numerics::expand_bracket(f, -3.0 * s, 3.0 * s, 80);
      return numerics::bracketed_root(f, lo, hi, 1e-14 * loss);
    } catch (const BracketError&) {
      return std::nullopt;
    }
  }

  double density(double loss) const {
    detail::require(loss > 0.0 && loss < 1.0, "limit_loss_density: L must lie in (0, 1)");
    const double n = params_.n_eff;
    const double log_norm = 0.5 * std::log(n / (2.0 * std::numbers::pi));
    auto per_z = [&](double z) {
      const auto u0 = root(z, loss);
      if (!u0) return 0.0;
      const double prior = std::exp(log_norm - 0.5 * n * *u0 * *u0);
      if (prior == 0.0) return 0.0;
      const double slope = terms_(z, *u0).dm1_du;
      return slope > 0.0 ? prior / slope : 0.0;
    };
    return detail::chi_square_average(quad_.z, n, per_z, "limit density z-integral");
  }

  /// P(L_inf <= loss).
  double cdf(double loss) const { return 1.0 - tail(loss); }

  /// P(L_inf > loss), computed directly so small tails keep relative accuracy.
  double tail(double loss) const {
    if (loss <= 0.0) return 1.0;
    if (loss >= 1.0) return 0.0;
    const double sn = std::sqrt(params_.n_eff);
    auto per_z = [&](double z) {
      const auto u0 = root(z, loss);
      if (!u0) return terms_(z, 0.0).m1 > loss ? 1.0 : 0.0;
      return numerics::std_normal_cdf(-sn * *u0);
    };
    return detail::chi_square_average(quad_.z, params_.n_eff, per_z, "limit tail z-integral");
  }

  /// Densities on a grid; points outside (0, 1) are 0.
  DensityCurve curve(std::span<const double> grid, int threads = 1) const {
    DensityCurve out;
    out.abscissae.assign(grid.begin(), grid.end());
    out.values.assign(grid.size(), 0.0);
    parallel_for(grid.size(), threads, [&](std::size_t i) {
      if (grid[i] > 0.0 && grid[i] < 1.0) out.values[i] = density(grid[i]);
    });
    return out;
  }

  DensityCurve bin_average_curve(std::span<const double> edges, int threads = 1) const {
    return detail::bin_average_curve(edges, threads, [this](double lo, double hi) { return tail(lo) - tail(hi); });
  }

 private:
  EnsembleParams params_;
  LossQuadrature quad_;
  MomentTerms terms_;
};

inline double loss_density(double loss, const Portfolio& pf, const EnsembleParams& params,
                           const Horizon& h, const LossQuadrature& quad = {}) {
  return LossDistribution(pf, params, h, quad).density(loss);
}

inline double loss_density(double loss, const HomogeneousSpec& spec, const EnsembleParams& params,
                           const Horizon& h, const LossQuadrature& quad = {}) {
  detail::require(!spec.infinite(), "loss_density: use limit_loss_density for K = inf");
  return LossDistribution(spec.obligor(), *spec.K, params, h, quad).density(loss);
}

inline double limit_loss_density(double loss, const HomogeneousSpec& spec,
                                 const EnsembleParams& params, const Horizon& h,
                                 const LossQuadrature& quad = {}) {
  return LimitLossDistribution(spec.obligor(), params, h, quad).density(loss);
}

}  // namespace ensloss
