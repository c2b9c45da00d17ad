// ensloss: calibration, analytic loss densities, Monte Carlo validation.
//
// Exit codes: 0 ok, 2 usage or invalid parameters, 3 data error,
// 4 numerical failure. Results go to stdout (or --out), logs to stderr.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ensloss/ensloss.hpp"

namespace {

using namespace ensloss;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct ModelArgs {
  std::string preset;
  std::string K;
  std::optional<double> c, N, mu, rho, T, F0, V0;
  std::optional<int> T_days;
  std::string unit = "month";
};

struct Model {
  EnsembleParams params;
  HomogeneousSpec spec;
  Horizon horizon;
};

void add_model_options(CLI::App* cmd, ModelArgs& a) {
  cmd->add_option("--preset", a.preset, "Parameter preset")
      ->check(CLI::IsMember({"monthly-paper", "yearly-paper"}));
  cmd->add_option("--K", a.K, "Number of obligors, or 'inf'");
  cmd->add_option("--c", a.c, "Mean correlation");
  cmd->add_option("--N", a.N, "Fluctuation parameter");
  cmd->add_option("--mu", a.mu, "Drift per horizon unit");
  cmd->add_option("--rho", a.rho, "Volatility per sqrt(horizon unit)");
  cmd->add_option("--T", a.T, "Maturity in horizon units");
  cmd->add_option("--T-days", a.T_days, "Maturity in trading days (converted with --unit)");
  cmd->add_option("--unit", a.unit, "Horizon unit")->check(CLI::IsMember({"month", "year"}));
  cmd->add_option("--F0", a.F0, "Face value");
  cmd->add_option("--V0", a.V0, "Initial asset value");
}

int days_per_unit(const std::string& unit) {
  return unit == "year" ? kTradingDaysPerYear : kTradingDaysPerMonth;
}

Model resolve_model(const ModelArgs& a) {
  Model m;
  m.spec.K = 100;
  std::string unit = a.unit;
  if (a.preset == "monthly-paper") {
    m.params = {0.26, 4.2};
    m.spec.mu0 = 0.013;
    m.spec.rho0 = 0.1;
    unit = "month";
  } else if (a.preset == "yearly-paper") {
    m.params = {0.28, 6.0};
    m.spec.mu0 = 0.17;
    m.spec.rho0 = 0.35;
    unit = "year";
  } else {
    if (!a.c || !a.N || !a.mu || !a.rho) {
      throw DomainError("--c, --N, --mu and --rho are required without --preset");
    }
  }
  if (a.c) m.params.c = *a.c;
  if (a.N) m.params.n_eff = *a.N;
  if (a.mu) m.spec.mu0 = *a.mu;
  if (a.rho) m.spec.rho0 = *a.rho;
  if (a.F0) m.spec.F0 = *a.F0;
  if (a.V0) m.spec.V0 = *a.V0;
  if (!a.K.empty()) {
    if (a.K == "inf") {
      m.spec.K.reset();
    } else {
      std::size_t used = 0;
      long k = 0;
      try {
        k = std::stol(a.K, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != a.K.size() || k < 1) throw DomainError("--K must be a positive integer or 'inf'");
      m.spec.K = k;
    }
  }
  m.horizon.unit = unit;
  m.horizon.T = 1.0;
  if (a.T && a.T_days) throw DomainError("give only one of --T and --T-days");
  if (a.T) m.horizon.T = *a.T;
  if (a.T_days) m.horizon.T = static_cast<double>(*a.T_days) / days_per_unit(unit);
  m.params.validate();
  m.spec.obligor().validate();
  ensloss::detail::require(m.horizon.T > 0.0, "maturity must be > 0");
  return m;
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw DataError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

struct CalibrateArgs {
  std::string prices;
  std::string horizon = "month";
  std::string unit;
  bool overlapping = false;
  std::string objective = "ml";
  double n_lo = 2.1;
  double n_hi = 60.0;
  std::string out;
  std::string rescaled_out;
  std::string histogram_grid = "lin:-10:10:81";
};

int cmd_calibrate(const CalibrateArgs& a, int threads) {
  PricePanel panel;
  try {
    panel = io::read_price_panel(a.prices);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  CalibrationOptions opt;
  if (a.horizon == "month") {
    opt.horizon_days = kTradingDaysPerMonth;
  } else if (a.horizon == "year") {
    opt.horizon_days = kTradingDaysPerYear;
  } else {
    std::size_t used = 0;
    int days = 0;
    try {
      days = std::stoi(a.horizon, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != a.horizon.size() || days < 1) {
      throw DomainError("--horizon must be month, year or a number of trading days");
    }
    opt.horizon_days = days;
  }
  const std::string unit = !a.unit.empty() ? a.unit : (a.horizon == "year" ? "year" : "month");
  opt.days_per_unit = days_per_unit(unit);
  opt.overlapping = a.overlapping;
  opt.fit.n_lo = a.n_lo;
  opt.fit.n_hi = a.n_hi;
  opt.fit.threads = threads;
  opt.fit.objective =
      a.objective == "lsq" ? FitObjective::log_histogram_least_squares : FitObjective::max_likelihood;
  std::cerr << "calibrate: " << panel.assets() << " assets, " << panel.observations() << " rows, "
            << panel.dropped_rows << " dropped\n";
  const FitReport report = calibrate(panel, opt);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  auto j = io::to_json(report);
  j["diagnostics"]["unit"] = unit;
  Output out(a.out);
  out.stream() << j.dump(2) << '\n';
  if (!a.rescaled_out.empty() && !report.rescaled.empty()) {
    const auto grid = io::parse_grid(a.histogram_grid);
    const auto emp = histogram(report.rescaled, grid);
    Output h(a.rescaled_out);
    h.stream() << "# total_samples=" << emp.total << '\n';
    if (report.n_hat) h.stream() << "# n_hat=" << io::fmt(*report.n_hat) << '\n';
    h.stream() << "lo,hi,count,density,model_density\n";
    for (std::size_t i = 0; i < emp.counts.size(); ++i) {
      const double mid = 0.5 * (emp.edges[i] + emp.edges[i + 1]);
      const double model = report.n_hat ? univariate_rescaled_density(mid, *report.n_hat) : 0.0;
      h.stream() << io::fmt(emp.edges[i]) << ',' << io::fmt(emp.edges[i + 1]) << ',' << emp.counts[i]
                 << ',' << io::fmt(emp.densities[i]) << ',' << io::fmt(model) << '\n';
    }
  }
  return 0;
}

struct LossArgs {
  ModelArgs model;
  std::string grid = "lin:0.001:0.3:300";
  std::string bin_edges;
  std::string out;
};

int cmd_loss(const LossArgs& a, int threads) {
  const Model m = resolve_model(a.model);
  DensityCurve curve;
  if (m.spec.infinite()) {
    std::cerr << "loss: K = inf limit\n";
    const LimitLossDistribution dist(m.spec.obligor(), m.params, m.horizon);
    curve = a.bin_edges.empty() ? dist.curve(io::parse_grid(a.grid), threads)
                                : dist.bin_average_curve(io::parse_grid(a.bin_edges), threads);
  } else {
    std::cerr << "loss: K = " << *m.spec.K << '\n';
    const LossDistribution dist(m.spec.obligor(), *m.spec.K, m.params, m.horizon);
    curve = a.bin_edges.empty() ? dist.curve(io::parse_grid(a.grid), threads)
                                : dist.bin_average_curve(io::parse_grid(a.bin_edges), threads);
  }
  Output out(a.out);
  io::write_curve(out.stream(), curve, "L");
  return 0;
}

struct SimulateArgs {
  ModelArgs model;
  long samples = 1000000;
  std::uint64_t seed = 0;
  long batch_size = 65536;
  std::string edges = "log:1e-5:1:201";
  std::string out;
  std::string samples_out;
};

int cmd_simulate(const SimulateArgs& a, int threads) {
  const Model m = resolve_model(a.model);
  if (m.spec.infinite()) throw DomainError("simulate needs a finite --K");
  SimConfig cfg;
  cfg.num_samples = a.samples;
  cfg.seed = a.seed;
  cfg.batch_size = a.batch_size;
  cfg.threads = threads;
  cfg.validate();
  const auto pf = Portfolio::homogeneous(m.spec.obligor(), *m.spec.K);
  std::cerr << "simulate: " << a.samples << " samples, K = " << *m.spec.K << ", seed " << a.seed << '\n';
  const LossSamples samples = simulate_losses(pf, m.params, m.horizon, cfg);
  const auto edges = io::parse_grid(a.edges);
  Output out(a.out);
  io::write_histogram(out.stream(), histogram(samples, edges));
  if (!a.samples_out.empty()) {
    Output s(a.samples_out);
    s.stream() << "# fingerprint=" << samples.fingerprint << '\n';
    s.stream() << "# seed=" << a.seed << '\n';
    char buf[32];
    for (double v : samples.values) {
      std::snprintf(buf, sizeof buf, "%.17g\n", v);
      s.stream() << buf;
    }
  }
  return 0;
}

struct CompareArgs {
  std::string analytic;
  std::string empirical;
  CompareOptions opt;
  std::string out;
  bool strict = false;
};

int cmd_compare(const CompareArgs& a) {
  DensityCurve curve;
  EmpiricalDensity emp;
  try {
    curve = io::read_curve(a.analytic);
    emp = io::read_histogram(a.empirical);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  const auto report = compare_density(emp, curve, a.opt);
  std::cerr << "compare: chi2/dof " << report.chi2_per_dof << ", max |z| " << report.max_abs_z << ", "
            << (report.pass ? "pass" : "fail") << '\n';
  Output out(a.out);
  out.stream() << io::to_json(report).dump(2) << '\n';
  return a.strict && !report.pass ? 1 : 0;
}

struct ReturnDensityArgs {
  double N = 0.0;
  std::string grid = "lin:-40:40:2001";
  std::string out;
};

int cmd_return_density(const ReturnDensityArgs& a) {
  ensloss::detail::require(a.N > 1.0, "--N must be > 1");
  const auto grid = io::parse_grid(a.grid);
  DensityCurve curve;
  curve.abscissae = grid;
  for (double x : grid) curve.values.push_back(univariate_rescaled_density(x, a.N));
  Output out(a.out);
  io::write_curve(out.stream(), curve, "r_tilde");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble-averaged credit portfolio loss distributions"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = default_thread_count();
  app.add_option("--threads", threads, "Worker threads (default: ENSLOSS_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate", "Estimate c, N, drift and volatility from a price CSV");
  c->add_option("prices", cal.prices, "Wide CSV: date,T1,...,TK")->required();
  c->add_option("--horizon", cal.horizon, "month, year or a number of trading days");
  c->add_option("--unit", cal.unit, "Unit for drift and volatility")->check(CLI::IsMember({"month", "year"}));
  c->add_flag("--overlapping", cal.overlapping, "Use overlapping return windows");
  c->add_option("--objective", cal.objective, "ml or lsq")->check(CLI::IsMember({"ml", "lsq"}));
  c->add_option("--n-lo", cal.n_lo, "Lower end of the N search interval");
  c->add_option("--n-hi", cal.n_hi, "Upper end of the N search interval");
  c->add_option("--out", cal.out, "Report JSON path (default stdout)");
  c->add_option("--rescaled-out", cal.rescaled_out, "Histogram CSV of pooled rescaled returns");
  c->add_option("--rescaled-grid", cal.histogram_grid, "Bin edges for --rescaled-out");

  LossArgs loss;
  auto* l = app.add_subcommand("loss", "Analytic portfolio loss density");
  add_model_options(l, loss.model);
  l->add_option("--grid", loss.grid, "lin:lo:hi:n or log:lo:hi:n");
  l->add_option("--bin-edges", loss.bin_edges, "Emit bin-averaged densities for these edges instead");
  l->add_option("--out", loss.out, "Output CSV path (default stdout)");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Monte Carlo loss histogram");
  add_model_options(s, sim.model);
  s->add_option("--samples", sim.samples, "Number of portfolio draws");
  s->add_option("--seed", sim.seed, "Random seed");
  s->add_option("--batch-size", sim.batch_size, "Draws per random stream");
  s->add_option("--edges", sim.edges, "Histogram edges, lin:lo:hi:n or log:lo:hi:n");
  s->add_option("--out", sim.out, "Histogram CSV path (default stdout)");
  s->add_option("--samples-out", sim.samples_out, "Write raw losses to this file");

  CompareArgs cmp;
  auto* m = app.add_subcommand("compare", "Compare an analytic curve with an empirical histogram");
  m->add_option("analytic", cmp.analytic, "Curve CSV")->required();
  m->add_option("empirical", cmp.empirical, "Histogram CSV")->required();
  m->add_option("--min-count", cmp.opt.min_count, "Minimum bin count");
  m->add_option("--chi2-threshold", cmp.opt.chi2_threshold, "Pass threshold for chi2/dof");
  m->add_option("--z-threshold", cmp.opt.z_threshold, "Pass threshold for max |z|");
  m->add_option("--out", cmp.out, "Report JSON path (default stdout)");
  m->add_flag("--strict", cmp.strict, "Exit 1 when the comparison fails");

  ReturnDensityArgs rd;
  auto* r = app.add_subcommand("return-density", "Density of a single rescaled return");
  r->add_option("--N", rd.N, "Fluctuation parameter")->required();
  r->add_option("--grid", rd.grid, "lin:lo:hi:n or log:lo:hi:n");
  r->add_option("--out", rd.out, "Output CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (c->parsed()) return cmd_calibrate(cal, threads);
    if (l->parsed()) return cmd_loss(loss, threads);
    if (s->parsed()) return cmd_simulate(sim, threads);
    if (m->parsed()) return cmd_compare(cmp);
    if (r->parsed()) return cmd_return_density(rd);
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUsage;
}
