#pragma once

// Reading and writing of price panels, density curves, histograms and fit
// reports. Numbers are written with 12 significant digits.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ensloss/calibration.hpp"
#include "ensloss/ensemble_returns.hpp"
#include "ensloss/error.hpp"
#include "ensloss/montecarlo.hpp"

namespace ensloss::io {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// v rounded to 12 significant digits, so JSON output is as stable as CSV.
inline double round12(double v) {
  if (!std::isfinite(v)) return v;
  return std::strtod(fmt(v).c_str(), nullptr);
}

inline std::vector<double> round12(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = round12(v[i]);
  return out;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool is_missing(std::string_view s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null";
}

inline bool is_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  const int month = (s[5] - '0') * 10 + (s[6] - '0');
  const int day = (s[8] - '0') * 10 + (s[9] - '0');
  return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

inline bool is_comment_or_blank(std::string_view line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

}  // namespace detail

/// Wide CSV: header `date,T1,...,TK`, one row per trading day. Rows with a
/// missing value are dropped and counted.
inline PricePanel read_price_panel(std::istream& in) {
  std::string line;
  while (std::getline(in, line) && detail::is_comment_or_blank(line)) {
  }
  if (detail::is_comment_or_blank(line)) throw DataError("price panel: empty input");
  const auto header = detail::split(line);
  if (header.size() < 2 || header[0] != "date") {
    throw DataError("price panel: header must be 'date,<ticker>,...'");
  }
  PricePanel panel;
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i].empty()) throw DataError("price panel: empty ticker name in header");
    panel.tickers.emplace_back(header[i]);
  }
  const std::size_t k = panel.tickers.size();
  std::vector<double> values;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_comment_or_blank(line)) continue;
    const auto fields = detail::split(line);
    if (fields.size() != k + 1) {
      throw DataError("price panel: line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " + std::to_string(k + 1));
    }
    if (!detail::is_iso_date(fields[0])) {
      throw DataError("price panel: bad date '" + std::string(fields[0]) + "' on line " +
                      std::to_string(line_no));
    }
    if (!panel.dates.empty() && std::string(fields[0]) <= panel.dates.back()) {
      throw DataError("price panel: dates not strictly increasing at " + std::string(fields[0]));
    }
    std::vector<double> row(k);
    bool missing = false;
    for (std::size_t j = 0; j < k; ++j) {
      if (detail::is_missing(fields[j + 1])) {
        missing = true;
        continue;
      }
      if (!detail::parse_double(fields[j + 1], row[j])) {
        throw DataError("price panel: unparseable price '" + std::string(fields[j + 1]) + "' for " +
                        panel.tickers[j] + " on " + std::string(fields[0]));
      }
    }
    if (missing) {
      ++panel.dropped_rows;
      continue;
    }
    panel.dates.emplace_back(fields[0]);
    values.insert(values.end(), row.begin(), row.end());
  }
  const long t = static_cast<long>(panel.dates.size());
  if (t < 2) throw DataError("price panel: fewer than two complete rows");
  panel.prices = Eigen::Map<const Eigen::MatrixXd>(values.data(), static_cast<Eigen::Index>(k), t);
  return panel;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

inline PricePanel read_price_panel(const std::string& path) {
  auto in = open_input(path);
  return read_price_panel(in);
}

inline void write_price_panel(std::ostream& out, const PricePanel& panel) {
  out << "date";
  for (const auto& t : panel.tickers) out << ',' << t;
  out << '\n';
  for (int c = 0; c < panel.observations(); ++c) {
    out << panel.dates[c];
    for (int r = 0; r < panel.assets(); ++r) out << ',' << fmt(panel.prices(r, c));
    out << '\n';
  }
}

/// Two-column CSV with a header row; metadata goes into leading `#` lines.
inline void write_curve(std::ostream& out, const DensityCurve& curve, const std::string& x_name) {
  for (const auto& [key, value] : curve.meta) out << "# " << key << '=' << value << '\n';
  out << x_name << ",density\n";
  for (std::size_t i = 0; i < curve.abscissae.size(); ++i) {
    out << fmt(curve.abscissae[i]) << ',' << fmt(curve.values[i]) << '\n';
  }
}

inline DensityCurve read_curve(std::istream& in) {
  DensityCurve curve;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const auto body = detail::trim(t.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string_view::npos) {
        curve.meta[std::string(detail::trim(body.substr(0, eq)))] = std::string(detail::trim(body.substr(eq + 1)));
      }
      continue;
    }
    const auto fields = detail::split(t);
    if (fields.size() < 2) throw DataError("curve: expected two columns in '" + std::string(t) + "'");
    double x = 0.0;
    double y = 0.0;
    if (!detail::parse_double(fields[0], x) || !detail::parse_double(fields[1], y)) {
      if (!header && curve.abscissae.empty()) {
        header = true;
        continue;
      }
      throw DataError("curve: unparseable row '" + std::string(t) + "'");
    }
    if (!curve.abscissae.empty() && !(x > curve.abscissae.back())) {
      throw DataError("curve: abscissae must be strictly increasing");
    }
    curve.abscissae.push_back(x);
    curve.values.push_back(y);
  }
  if (curve.abscissae.size() < 2) throw DataError("curve: fewer than two points");
  return curve;
}

inline DensityCurve read_curve(const std::string& path) {
  auto in = open_input(path);
  return read_curve(in);
}

/// Histogram CSV. Header lines carry the totals; the first data row is the
/// L = 0 atom with lo = hi = 0.
inline void write_histogram(std::ostream& out, const EmpiricalDensity& h) {
  out << "# total_samples=" << h.total << '\n';
  out << "# zero_count=" << h.zero_count << '\n';
  out << "# below_range=" << h.below_range << '\n';
  out << "# above_range=" << h.above_range << '\n';
  out << "lo,hi,count,density,std_error\n";
  const double frac = h.zero_fraction();
  const double frac_se = h.total > 0 ? std::sqrt(frac * (1.0 - frac) / static_cast<double>(h.total)) : 0.0;
  out << "0,0," << h.zero_count << ',' << fmt(frac) << ',' << fmt(frac_se) << '\n';
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out << fmt(h.edges[i]) << ',' << fmt(h.edges[i + 1]) << ',' << h.counts[i] << ','
        << fmt(h.densities[i]) << ',' << fmt(h.std_errors[i]) << '\n';
  }
}

inline EmpiricalDensity read_histogram(std::istream& in) {
  EmpiricalDensity h;
  bool have_total = false;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const auto body = detail::trim(t.substr(1));
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) continue;
      const auto key = detail::trim(body.substr(0, eq));
      double v = 0.0;
      if (!detail::parse_double(detail::trim(body.substr(eq + 1)), v)) continue;
      if (key == "total_samples") {
        h.total = static_cast<long>(v);
        have_total = true;
      } else if (key == "zero_count") {
        h.zero_count = static_cast<long>(v);
      } else if (key == "below_range") {
        h.below_range = static_cast<long>(v);
      } else if (key == "above_range") {
        h.above_range = static_cast<long>(v);
      }
      continue;
    }
    const auto f = detail::split(t);
    if (f.size() != 5) throw DataError("histogram: expected five columns in '" + std::string(t) + "'");
    if (f[0] == "lo") continue;
    double lo = 0, hi = 0, count = 0, dens = 0, se = 0;
    if (!detail::parse_double(f[0], lo) || !detail::parse_double(f[1], hi) ||
        !detail::parse_double(f[2], count) || !detail::parse_double(f[3], dens) ||
        !detail::parse_double(f[4], se)) {
      throw DataError("histogram: unparseable row '" + std::string(t) + "'");
    }
    if (lo == 0.0 && hi == 0.0) {
      h.zero_count = static_cast<long>(count);
      continue;
    }
    if (h.edges.empty()) {
      h.edges.push_back(lo);
    } else if (lo != h.edges.back()) {
      throw DataError("histogram: bins are not contiguous");
    }
    h.edges.push_back(hi);
    h.counts.push_back(static_cast<long>(count));
    h.densities.push_back(dens);
    h.std_errors.push_back(se);
  }
  if (!have_total) throw DataError("histogram: missing '# total_samples=' header");
  if (h.counts.empty()) throw DataError("histogram: no bins");
  return h;
}

inline EmpiricalDensity read_histogram(const std::string& path) {
  auto in = open_input(path);
  return read_histogram(in);
}

inline nlohmann::json to_json(const FitReport& r) {
  using nlohmann::json;
  json j;
  j["c_hat"] = round12(r.c_hat);
  j["n_hat"] = r.n_hat ? json(round12(*r.n_hat)) : json(nullptr);
  j["mu_hat"] = round12(r.mu_hat);
  j["rho_hat"] = round12(r.rho_hat);
  j["dropped_rows"] = r.dropped_rows;
  json d;
  d["horizon_days"] = r.horizon_days;
  d["days_per_unit"] = r.days_per_unit;
  d["return_windows"] = r.windows;
  d["pooled_samples"] = r.rescaled.size();
  d["warnings"] = r.warnings;
  if (r.fit) {
    d["objective"] = round12(r.fit->objective);
    d["at_bound"] = r.fit->at_bound;
    json trace = json::array();
    for (const auto& [n, v] : r.fit->trace) trace.push_back({{"n", round12(n)}, {"objective", round12(v)}});
    d["trace"] = trace;
  }
  j["diagnostics"] = d;
  return j;
}

inline nlohmann::json to_json(const ComparisonReport& r) {
  nlohmann::json j;
  j["chi2_per_dof"] = round12(r.chi2_per_dof);
  j["max_abs_z"] = round12(r.max_abs_z);
  j["dof"] = r.dof;
  j["pass"] = r.pass;
  nlohmann::json bins = nlohmann::json::array();
  for (std::size_t i = 0; i < r.bins.size(); ++i) {
    bins.push_back({{"bin", r.bins[i]}, {"expected", round12(r.expected[i])}, {"z", round12(r.z_scores[i])}});
  }
  j["bins"] = bins;
  return j;
}

/// Grid spec `lin:lo:hi:n` (n points, endpoints included) or `log:lo:hi:n`.
inline std::vector<double> parse_grid(const std::string& spec) {
  const auto parts = detail::split(spec, ':');
  ensloss::detail::require(parts.size() == 4, "grid spec must be lin:lo:hi:n or log:lo:hi:n");
  double lo = 0.0;
  double hi = 0.0;
  double n = 0.0;
  ensloss::detail::require(detail::parse_double(parts[1], lo) && detail::parse_double(parts[2], hi) &&
                               detail::parse_double(parts[3], n),
                           "grid spec: bad number in '" + spec + "'");
  ensloss::detail::require(n >= 2 && n == std::floor(n) && n <= 1e7, "grid spec: n must be an integer >= 2");
  ensloss::detail::require(hi > lo, "grid spec: hi must exceed lo");
  const int count = static_cast<int>(n);
  std::vector<double> grid(static_cast<std::size_t>(count));
  if (parts[0] == "lin") {
    for (int i = 0; i < count; ++i) grid[i] = lo + (hi - lo) * i / (count - 1);
  } else if (parts[0] == "log") {
    ensloss::detail::require(lo > 0.0, "grid spec: log grid needs lo > 0");
    for (int i = 0; i < count; ++i) grid[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1));
  } else {
    throw DomainError("grid spec: kind must be lin or log");
  }
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

}  // namespace ensloss::io
