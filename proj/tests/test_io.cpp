#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "ensloss/io.hpp"

using namespace ensloss;

TEST(Format, TwelveSignificantDigits) {
  EXPECT_EQ(io::fmt(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(io::fmt(1e-20), "1e-20");
  EXPECT_EQ(io::fmt(2.0), "2");
  EXPECT_DOUBLE_EQ(io::round12(0.1234567890123456), 0.123456789012);
}

TEST(Grid, Specs) {
  const auto lin = io::parse_grid("lin:0:1:5");
  EXPECT_EQ(lin, (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  const auto lg = io::parse_grid("log:1e-3:1:4");
  EXPECT_NEAR(lg[1], 1e-2, 1e-15);
  EXPECT_DOUBLE_EQ(lg.back(), 1.0);
  EXPECT_THROW(io::parse_grid("lin:0:1"), DomainError);
  EXPECT_THROW(io::parse_grid("cubic:0:1:5"), DomainError);
  EXPECT_THROW(io::parse_grid("log:0:1:5"), DomainError);
  EXPECT_THROW(io::parse_grid("lin:1:0:5"), DomainError);
  EXPECT_THROW(io::parse_grid("lin:0:1:2.5"), DomainError);
}

TEST(PriceCsv, ParsesAndDropsMissingRows) {
  std::istringstream in(
      "date,AAA,BBB\n"
      "2020-01-02,10,20\n"
      "2020-01-03,NA,21\n"
      "2020-01-06,11,\n"
      "2020-01-07, 12 ,22.5\r\n");
  const auto p = io::read_price_panel(in);
  EXPECT_EQ(p.tickers, (std::vector<std::string>{"AAA", "BBB"}));
  EXPECT_EQ(p.dropped_rows, 2);
  ASSERT_EQ(p.observations(), 2);
  EXPECT_DOUBLE_EQ(p.prices(1, 1), 22.5);
  EXPECT_EQ(p.dates[1], "2020-01-07");
}

TEST(PriceCsv, RejectsMalformedInput) {
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return io::read_price_panel(in);
  };
  EXPECT_THROW(parse(""), DataError);
  EXPECT_THROW(parse("day,A\n2020-01-01,1\n2020-01-02,2\n"), DataError);
  EXPECT_THROW(parse("date,A\n2020-13-01,1\n2020-01-02,2\n"), DataError);
  EXPECT_THROW(parse("date,A\n2020-01-02,1\n2020-01-02,2\n"), DataError);
  EXPECT_THROW(parse("date,A\n2020-01-02,1\n2020-01-01,2\n"), DataError);
  EXPECT_THROW(parse("date,A\n2020-01-02,1,3\n2020-01-03,2\n"), DataError);
  EXPECT_THROW(parse("date,A\n2020-01-02,abc\n2020-01-03,2\n"), DataError);
  EXPECT_THROW(parse("date,A\n2020-01-02,1\n"), DataError);
}

TEST(PriceCsv, RoundTrip) {
  const auto p = synthetic_panel(3, 20, 0.3, 5.0, 0.01, 2);
  std::stringstream buf;
  io::write_price_panel(buf, p);
  const auto back = io::read_price_panel(buf);
  EXPECT_EQ(back.dates, p.dates);
  EXPECT_LT((back.prices - p.prices).cwiseAbs().maxCoeff() / p.prices.maxCoeff(), 1e-11);
}

TEST(CurveCsv, RoundTripWithMeta) {
  DensityCurve c{{0.1, 0.2, 0.3}, {1.5, 2.5, 0.25}, {{"kind", "bin_average"}}};
  std::stringstream buf;
  io::write_curve(buf, c, "L");
  const std::string text = buf.str();
  EXPECT_NE(text.find("L,density\n0.1,1.5\n"), std::string::npos);
  const auto back = io::read_curve(buf);
  EXPECT_EQ(back.abscissae, c.abscissae);
  EXPECT_EQ(back.values, c.values);
  EXPECT_EQ(back.meta.at("kind"), "bin_average");

  std::istringstream bad("L,density\n0.2,1\n0.1,2\n");
  EXPECT_THROW(io::read_curve(bad), DataError);
}

TEST(HistogramCsv, RoundTrip) {
  const std::vector<double> samples{0.0, 0.0, 0.0, 0.01, 0.02, 0.05, 0.3};
  const auto h = histogram(samples, std::vector<double>{0.005, 0.03, 0.1});
  std::stringstream buf;
  io::write_histogram(buf, h);
  EXPECT_EQ(buf.str().rfind("# total_samples=7\n", 0), 0u);
  const auto back = io::read_histogram(buf);
  EXPECT_EQ(back.total, 7);
  EXPECT_EQ(back.zero_count, 3);
  EXPECT_EQ(back.above_range, 1);
  EXPECT_EQ(back.counts, h.counts);
  EXPECT_EQ(back.edges, h.edges);

  std::istringstream missing("lo,hi,count,density,std_error\n0.1,0.2,1,1,1\n");
  EXPECT_THROW(io::read_histogram(missing), DataError);
}

TEST(Json, FitReportKeys) {
  FitReport r;
  r.c_hat = 0.2612345678901234;
  r.n_hat = 4.5;
  r.mu_hat = {0.01};
  r.rho_hat = {0.1};
  r.dropped_rows = 3;
  const auto j = io::to_json(r);
  for (const char* key : {"c_hat", "n_hat", "mu_hat", "rho_hat", "dropped_rows", "diagnostics"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_DOUBLE_EQ(j["c_hat"].get<double>(), 0.261234567890);
  r.n_hat.reset();
  EXPECT_TRUE(io::to_json(r)["n_hat"].is_null());
}
