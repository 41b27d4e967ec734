#include "tokgran/report.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tokgran/common.hpp"
#include "tokgran/plot.hpp"

namespace tokgran {
namespace {

namespace fs = std::filesystem;

std::size_t count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

Exp1Row row(const std::string& size, int v, const std::string& corpus, const std::string& measure, double d, double ppl,
            const std::string& phase = "trained") {
  return {size, v, corpus, measure, phase, d, ppl, {}, {}};
}

const Exp1Summary* find(const std::vector<Exp1Summary>& s, const std::string& size, int v) {
  for (const auto& r : s)
    if (r.model_size == size && r.vocab_size == v) return &r;
  return nullptr;
}

TEST(Summary, SumsCellsAndAveragesSizes) {
  std::vector<Exp1Row> rows;
  // corpus a has two measures, corpus b one
  for (int v : {64, 256}) {
    const double k = v == 64 ? 1.0 : 2.0;
    rows.push_back(row("tiny", v, "a", "FFD", 1.0 * k, 10.0 * k));
    rows.push_back(row("tiny", v, "a", "GD", 2.0 * k, 10.0 * k));
    rows.push_back(row("tiny", v, "b", "RT", 3.0 * k, 40.0 * k));
    rows.push_back(row("desk", v, "a", "FFD", 5.0 * k, 5.0 * k));
    rows.push_back(row("desk", v, "a", "GD", 5.0 * k, 5.0 * k));
    rows.push_back(row("desk", v, "b", "RT", 5.0 * k, 20.0 * k));
  }
  std::vector<std::string> warnings;
  const auto s = summarize_exp1(rows, warnings);
  EXPECT_TRUE(warnings.empty());
  ASSERT_EQ(s.size(), 6u);

  const auto* t64 = find(s, "tiny", 64);
  ASSERT_NE(t64, nullptr);
  EXPECT_DOUBLE_EQ(t64->delta_loglik, 6.0);
  EXPECT_NEAR(t64->perplexity, 20.0, 1e-12);  // sqrt(10 * 40)
  EXPECT_EQ(t64->cells, 3);
  const auto* d64 = find(s, "desk", 64);
  EXPECT_DOUBLE_EQ(d64->delta_loglik, 15.0);
  EXPECT_NEAR(d64->perplexity, 10.0, 1e-12);

  // ΔLogLik averages arithmetically across sizes, perplexity geometrically.
  const auto* avg64 = find(s, "average", 64);
  ASSERT_NE(avg64, nullptr);
  EXPECT_DOUBLE_EQ(avg64->delta_loglik, 10.5);
  EXPECT_NEAR(avg64->perplexity, std::sqrt(20.0 * 10.0), 1e-12);
  const auto* avg256 = find(s, "average", 256);
  EXPECT_DOUBLE_EQ(avg256->delta_loglik, 21.0);
  EXPECT_NEAR(avg256->perplexity, std::sqrt(40.0 * 20.0), 1e-12);
}

TEST(Summary, IncompleteGridWarns) {
  std::vector<Exp1Row> rows = {row("tiny", 64, "a", "RT", 1.0, 10.0), row("tiny", 256, "a", "RT", 1.0, 10.0),
                               row("desk", 64, "a", "RT", 2.0, 20.0)};
  std::vector<std::string> warnings;
  const auto s = summarize_exp1(rows, warnings);
  EXPECT_EQ(find(s, "desk", 256), nullptr);
  ASSERT_GE(warnings.size(), 2u);  // the missing cell and the partial average
  const auto* avg256 = find(s, "average", 256);
  ASSERT_NE(avg256, nullptr);
  EXPECT_DOUBLE_EQ(avg256->delta_loglik, 1.0);

  // The figure has a gap (NaN) where desk |V|=256 is missing, and still renders.
  const auto fig = exp1_figure(s);
  bool saw_gap = false;
  for (const auto& p : fig.panels)
    for (const auto& ser : p.series)
      for (double y : ser.y) saw_gap |= std::isnan(y);
  EXPECT_TRUE(saw_gap);
  EXPECT_NO_THROW(render_svg(fig));
}

TEST(Summary, MissingMeasureWarns) {
  std::vector<Exp1Row> rows = {row("tiny", 64, "a", "FFD", 1.0, 10.0), row("tiny", 64, "a", "GD", 1.0, 10.0),
                               row("tiny", 256, "a", "FFD", 1.0, 10.0)};
  std::vector<std::string> warnings;
  summarize_exp1(rows, warnings);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("1 of 2"), std::string::npos) << warnings[0];
}

TEST(Summary, SingleCellIsOnePoint) {
  std::vector<std::string> warnings;
  const auto s = summarize_exp1({row("tiny", 64, "a", "RT", 1.5, 12.0)}, warnings);
  EXPECT_TRUE(warnings.empty());
  const auto svg = render_svg(exp1_figure(s));
  // tiny and average series, two panels, one point each
  EXPECT_EQ(count(svg, "<circle"), 4u);
  EXPECT_EQ(count(svg, "<polyline"), 0u);
}

TEST(Plot, GapsSplitLines) {
  Figure f;
  Panel p;
  p.series.push_back({"s", {1, 2, 3, 4, 5}, {1, 2, std::nan(""), 4, 5}, {}, {}});
  f.panels.push_back(p);
  const auto svg = render_svg(f);
  EXPECT_EQ(count(svg, "<polyline"), 2u);
  EXPECT_EQ(count(svg, "<circle"), 4u);
}

TEST(Plot, LogAxesRejectNonPositive) {
  Figure f;
  Panel p;
  p.log2_x = true;
  p.series.push_back({"s", {0, 2}, {1, 2}, {}, {}});
  f.panels.push_back(p);
  EXPECT_THROW(render_svg(f), ValidationError);
  f.panels[0].log2_x = false;
  f.panels[0].log10_y = true;
  f.panels[0].series[0].y = {0.0, 1.0};
  EXPECT_THROW(render_svg(f), ValidationError);
}

TEST(Plot, Log2TicksAtDataAndEvenSpacing) {
  Figure f;
  Panel p;
  p.log2_x = true;
  p.series.push_back({"s", {64, 256, 1024}, {1, 2, 3}, {}, {}, true, false, 0});
  f.panels.push_back(p);
  const auto svg = render_svg(f);
  for (const char* t : {">64<", ">256<", ">1024<"}) EXPECT_NE(svg.find(t), std::string::npos) << t;
  // circle x positions are evenly spaced on a log2 axis
  std::vector<double> xs;
  for (auto pos = svg.find("<circle cx=\""); pos != std::string::npos; pos = svg.find("<circle cx=\"", pos + 1)) {
    xs.push_back(std::stod(svg.substr(pos + 12)));
  }
  ASSERT_EQ(xs.size(), 3u);
  EXPECT_NEAR(xs[1] - xs[0], xs[2] - xs[1], 0.02);
}

TEST(Plot, MismatchedSeriesThrows) {
  Figure f;
  Panel p;
  p.series.push_back({"s", {1, 2}, {1}, {}, {}});
  f.panels.push_back(p);
  EXPECT_THROW(render_svg(f), std::exception);
}

TEST(Plot, StampsAndEscaping) {
  Figure f;
  f.title = "a < b & c";
  f.stamps = {{"seed", "3"}, {"config_hash", "abc"}};
  const auto svg = render_svg(f);
  EXPECT_NE(svg.find("a &lt; b &amp; c"), std::string::npos);
  EXPECT_NE(svg.find("<!-- config_hash=abc seed=3 -->"), std::string::npos);
}

std::vector<GPEEstimate> gpe_rows(const std::vector<int>& vocabs) {
  std::vector<GPEEstimate> rows;
  for (int v : vocabs) {
    const double e = 10.0 + 2.0 * std::log2(static_cast<double>(v));
    rows.push_back({"tiny", v, Construction::NP_S, Region::critical, "ms", e, e - 1.0, e + 1.0, 0.01});
    rows.push_back({"tiny", v, Construction::NP_S, Region::critical, "bits", e / 2, e / 2, e / 2, 1.0});
  }
  return rows;
}

TEST(Trends, NeedThreePoints) {
  EXPECT_TRUE(gpe_trends(gpe_rows({64, 256})).empty());
  const auto t = gpe_trends(gpe_rows({64, 256, 1024}));
  ASSERT_EQ(t.size(), 2u);
  for (const auto& tr : t) {
    EXPECT_EQ(tr.points, 3u);
    EXPECT_NEAR(tr.fit.slope, tr.unit == "ms" ? 2.0 : 1.0, 1e-9);
  }
}

TEST(Report, WritesTablesAndFigures) {
  const auto dir = fs::temp_directory_path() / "tokgran_report_test";
  fs::remove_all(dir);
  fs::create_directories(dir / "res");
  EXPECT_THROW(write_report(dir / "res", dir / "out"), ValidationError);

  write_exp1_csv(dir / "res" / "exp1.csv", {row("tiny", 64, "a", "RT", 1.0, 10.0), row("tiny", 256, "a", "RT", 2.0, 9.0)});
  write_gpe_csv(dir / "res" / "gpe.csv", gpe_rows({64, 256, 1024}));
  fs::create_directories(dir / "out");
  const auto r = write_report(dir / "res", dir / "out", {{"seed", "1"}});
  EXPECT_EQ(r.artifacts.size(), 5u);
  for (const auto& p : r.artifacts) EXPECT_TRUE(fs::exists(p)) << p;
  std::ifstream in(dir / "out" / "exp1_report.svg");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_NE(ss.str().find("seed=1"), std::string::npos);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace tokgran
