#include "tokgran/plot.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "tokgran/common.hpp"

namespace tokgran {
namespace {

constexpr double kPanelW = 340, kPanelH = 260;
constexpr double kLeft = 62, kRight = 12, kTop = 30, kBottom = 44;
constexpr double kTitleH = 34;
const char* const kPalette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#444444"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) { return fmt::format("{:.2f}", v); }

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool empty() const { return lo > hi; }
  void pad() {
    if (empty()) {
      lo = 0.0;
      hi = 1.0;
    } else if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
      const double d = std::max(0.5, 0.1 * std::abs(hi));
      lo -= d;
      hi += d;
    } else {
      const double d = 0.05 * (hi - lo);
      lo -= d;
      hi += d;
    }
  }
};

std::vector<double> nice_ticks(double lo, double hi) {
  const double raw = (hi - lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  return t;
}

std::string tick_label(double v) {
  if (std::abs(v) >= 1e5) return fmt::format("{:.0e}", v);
  if (v == std::floor(v)) return fmt::format("{:.0f}", v);
  return fmt::format("{:.3g}", v);
}

void render_panel(std::string& svg, const Panel& panel, double ox, double oy) {
  const double pw = kPanelW - kLeft - kRight, ph = kPanelH - kTop - kBottom;
  auto tx = [&](double x) { return panel.log2_x && x > 0 ? std::log2(x) : x; };
  auto ty = [&](double y) { return panel.log10_y ? std::log10(y) : y; };

  Range xr, yr;
  for (const auto& s : panel.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (panel.log2_x && !(s.x[i] > 0)) throw ValidationError("log2 axis needs positive x values");
      xr.add(tx(s.x[i]));
      if (panel.log10_y && std::isfinite(s.y[i]) && !(s.y[i] > 0)) {
        throw ValidationError("log10 axis needs positive y values");
      }
      if (std::isfinite(s.y[i])) yr.add(ty(s.y[i]));
      if (!s.lo.empty() && std::isfinite(s.y[i])) {
        yr.add(ty(s.lo[i]));
        yr.add(ty(s.hi[i]));
      }
    }
  }
  if (panel.zero_line && !panel.log10_y) yr.add(0.0);
  xr.pad();
  yr.pad();
  auto px = [&](double x) { return ox + kLeft + (tx(x) - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return oy + kTop + (1.0 - (ty(y) - yr.lo) / (yr.hi - yr.lo)) * ph; };

  svg += fmt::format("<g class=\"panel\">\n<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
                     num(ox + kLeft + pw / 2), num(oy + 18), escape(panel.title));
  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>\n",
                     num(ox + kLeft), num(oy + kTop), num(pw), num(ph));

  // X ticks: the distinct data values on a log2 axis, round numbers otherwise.
  std::vector<double> xt;
  if (panel.log2_x) {
    for (const auto& s : panel.series) xt.insert(xt.end(), s.x.begin(), s.x.end());
    std::sort(xt.begin(), xt.end());
    xt.erase(std::unique(xt.begin(), xt.end()), xt.end());
  } else {
    xt = nice_ticks(xr.lo, xr.hi);
  }
  for (double v : xt) {
    const double x = px(v);
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#999\"/>"
                       "<text x=\"{0}\" y=\"{3}\" text-anchor=\"middle\" font-size=\"10\">{4}</text>\n",
                       num(x), num(oy + kTop + ph), num(oy + kTop + ph + 4), num(oy + kTop + ph + 15), tick_label(v));
  }
  std::vector<double> yt = nice_ticks(yr.lo, yr.hi);
  if (panel.log10_y) {
    // Whole decades when the range holds two or more, otherwise round values.
    std::vector<double> decades;
    for (double e = std::ceil(yr.lo); e <= yr.hi; e += 1.0) decades.push_back(std::pow(10.0, e));
    if (decades.size() >= 2) {
      yt = decades;
    } else {
      yt = nice_ticks(std::pow(10.0, yr.lo), std::pow(10.0, yr.hi));
      std::erase_if(yt, [](double v) { return !(v > 0); });
    }
  }
  for (double v : yt) {
    const double y = py(v);
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#999\"/>"
                       "<text x=\"{3}\" y=\"{4}\" text-anchor=\"end\" font-size=\"10\">{5}</text>\n",
                       num(ox + kLeft - 4), num(y), num(ox + kLeft), num(ox + kLeft - 6), num(y + 3), tick_label(v));
  }
  if (panel.zero_line && !panel.log10_y && yr.lo < 0.0 && yr.hi > 0.0) {
    svg += fmt::format("<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"#bbb\" stroke-dasharray=\"2,2\"/>\n",
                       num(ox + kLeft), num(ox + kLeft + pw), num(py(0.0)));
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
                     num(ox + kLeft + pw / 2), num(oy + kPanelH - 8), escape(panel.xlabel));
  svg += fmt::format("<text transform=\"translate({},{}) rotate(-90)\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
                     num(ox + 14), num(oy + kTop + ph / 2), escape(panel.ylabel));

  for (std::size_t k = 0; k < panel.series.size(); ++k) {
    const Series& s = panel.series[k];
    if (s.y.size() != s.x.size() || (!s.lo.empty() && (s.lo.size() != s.x.size() || s.hi.size() != s.x.size()))) {
      throw ValidationError("series '" + s.label + "' has mismatched lengths");
    }
    const char* color = kPalette[static_cast<std::size_t>(s.color >= 0 ? s.color : static_cast<int>(k)) % 8];
    const std::string dash = s.dashed ? " stroke-dasharray=\"5,3\"" : "";
    std::string points;
    auto flush = [&] {
      if (points.find(' ') != std::string::npos) {
        svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{} points=\"{}\"/>\n", color, dash,
                           points);
      }
      points.clear();
    };
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) {
        flush();
        continue;
      }
      points += (points.empty() ? "" : " ") + num(px(s.x[i])) + "," + num(py(s.y[i]));
    }
    flush();
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      const double x = px(s.x[i]);
      if (!s.lo.empty()) {
        svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"{3}\"/>"
                           "<line x1=\"{4}\" y1=\"{1}\" x2=\"{5}\" y2=\"{1}\" stroke=\"{3}\"/>"
                           "<line x1=\"{4}\" y1=\"{2}\" x2=\"{5}\" y2=\"{2}\" stroke=\"{3}\"/>\n",
                           num(x), num(py(s.lo[i])), num(py(s.hi[i])), color, num(x - 3), num(x + 3));
      }
      if (s.markers) {
        svg += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>\n", num(x), num(py(s.y[i])), color);
      }
    }
    // Legend, top right.
    const double ly = oy + kTop + 12 + 13 * static_cast<double>(k);
    const double lx = ox + kLeft + pw - 90;
    svg += fmt::format("<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"{3}\" stroke-width=\"1.5\"{4}/>"
                       "<text x=\"{5}\" y=\"{6}\" font-size=\"10\">{7}</text>\n",
                       num(lx), num(lx + 14), num(ly), color, dash, num(lx + 18), num(ly + 3), escape(s.label));
  }
  svg += "</g>\n";
}

}  // namespace

std::string render_svg(const Figure& figure) {
  const int cols = std::max(1, figure.columns);
  const int n = static_cast<int>(figure.panels.size());
  const int rows = std::max(1, (n + cols - 1) / cols);
  const double width = kPanelW * std::min(cols, std::max(n, 1));
  const double height = kTitleH + kPanelH * rows;

  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  if (!figure.stamps.empty()) {
    svg += "<!--";
    for (const auto& [k, v] : figure.stamps) svg += " " + k + "=" + v;
    svg += " -->\n";
  }
  svg += fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
                     "font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
                     num(width), num(height));
  svg += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", num(width / 2),
                     escape(figure.title));
  for (int i = 0; i < n; ++i) {
    render_panel(svg, figure.panels[static_cast<std::size_t>(i)], kPanelW * (i % cols), kTitleH + kPanelH * (i / cols));
  }
  svg += "</svg>\n";
  return svg;
}

void write_svg(const std::filesystem::path& path, const Figure& figure) {
  const std::string svg = render_svg(figure);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << svg;
}

}  // namespace tokgran
