#pragma once
// Static SVG line plots arranged as small multiples.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tokgran {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;   // NaN leaves a gap in the line
  std::vector<double> lo;  // error bars; empty for none
  std::vector<double> hi;
  bool markers = true;
  bool dashed = false;
  int color = -1;  // palette index; -1 picks by position
};

struct Panel {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool log2_x = false;
  bool zero_line = false;
  bool log10_y = false;
  std::vector<Series> series;
};

struct Figure {
  std::string title;
  int columns = 1;
  std::vector<Panel> panels;
  std::map<std::string, std::string> stamps;  // written as an XML comment
};

std::string render_svg(const Figure& figure);
void write_svg(const std::filesystem::path& path, const Figure& figure);

}  // namespace tokgran
