#include "tokgran/tsv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "tokgran/common.hpp"

namespace tokgran::tsv {

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string format(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void Row::fail(std::size_t column, std::string_view what) const {
  const std::string name = column < header_->size() ? (*header_)[column] : std::to_string(column);
  throw ValidationError(where_ + ": column " + name + ": " + std::string(what) + " '" + fields_.at(column) + "'");
}

long long Row::integer(std::size_t column) const {
  const std::string& s = fields_.at(column);
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail(column, "expected an integer, got");
  return v;
}

double Row::real(std::size_t column) const {
  const std::string& s = fields_.at(column);
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) fail(column, "expected a number, got");
  return v;
}

bool Row::flag(std::size_t column) const {
  const std::string& s = fields_.at(column);
  if (s == "1" || s == "true" || s == "TRUE" || s == "True" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "FALSE" || s == "False" || s == "no" || s.empty()) return false;
  fail(column, "expected a boolean, got");
}

Reader::Reader(const std::filesystem::path& path, const std::vector<std::string>& required) : path_(path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  header_ = split(line);
  for (const auto& r : required) {
    if (column(r) == npos) throw ValidationError(path.string() + ":1: missing column " + r);
  }
}

std::size_t Reader::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  return npos;
}

void Reader::for_each(const std::function<void(const Row&)>& fn) {
  std::ifstream in(path_);
  std::string line;
  std::getline(in, line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line);
    const std::string where = path_.string() + ":" + std::to_string(line_no);
    if (fields.size() != header_.size()) {
      throw ValidationError(where + ": expected " + std::to_string(header_.size()) + " fields, found " +
                            std::to_string(fields.size()));
    }
    fn(Row(&header_, std::move(fields), where));
  }
}

}  // namespace tokgran::tsv
