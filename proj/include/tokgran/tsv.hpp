#pragma once
// Tab-separated files with a header row. Parse errors carry file:line.

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace tokgran::tsv {

class Row {
 public:
  Row(const std::vector<std::string>* header, std::vector<std::string> fields, std::string where)
      : header_(header), fields_(std::move(fields)), where_(std::move(where)) {}

  const std::string& at(std::size_t column) const { return fields_.at(column); }
  const std::string& where() const { return where_; }

  std::string str(std::size_t column) const { return fields_.at(column); }
  long long integer(std::size_t column) const;
  double real(std::size_t column) const;
  /// Accepts 1/0, true/false, yes/no, TRUE/FALSE.
  bool flag(std::size_t column) const;

 private:
  [[noreturn]] void fail(std::size_t column, std::string_view what) const;

  const std::vector<std::string>* header_;
  std::vector<std::string> fields_;
  std::string where_;
};

class Reader {
 public:
  /// Opens `path` and checks that every name in `required` is a column.
  Reader(const std::filesystem::path& path, const std::vector<std::string>& required);

  /// Column index, or npos when absent.
  std::size_t column(std::string_view name) const;
  bool has(std::string_view name) const { return column(name) != npos; }
  const std::vector<std::string>& header() const { return header_; }

  /// Streams rows; blank lines are skipped.
  void for_each(const std::function<void(const Row&)>& fn);

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::filesystem::path path_;
  std::vector<std::string> header_;
};

std::vector<std::string> split(std::string_view line, char sep = '\t');

/// Shortest text that parses back to the same double.
std::string format(double v);

}  // namespace tokgran::tsv
