#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace povmap::csv {

/// A parsed comma-separated file. Lines starting with '#' (manifests) and
/// blank lines are skipped; the first remaining line is the header.
struct Table {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based line number in the source file for each row.
  std::vector<std::size_t> lines;

  /// Index of a named column; throws SchemaError when absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  /// "file:line" for diagnostics.
  std::string where(std::size_t row) const;
};

Table read(const std::filesystem::path& path);
Table parse(std::istream& in, std::string source);

/// Throws SchemaError unless the header starts with exactly these names.
void require_header(const Table& t, const std::vector<std::string>& expected);

double to_double(const Table& t, std::size_t row, std::size_t col);
long long to_int(const Table& t, std::size_t row, std::size_t col);
/// Empty fields parse as NaN.
double to_optional_double(const Table& t, std::size_t row, std::size_t col);

/// Shortest representation that round-trips exactly (std::to_chars).
std::string format(double v);

/// Writes rows with a manifest comment as the first line.
class Writer {
public:
  Writer(const std::filesystem::path& path, std::string_view manifest);
  void row(const std::vector<std::string>& fields);
  void close();

private:
  std::filesystem::path path_;
  std::ofstream out_;
};

} // namespace povmap::csv
