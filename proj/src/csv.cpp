#include "povmap/csv.hpp"

#include "povmap/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/core.h>

namespace povmap::csv {

namespace {

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

} // namespace

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) {
      return i;
    }
  }
  throw SchemaError(fmt::format("{}: missing column '{}'", source, name));
}

bool Table::has_column(std::string_view name) const {
  for (const auto& h : header) {
    if (h == name) {
      return true;
    }
  }
  return false;
}

std::string Table::where(std::size_t row) const {
  return fmt::format("{}:{}", source, lines.at(row));
}

Table parse(std::istream& in, std::string source) {
  Table t;
  t.source = std::move(source);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty() || line.front() == '#') {
      continue;
    }
    auto fields = split(line);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw SchemaError(fmt::format("{}:{}: expected {} fields, found {}", t.source, line_no,
                                    t.header.size(), fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.lines.push_back(line_no);
  }
  if (!have_header) {
    throw SchemaError(fmt::format("{}: missing header line", t.source));
  }
  return t;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(fmt::format("cannot open input file '{}'", path.string()));
  }
  return parse(in, path.filename().string());
}

void require_header(const Table& t, const std::vector<std::string>& expected) {
  if (t.header.size() < expected.size()) {
    throw SchemaError(fmt::format("{}: expected {} columns, header has {}", t.source,
                                  expected.size(), t.header.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (t.header[i] != expected[i]) {
      throw SchemaError(fmt::format("{}: column {} should be '{}', found '{}'", t.source, i + 1,
                                    expected[i], t.header[i]));
    }
  }
}

double to_double(const Table& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw SchemaError(
        fmt::format("{}: column '{}' is not a finite number: '{}'", t.where(row), t.header[col], s));
  }
  return v;
}

long long to_int(const Table& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw SchemaError(
        fmt::format("{}: column '{}' is not an integer: '{}'", t.where(row), t.header[col], s));
  }
  return v;
}

double to_optional_double(const Table& t, std::size_t row, std::size_t col) {
  if (t.rows[row][col].empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return to_double(t, row, col);
}

std::string format(double v) {
  if (std::isnan(v)) {
    return "nan";
  }
  if (v == 0.0) {
    return "0";
  }
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

Writer::Writer(const std::filesystem::path& path, std::string_view manifest)
    : path_(path), out_(path, std::ios::binary) {
  if (!out_) {
    throw Error(fmt::format("cannot write output file '{}'", path.string()));
  }
  if (!manifest.empty()) {
    out_ << manifest << '\n';
  }
}

void Writer::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) {
      out_ << ',';
    }
    out_ << fields[i];
  }
  out_ << '\n';
}

void Writer::close() {
  out_.close();
  if (!out_) {
    throw Error(fmt::format("failed writing '{}'", path_.string()));
  }
}

} // namespace povmap::csv
