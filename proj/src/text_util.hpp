#pragma once

// Small text helpers shared by the CSV readers/writers. Not installed.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "sickfuse/errors.hpp"

namespace sickfuse::detail {

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Accepts "nan"/"inf" spellings; callers decide whether non-finite is legal.
inline double parse_double(std::string_view field, std::size_t line) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw ParseError("not a number: '" + std::string(field) + "'", line);
  }
  return v;
}

/// Lines of a CSV file with a required header. Blank lines are skipped.
struct CsvRows {
  std::vector<std::pair<std::size_t, std::vector<std::string_view>>> rows;  // (line number, fields)
  std::string text;
};

inline CsvRows read_csv(const std::filesystem::path& path, std::string_view header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingStreamError("missing stream file: " + path.string());
  CsvRows out;
  out.text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  const std::size_t columns = split(header).size();
  std::string_view rest(out.text);
  std::size_t line_no = 0;
  bool seen_header = false;
  while (!rest.empty()) {
    std::size_t nl = rest.find('\n');
    std::string_view line = trim(rest.substr(0, nl));
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    if (!seen_header) {
      if (line != header) {
        throw ParseError(path.filename().string() + ": expected header '" + std::string(header) + "'", line_no);
      }
      seen_header = true;
      continue;
    }
    auto fields = split(line);
    if (fields.size() != columns) {
      throw ParseError(path.filename().string() + ": expected " + std::to_string(columns) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    out.rows.emplace_back(line_no, std::move(fields));
  }
  if (!seen_header) throw ParseError(path.filename().string() + ": empty file", 1);
  return out;
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace sickfuse::detail
