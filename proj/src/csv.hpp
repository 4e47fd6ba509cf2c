#pragma once

// Minimal comma-separated reader for the project's unquoted CSV formats.

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "claws/errors.hpp"

namespace claws::csv {

struct Row {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Reads `path`, checks its header line and returns the data rows. Blank
/// lines are skipped; every row must have as many fields as the header.
inline std::vector<Row> read(const std::filesystem::path& path, std::string_view header) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  std::string line;
  std::size_t line_no = 0;
  std::vector<Row> rows;
  bool seen_header = false;
  const std::size_t width = split(header).size();
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!seen_header) {
      if (line != header) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected header \"" +
                          std::string(header) + "\"");
      }
      seen_header = true;
      continue;
    }
    Row row{line_no, split(line)};
    if (row.fields.size() != width) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(width) + " fields, got " +
                        std::to_string(row.fields.size()));
    }
    rows.push_back(std::move(row));
  }
  if (!seen_header) throw FormatError(path.string() + ": empty file, missing header");
  return rows;
}

template <typename T>
T parse_number(const std::string& text, const std::filesystem::path& path, std::size_t line,
               const char* what) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw FormatError(path.string() + ":" + std::to_string(line) + ": invalid " + what + " \"" +
                      text + "\"");
  }
  return value;
}

}  // namespace claws::csv
