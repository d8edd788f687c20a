#ifndef SLRVB_DATA_IO_HPP
#define SLRVB_DATA_IO_HPP

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "slrvb/errors.hpp"

namespace slrvb {

namespace io_detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace io_detail

/// Shortest decimal text that round-trips the double.
inline std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

/// One-column series; an optional first row "y" is treated as a header.
inline std::vector<double> parse_series_csv(std::istream& in) {
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view s = io_detail::trim(line);
    if (s.empty()) continue;
    if (out.empty() && lineno == 1 && s == "y") continue;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw SchemaError("series CSV line " + std::to_string(lineno) + ": expected a single number, got '" +
                        std::string(s) + "'");
    out.push_back(v);
  }
  return out;
}

inline std::vector<double> read_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return parse_series_csv(in);
}

inline void write_series_csv(std::ostream& out, const std::vector<double>& y) {
  out << "y\n";
  for (double v : y) out << format_double(v) << '\n';
}

inline void write_series_csv(const std::string& path, const std::vector<double>& y) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_series_csv(out, y);
}

/// Matrix of draws with a header row of column names.
inline void write_table_csv(std::ostream& out, const std::vector<std::string>& header,
                            const std::vector<std::vector<double>>& rows) {
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << format_double(r[j]);
    out << '\n';
  }
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline Table parse_table_csv(std::istream& in) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view s = io_detail::trim(line);
    if (s.empty()) continue;
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = s.find(',', start);
      cells.push_back(io_detail::trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (t.header.empty()) {
      for (auto c : cells) t.header.emplace_back(c);
      continue;
    }
    if (cells.size() != t.header.size())
      throw SchemaError("CSV line " + std::to_string(lineno) + ": " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(t.header.size()));
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      auto [ptr, ec] = std::from_chars(cells[j].data(), cells[j].data() + cells[j].size(), row[j]);
      if (ec != std::errc() || ptr != cells[j].data() + cells[j].size())
        throw SchemaError("CSV line " + std::to_string(lineno) + ": '" + std::string(cells[j]) + "' is not a number");
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw SchemaError("CSV has no header row");
  return t;
}

}  // namespace slrvb

#endif  // SLRVB_DATA_IO_HPP
