#pragma once

#include "elto/common.hpp"
#include "elto/time_series.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace elto {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_cell(std::string_view cell, std::size_t line) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size())
    throw ParseError("non-numeric cell '" + std::string(cell) + "'", line);
  return v;
}

/// Reads `key=value` pairs from a `# system=... dt=... seed=...` line.
inline void parse_metadata(std::string_view body, TimeSeries& ts, bool& have_dt) {
  std::istringstream in{std::string(body)};
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    try {
      if (key == "system") ts.system_tag = value;
      else if (key == "dt") {
        ts.dt = std::stod(value);
        have_dt = true;
      } else if (key == "seed") ts.seed = std::stoull(value);
      else ts.noise_meta[key] = std::stod(value);
    } catch (const std::exception&) {
      // unknown annotations are ignored
    }
  }
}

}  // namespace detail

struct CsvOptions {
  double dt = 1.0;
  bool has_header = false;
  bool center = false;  ///< subtract each column's mean
};

/// Comma-separated numeric rows. Lines starting with '#' are comments; a
/// `# system=... dt=... seed=...` comment restores metadata, and an explicit
/// metadata dt overrides `opts.dt`.
inline TimeSeries load_csv(std::istream& in, const CsvOptions& opts = {}) {
  TimeSeries ts;
  ts.dt = opts.dt;
  bool have_dt = false;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = opts.has_header;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view v = detail::trim(line);
    if (v.empty()) continue;
    if (v.front() == '#') {
      v.remove_prefix(1);
      detail::parse_metadata(v, ts, have_dt);
      continue;
    }
    if (header_pending) {
      header_pending = false;
      continue;
    }
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const auto comma = v.find(',', start);
      row.push_back(detail::parse_cell(v.substr(start, comma - start), line_no));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError("ragged row: expected " + std::to_string(rows.front().size()) +
                           " columns, found " + std::to_string(row.size()),
                       line_no);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("no data rows");
  ts.data.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      ts.data(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  if (opts.center) ts.data.rowwise() -= ts.data.colwise().mean();
  if (!have_dt) ts.dt = opts.dt;
  ts.validate();
  return ts;
}

inline TimeSeries load_csv(const std::string& path, const CsvOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open '" + path + "'");
  return load_csv(in, opts);
}

inline TimeSeries load_csv(const std::string& path, double dt, bool has_header) {
  return load_csv(path, CsvOptions{dt, has_header, false});
}

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_csv(std::ostream& out, const TimeSeries& ts) {
  out << "# system=" << (ts.system_tag.empty() ? "unknown" : ts.system_tag)
      << " dt=" << format_double(ts.dt) << " seed=" << ts.seed;
  for (const auto& [k, v] : ts.noise_meta) out << ' ' << k << '=' << format_double(v);
  out << '\n';
  for (Index t = 0; t < ts.data.rows(); ++t) {
    for (Index c = 0; c < ts.data.cols(); ++c) {
      if (c) out << ',';
      out << format_double(ts.data(t, c));
    }
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const TimeSeries& ts) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write '" + path + "'");
  write_csv(out, ts);
}

}  // namespace elto
