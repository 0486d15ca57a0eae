#pragma once

#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "uarpo/errors.hpp"

namespace uarpo {

struct CsvColumnMap {
  std::string time_col = "timestamp";
  std::string close_col = "close";
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline bool parse_number(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

}  // namespace detail

// Close series from a headered CSV, in file order. Timestamps must be
// strictly increasing; numeric timestamps compare numerically, anything
// else lexicographically (ISO dates sort correctly either way). Row numbers
// in diagnostics are 1-based data rows.
inline std::vector<float> ingest_csv(const std::string& path, const CsvColumnMap& cols = {}) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw ConfigError(path + ": no data rows");
  const auto header = detail::split_csv_line(line);
  int time_ix = -1, close_ix = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == cols.time_col) time_ix = static_cast<int>(i);
    if (header[i] == cols.close_col) close_ix = static_cast<int>(i);
  }
  if (time_ix < 0) throw ConfigError(path + ": missing column '" + cols.time_col + "'");
  if (close_ix < 0) throw ConfigError(path + ": missing column '" + cols.close_col + "'");

  std::vector<float> series;
  bool have_prev = false;
  bool prev_numeric = false;
  double prev_num = 0.0;
  std::string prev_str;
  int row = 0;
  while (std::getline(f, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto fields = detail::split_csv_line(line);
    if (static_cast<int>(fields.size()) <= std::max(time_ix, close_ix))
      throw ConfigError(path + ": row " + std::to_string(row) + ": too few columns");
    const std::string& ts = fields[static_cast<size_t>(time_ix)];
    double ts_num = 0.0;
    const bool is_num = detail::parse_number(ts, &ts_num);
    if (have_prev) {
      const bool increasing = (is_num && prev_numeric) ? ts_num > prev_num : ts > prev_str;
      if (!increasing)
        throw ConfigError(path + ": non-monotone timestamp at row " + std::to_string(row));
    }
    have_prev = true;
    prev_numeric = is_num;
    prev_num = ts_num;
    prev_str = ts;
    double close = 0.0;
    if (!detail::parse_number(fields[static_cast<size_t>(close_ix)], &close))
      throw ConfigError(path + ": row " + std::to_string(row) + " column '" + cols.close_col +
                        "': cannot parse '" + fields[static_cast<size_t>(close_ix)] + "'");
    series.push_back(static_cast<float>(close));
  }
  if (series.empty()) throw ConfigError(path + ": no data rows");
  return series;
}

}  // namespace uarpo
