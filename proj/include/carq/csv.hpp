#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "carq/errors.hpp"

namespace carq {

// Shortest round-trip decimal form; locale-independent.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_int(std::int64_t v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Minimal numeric CSV table: a header row of column names followed by
// comma-separated numeric rows. No quoting or embedded commas.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column_index(const std::string& name) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j] == name) return static_cast<int>(j);
    return -1;
  }

  std::vector<double> column(const std::string& name) const {
    int j = column_index(name);
    if (j < 0) throw data_error("csv: missing column '" + name + "'");
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(row[static_cast<std::size_t>(j)]);
    return out;
  }
};

inline double parse_double_field(const std::string& field, std::size_t line_no) {
  std::size_t begin = field.find_first_not_of(" \t\r");
  if (begin == std::string::npos)
    throw data_error("csv: empty numeric field on line " + std::to_string(line_no));
  std::size_t end = field.find_last_not_of(" \t\r") + 1;
  double value = 0.0;
  auto res = std::from_chars(field.data() + begin, field.data() + end, value);
  if (res.ec != std::errc() || res.ptr != field.data() + end)
    throw data_error("csv: bad numeric field '" + field + "' on line " + std::to_string(line_no));
  return value;
}

inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    if (line_no == 1) {
      for (auto& f : fields) {
        std::size_t b = f.find_first_not_of(" \t\r");
        std::size_t e = f.find_last_not_of(" \t\r");
        table.columns.push_back(b == std::string::npos ? "" : f.substr(b, e - b + 1));
      }
      continue;
    }
    if (fields.size() != table.columns.size())
      throw data_error("csv: line " + std::to_string(line_no) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(table.columns.size()));
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_double_field(f, line_no));
    table.rows.push_back(std::move(row));
  }
  if (table.columns.empty()) throw data_error("csv: empty file");
  return table;
}

}  // namespace carq
