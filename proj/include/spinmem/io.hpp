#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace spinmem {

using json = nlohmann::json;

namespace io {

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Sweep CSV: one row per point, columns (x, mean, stderr).
inline void write_sweep_csv(const std::string& path, const std::string& x_name,
                            const std::vector<double>& x, const std::vector<double>& mean,
                            const std::vector<double>& se) {
  if (x.size() != mean.size() || x.size() != se.size())
    throw std::invalid_argument("sweep columns must have equal length");
  std::ostringstream os;
  os << x_name << ",mean,stderr\n";
  for (std::size_t i = 0; i < x.size(); ++i)
    os << format_double(x[i]) << ',' << format_double(mean[i]) << ','
       << format_double(se[i]) << '\n';
  write_text(path, os.str());
}

// Series CSV with arbitrary named columns of equal length.
inline void write_columns_csv(const std::string& path,
                              const std::vector<std::string>& names,
                              const std::vector<const std::vector<double>*>& cols) {
  if (names.size() != cols.size() || cols.empty())
    throw std::invalid_argument("column name/count mismatch");
  const std::size_t n = cols[0]->size();
  for (const auto* c : cols)
    if (c->size() != n) throw std::invalid_argument("column length mismatch");
  std::ostringstream os;
  for (std::size_t j = 0; j < names.size(); ++j)
    os << names[j] << (j + 1 == names.size() ? '\n' : ',');
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      os << format_double((*cols[j])[i]) << (j + 1 == cols.size() ? '\n' : ',');
  write_text(path, os.str());
}

// Dense matrix CSV with a header row of column-axis values and a leading
// column of row-axis values.
inline void write_matrix_csv(const std::string& path, const std::string& corner,
                             const std::vector<double>& row_axis,
                             const std::vector<double>& col_axis,
                             const std::vector<double>& values_row_major) {
  if (values_row_major.size() != row_axis.size() * col_axis.size())
    throw std::invalid_argument("matrix size mismatch");
  std::ostringstream os;
  os << corner;
  for (double c : col_axis) os << ',' << format_double(c);
  os << '\n';
  for (std::size_t i = 0; i < row_axis.size(); ++i) {
    os << format_double(row_axis[i]);
    for (std::size_t j = 0; j < col_axis.size(); ++j)
      os << ',' << format_double(values_row_major[i * col_axis.size() + j]);
    os << '\n';
  }
  write_text(path, os.str());
}

// Reads numeric CSV columns, skipping a single non-numeric header line.
inline std::vector<std::vector<double>> read_csv_columns(const std::string& path,
                                                         std::size_t min_cols) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<std::vector<double>> cols;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
      } catch (...) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (line_no <= 1) continue;  // header
      throw std::runtime_error(path + ": non-numeric data at line " +
                               std::to_string(line_no));
    }
    if (row.size() < min_cols)
      throw std::runtime_error(path + ": expected at least " + std::to_string(min_cols) +
                               " columns at line " + std::to_string(line_no));
    if (cols.empty()) cols.resize(row.size());
    for (std::size_t j = 0; j < cols.size() && j < row.size(); ++j)
      cols[j].push_back(row[j]);
  }
  if (cols.empty()) throw std::runtime_error(path + ": no data rows");
  return cols;
}

// Every stochastic artifact gets a sidecar with the seed and the configuration
// echo, so a run can be reproduced from its outputs alone.
inline void write_sidecar(const std::string& artifact_path, const json& config_echo) {
  json side;
  side["artifact"] = artifact_path;
  side["config"] = config_echo;
  side["commit"] = "unversioned";
  write_text(artifact_path + ".meta.json", side.dump(2) + "\n");
}

}  // namespace io
}  // namespace spinmem
