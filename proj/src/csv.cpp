#include "nmdr/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "nmdr/errors.hpp"

namespace nmdr {

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open CSV file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw data_error("empty CSV file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  CsvTable table;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  if (table.header.empty()) throw data_error("CSV header row is empty: " + path);

  std::vector<std::vector<double>> rows;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
        if (pos != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        std::ostringstream os;
        os << path << ":" << line_no << ": cannot parse '" << cell << "' as a number";
        throw data_error(os.str());
      }
    }
    if (row.size() != table.header.size()) {
      std::ostringstream os;
      os << path << ":" << line_no << ": expected " << table.header.size() << " cells, got "
         << row.size();
      throw data_error(os.str());
    }
    rows.push_back(std::move(row));
  }

  table.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(table.header.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < rows[i].size(); ++j) {
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return table;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Matrix& values) {
  if (static_cast<Eigen::Index>(header.size()) != values.cols()) {
    throw config_error("CSV header width does not match the value matrix");
  }
  std::ofstream out(path);
  if (!out) throw data_error("cannot write CSV file: " + path);
  for (size_t j = 0; j < header.size(); ++j) {
    out << header[j] << (j + 1 < header.size() ? "," : "\n");
  }
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      out << format_double(values(i, j)) << (j + 1 < values.cols() ? "," : "\n");
    }
  }
  if (!out) throw data_error("failed while writing CSV file: " + path);
}

}  // namespace nmdr
