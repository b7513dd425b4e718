#pragma once

#include <string>
#include <vector>

#include "nmdr/numerics.hpp"

namespace nmdr {

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;

  int column(const std::string& name) const;  // -1 when absent
};

// Comma-separated, '.' decimal, mandatory header, numeric body.
CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Matrix& values);

// Shortest round-trip representation; identical across runs.
std::string format_double(double v);

}  // namespace nmdr
