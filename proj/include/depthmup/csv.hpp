#pragma once

#include <fstream>
#include <string>
#include <variant>
#include <vector>

namespace depthmup {

/// 17 significant digits, '.' decimal separator regardless of locale.
std::string format_double(double v);

using CsvField = std::variant<std::string, double, long long, int>;

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);

  void row(const std::vector<CsvField>& fields);

 private:
  std::ofstream os_;
  std::size_t columns_;
};

std::string csv_join(const std::vector<CsvField>& fields);

}  // namespace depthmup
