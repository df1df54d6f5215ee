#include "depthmup/csv.hpp"

#include <cmath>
#include <iomanip>
#include <locale>
#include <sstream>
#include <stdexcept>

namespace depthmup {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

std::string csv_join(const std::vector<CsvField>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    std::visit(
        [&](const auto& v) {
          using V = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<V, std::string>) {
            if (v.find_first_of(",\"\n") == std::string::npos) {
              out += v;
            } else {
              out += '"';
              for (char c : v) {
                if (c == '"') out += '"';
                out += c;
              }
              out += '"';
            }
          } else if constexpr (std::is_same_v<V, double>) {
            out += format_double(v);
          } else {
            out += std::to_string(v);
          }
        },
        fields[i]);
  }
  return out;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : os_(path), columns_(header.size()) {
  if (!os_) throw std::runtime_error("cannot open for writing: " + path);
  std::vector<CsvField> h(header.begin(), header.end());
  os_ << csv_join(h) << '\n';
}

void CsvWriter::row(const std::vector<CsvField>& fields) {
  if (fields.size() != columns_) throw std::logic_error("CsvWriter: row width differs from header");
  os_ << csv_join(fields) << '\n';
  if (!os_) throw std::runtime_error("CsvWriter: write failed");
}

}  // namespace depthmup
