#include "depthmup/tp_tables.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "depthmup/binary_io.hpp"
#include "depthmup/csv.hpp"
#include "depthmup/errors.hpp"

namespace depthmup::tp {

std::string_view to_string(Precision p) { return p == Precision::F64 ? "f64" : "f32"; }

Precision parse_precision(std::string_view s) {
  if (s == "f64" || s == "double") return Precision::F64;
  if (s == "f32" || s == "float") return Precision::F32;
  throw ConfigError("unknown precision '" + std::string(s) + "' (expected f64|f32)");
}

void LimitConfig::validate() const {
  if (L < 1) throw DomainError("LimitConfig: L must be >= 1");
  if (T < 1) throw DomainError("LimitConfig: T must be >= 1");
  if (static_cast<int>(xi.size()) != T || static_cast<int>(y.size()) != T) {
    throw ConfigError("LimitConfig: xi and y must both have T = " + std::to_string(T) + " entries");
  }
  if (!std::isfinite(alpha) || !std::isfinite(gamma) || !std::isfinite(eta)) {
    throw DomainError("LimitConfig: alpha, gamma, eta must be finite");
  }
  for (double v : xi) {
    if (!std::isfinite(v)) throw DomainError("LimitConfig: non-finite input");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw DomainError("LimitConfig: non-finite target");
  }
}

double LimitConfig::chi(int t, double f) const {
  if (loss_derivative) return loss_derivative(t, f);
  return f - y[t];
}

std::size_t gamma_table_bytes(int L, int T, Precision p) {
  const std::size_t l = static_cast<std::size_t>(L);
  const std::size_t t = static_cast<std::size_t>(T);
  const std::size_t entries = 4 * l * (l + 1) * (t * (t + 3) / 2);
  return entries * (p == Precision::F64 ? sizeof(double) : sizeof(float));
}

void check_capacity(const LimitConfig& cfg) {
  if (cfg.L > cfg.max_L) {
    throw CapacityError("limit engine: L = " + std::to_string(cfg.L) + " exceeds the cap max_L = " +
                        std::to_string(cfg.max_L) + "; raise max_L explicitly if memory allows");
  }
  if (cfg.T > cfg.max_T) {
    throw CapacityError("limit engine: T = " + std::to_string(cfg.T) + " exceeds the cap max_T = " +
                        std::to_string(cfg.max_T) + "; raise max_T explicitly if memory allows");
  }
  const std::size_t need = gamma_table_bytes(cfg.L, cfg.T, cfg.precision);
  if (need > cfg.memory_budget_bytes) {
    throw CapacityError("limit engine: Gamma table needs " + std::to_string(need >> 20) +
                        " MiB but the budget is " + std::to_string(cfg.memory_budget_bytes >> 20) +
                        " MiB; lower L or T, switch to f32, or raise the budget");
  }
}

GammaTable::GammaTable(int L, int T, Precision p) : L_(L), T_(T), precision_(p) {
  const std::size_t bytes = gamma_table_bytes(L, T, p);
  if (p == Precision::F64) {
    d_.assign(bytes / sizeof(double), 0.0);
  } else {
    f_.assign(bytes / sizeof(float), 0.0f);
  }
}

std::size_t GammaTable::offset(int t, int a, int l) const {
  const std::size_t L = static_cast<std::size_t>(L_);
  const std::size_t tt = static_cast<std::size_t>(t);
  const std::size_t base = 4 * L * (L + 1) * (tt * (tt + 3) / 2);
  return base + (static_cast<std::size_t>(a) * (L + 1) + static_cast<std::size_t>(l)) * ket_size(t);
}

double GammaTable::operator()(int t, int r, int a, int b, int l, int m) const {
  if (t < 0 || t >= T_ || r < -1 || r > t || a < 0 || a > 1 || b < 0 || b > 1 || l < 0 || l > L_ ||
      m < 1 || m > L_) {
    throw DomainError("GammaTable: index out of range");
  }
  const std::size_t i = offset(t, a, l) + index(r, b, r < 0 ? 1 : m);
  return precision_ == Precision::F64 ? d_[i] : static_cast<double>(f_[i]);
}

CTable::CTable(int L, int T) : L_(L), T_(T), v_(static_cast<std::size_t>(T + 1) * (T + 1) * 2 * L, 0.0) {
  for (int a = 0; a < 2; ++a) {
    for (int l = 1; l <= L; ++l) v_[index(-1, -1, a, l)] = 1.0;
  }
}

std::size_t CTable::index(int t, int s, int a, int l) const {
  if (t < -1 || t >= T_ || s < -1 || s >= T_ || a < 0 || a > 1 || l < 1 || l > L_) {
    throw DomainError("CTable: index out of range");
  }
  return ((static_cast<std::size_t>(t + 1) * (T_ + 1) + (s + 1)) * 2 + a) * L_ + (l - 1);
}

void CTable::set_symmetric(int t, int s, int a, int l, double value) {
  v_[index(t, s, a, l)] = value;
  v_[index(s, t, a, l)] = value;
}

void write_rms_csv(const std::string& path, const LimitResult& r) {
  CsvWriter w(path, {"t", "l", "rms"});
  for (int t = 0; t < r.cfg.T; ++t) {
    for (int l = 0; l <= r.cfg.L; ++l) w.row({t, l, r.trace.layer_rms[t][l]});
  }
}

void write_kernel_csv(const std::string& path, const LimitResult& r) {
  CsvWriter w(path, {"t", "s", "kernel", "c_table_1"});
  for (int t = 0; t < r.cfg.T; ++t) {
    for (int s = 0; s < r.cfg.T; ++s) w.row({t, s, r.xcov(t, s, r.cfg.L), r.C(t, s, 1, r.cfg.L)});
  }
}

void write_trace_csv(const std::string& path, const LimitResult& r) {
  CsvWriter w(path, {"t", "xi", "y", "f", "chi"});
  for (int t = 0; t < r.cfg.T; ++t) {
    w.row({t, r.cfg.xi[t], r.cfg.y[t], r.trace.f_ring[t], r.trace.chi_ring[t]});
  }
}

void write_binary_dump(const std::string& path, const LimitResult& r) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  const GammaTable& g = r.gamma;
  const int L = g.L(), T = g.T();
  os.write(kTableMagic, sizeof(kTableMagic));
  binio::put<std::uint32_t>(os, kTableVersion);
  binio::put<std::int32_t>(os, L);
  binio::put<std::int32_t>(os, T);
  binio::put<std::uint8_t>(os, g.precision() == Precision::F64 ? 0 : 1);
  for (int t = 0; t < T; ++t) {
    for (int rr = -1; rr <= t; ++rr) {
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          for (int l = 0; l <= L; ++l) {
            for (int m = 1; m <= L; ++m) {
              const double v = g(t, rr, a, b, l, m);
              if (g.precision() == Precision::F64) {
                binio::put<double>(os, v);
              } else {
                binio::put<float>(os, static_cast<float>(v));
              }
            }
          }
        }
      }
    }
  }
  for (int t = -1; t < T; ++t) {
    for (int s = -1; s < T; ++s) {
      for (int a = 0; a < 2; ++a) {
        for (int l = 1; l <= L; ++l) binio::put<double>(os, r.C(t, s, a, l));
      }
    }
  }
  if (!os) throw std::runtime_error("failed writing table dump: " + path);
}

TableDump read_binary_dump(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open table dump: " + path);
  char magic[sizeof(kTableMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kTableMagic, sizeof(magic)) != 0) {
    throw ParseError("bad table dump magic", 0);
  }
  if (binio::get<std::uint32_t>(is) != kTableVersion) throw ParseError("unsupported table dump version", 8);
  TableDump d;
  d.L = binio::get<std::int32_t>(is);
  d.T = binio::get<std::int32_t>(is);
  d.precision = binio::get<std::uint8_t>(is) == 0 ? Precision::F64 : Precision::F32;
  if (d.L < 1 || d.T < 1 || d.L > (1 << 14) || d.T > (1 << 10)) throw ParseError("table dims out of range", 12);
  std::size_t ng = 0;
  for (int t = 0; t < d.T; ++t) ng += static_cast<std::size_t>(t + 2) * 4 * (d.L + 1) * d.L;
  d.gamma.resize(ng);
  for (auto& v : d.gamma) {
    v = d.precision == Precision::F64 ? binio::get<double>(is) : static_cast<double>(binio::get<float>(is));
  }
  d.C.resize(static_cast<std::size_t>(d.T + 1) * (d.T + 1) * 2 * d.L);
  for (auto& v : d.C) v = binio::get<double>(is);
  return d;
}

}  // namespace depthmup::tp
