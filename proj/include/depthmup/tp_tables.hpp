#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

// Tables shared by the linear and nonlinear infinite-width limit engines.
//
// Base random variables at layer m: the forward hat variable of step s (b = 0), the
// backward hat variable of step s (b = 1), and the two input/output vectors |U>, |nV>
// (stored under r = -1). Every forward ket x_t^l (a = 0) and backward ket dx_t^l
// (a = 1) is a linear combination of them; GammaTable holds those coefficients with the
// sqrt(L) normalization for r >= 0.
namespace depthmup::tp {

enum class Precision { F64, F32 };

std::string_view to_string(Precision p);
Precision parse_precision(std::string_view s);

struct LimitConfig {
  int L = 64;
  int T = 1;
  std::vector<double> xi;  // scalar inputs, one per step
  std::vector<double> y;   // scalar targets, one per step
  double alpha = 0.5;
  double gamma = 0.5;
  double eta = 1.0;
  Precision precision = Precision::F64;
  /// chi_t = loss'(t, f_t). Empty means squared loss, chi = f - y_t.
  std::function<double(int, double)> loss_derivative;

  int max_L = 512;
  int max_T = 10;
  std::size_t memory_budget_bytes = std::size_t{1536} << 20;

  void validate() const;
  double chi(int t, double f) const;
};

/// Bytes needed for the Gamma table of an (L, T) run at the given precision.
std::size_t gamma_table_bytes(int L, int T, Precision p);
/// Throws CapacityError if the run exceeds max_L, max_T or the memory budget.
void check_capacity(const LimitConfig& cfg);

class GammaTable {
 public:
  GammaTable() = default;
  GammaTable(int L, int T, Precision p);

  int L() const { return L_; }
  int T() const { return T_; }
  Precision precision() const { return precision_; }

  /// Coefficient vector of ket (t, a, l), layout [r = -1..t][b][m = 1..L]. The r = -1 block
  /// is replicated across m.
  std::size_t ket_size(int t) const { return static_cast<std::size_t>(t + 2) * 2 * L_; }
  std::size_t index(int r, int b, int m) const {
    return (static_cast<std::size_t>(r + 1) * 2 + b) * L_ + (m - 1);
  }
  template <class S>
  S* ket(int t, int a, int l) {
    if constexpr (std::is_same_v<S, double>) {
      return d_.data() + offset(t, a, l);
    } else {
      return f_.data() + offset(t, a, l);
    }
  }
  template <class S>
  const S* ket(int t, int a, int l) const {
    return const_cast<GammaTable*>(this)->ket<S>(t, a, l);
  }

  /// Gamma_{t, r, a, b}(l, m): normalized for r >= 0, raw for r = -1 (m ignored).
  double operator()(int t, int r, int a, int b, int l, int m) const;

 private:
  std::size_t offset(int t, int a, int l) const;

  int L_ = 0;
  int T_ = 0;
  Precision precision_ = Precision::F64;
  std::vector<double> d_;
  std::vector<float> f_;
};

/// C[t][s][a][l], t, s in -1..T-1, a in {0, 1}, l in 1..L.
/// a = 0: <x_t^{l-1} | x_s^{l-1}>. a = 1: <dx_t^l | dx_s^l>.
class CTable {
 public:
  CTable() = default;
  CTable(int L, int T);

  int L() const { return L_; }
  int T() const { return T_; }
  double operator()(int t, int s, int a, int l) const { return v_[index(t, s, a, l)]; }
  void set_symmetric(int t, int s, int a, int l, double value);

 private:
  std::size_t index(int t, int s, int a, int l) const;

  int L_ = 0;
  int T_ = 0;
  std::vector<double> v_;
};

/// <x_t^l | x_s^l> for l = 0..L.
class FeatureCov {
 public:
  FeatureCov() = default;
  FeatureCov(int L, int T) : L_(L), T_(T), v_(static_cast<std::size_t>(T) * T * (L + 1), 0.0) {}

  double operator()(int t, int s, int l) const { return v_[(static_cast<std::size_t>(t) * T_ + s) * (L_ + 1) + l]; }
  void set_symmetric(int t, int s, int l, double value) {
    v_[(static_cast<std::size_t>(t) * T_ + s) * (L_ + 1) + l] = value;
    v_[(static_cast<std::size_t>(s) * T_ + t) * (L_ + 1) + l] = value;
  }

 private:
  int L_ = 0;
  int T_ = 0;
  std::vector<double> v_;
};

struct LimitTrace {
  std::vector<double> f_ring;
  std::vector<double> chi_ring;
  std::vector<std::vector<double>> layer_rms;  // [t][l], l = 0..L
};

struct LimitResult {
  LimitConfig cfg;
  GammaTable gamma;
  CTable C;
  FeatureCov xcov;
  LimitTrace trace;
};

void write_rms_csv(const std::string& path, const LimitResult& r);
void write_kernel_csv(const std::string& path, const LimitResult& r);
void write_trace_csv(const std::string& path, const LimitResult& r);

inline constexpr char kTableMagic[8] = {'D', 'M', 'U', 'P', 'G', 'A', 'M', 'C'};
inline constexpr std::uint32_t kTableVersion = 1;

/// Header (magic, u32 version, i32 L, i32 T, u8 precision), then Gamma in row-major
/// [t][r = -1..t][a][b][l = 0..L][m = 1..L] at the table precision, then C as f64 in
/// [t][s][a][l] order with t, s from -1.
void write_binary_dump(const std::string& path, const LimitResult& r);

struct TableDump {
  int L = 0;
  int T = 0;
  Precision precision = Precision::F64;
  std::vector<double> gamma;  // flattened in dump order
  std::vector<double> C;
};
TableDump read_binary_dump(const std::string& path);

}  // namespace depthmup::tp
