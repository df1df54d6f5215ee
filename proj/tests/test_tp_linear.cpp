#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "depthmup/diagnostics.hpp"
#include "depthmup/errors.hpp"
#include "depthmup/experiments.hpp"
#include "depthmup/rng.hpp"
#include "depthmup/tp_linear.hpp"
#include "depthmup/wide_sim.hpp"

using namespace depthmup;
using namespace depthmup::tp;

namespace {

LimitConfig config(int L, int T) {
  LimitConfig c;
  c.L = L;
  c.T = T;
  exp::bounded_stream(T, c.xi, c.y);
  return c;
}

sim::WideSimConfig wide(int n, const LimitConfig& c) {
  sim::WideSimConfig w;
  w.n = n;
  w.L = c.L;
  w.p = depth_mup_preset(RuleKind::SGD, 1.0, 1.0, 1);
  w.xi = c.xi;
  w.y = c.y;
  return w;
}

}  // namespace

TEST_CASE("initial output and loss derivative") {
  const LimitResult r = run_depth_mup(config(8, 3));
  CHECK(r.trace.f_ring[0] == 0.0);
  CHECK(r.trace.chi_ring[0] == doctest::Approx(-r.cfg.y[0]).epsilon(1e-15));
  for (int t = 0; t < 3; ++t) CHECK(r.trace.chi_ring[t] == doctest::Approx(r.trace.f_ring[t] - r.cfg.y[t]));
}

TEST_CASE("one layer one step") {
  LimitConfig c;
  c.L = 1;
  c.T = 1;
  c.xi = {1.0};
  c.y = {1.0};
  CHECK(layer_rms_limit(run_depth_mup(c), 0, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("layer rms at the first step follows the product formula") {
  const LimitConfig c = config(32, 2);
  const LimitResult r = run_depth_mup(c);
  for (int l = 0; l <= 32; ++l) {
    CHECK(layer_rms_limit(r, 0, l) == doctest::Approx(std::pow(1.0 + 1.0 / 32, l / 2.0) * std::abs(c.xi[0])).epsilon(1e-13));
  }
  CHECK(layer_rms_limit(r, 1, 0) == doctest::Approx(std::abs(c.xi[1])).epsilon(1e-14));
  CHECK_THROWS_AS(layer_rms_limit(r, 2, 0), DomainError);
  CHECK_THROWS_AS(layer_rms_limit(r, 0, 33), DomainError);
}

TEST_CASE("identity rows of Gamma") {
  const int L = 8;
  const LimitResult r = run_depth_mup(config(L, 3));
  for (int t = 0; t < 3; ++t) {
    for (int l = 1; l <= L; ++l) {
      for (int m = 1; m <= L; ++m) {
        CHECK(r.gamma(t, t, 0, 0, l, m) == (l >= m ? 1.0 : 0.0));
        CHECK(r.gamma(t, t, 1, 1, l, m) == (l + 1 <= m ? 1.0 : 0.0));
      }
    }
  }
}

TEST_CASE("C table symmetry and boundary entries") {
  const int L = 16, T = 4;
  const LimitResult r = run_depth_mup(config(L, T));
  for (int a = 0; a < 2; ++a) {
    for (int l = 1; l <= L; ++l) {
      CHECK(r.C(-1, -1, a, l) == 1.0);
      for (int t = 0; t < T; ++t) {
        CHECK(r.C(t, -1, a, l) == 0.0);
        CHECK(r.C(t, t, a, l) >= 0.0);
        for (int s = 0; s < T; ++s) CHECK(std::abs(r.C(t, s, a, l) - r.C(s, t, a, l)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("generalized engine reduces to Depth-muP") {
  LimitConfig c = config(32, 5);
  CHECK(exp::generalized_specialization_error(32, c.xi, c.y) <= 1e-12);
  c.precision = Precision::F32;
  const LimitResult a = run_depth_mup(c), b = run_generalized(c);
  CHECK(std::abs(a.trace.f_ring[4] - b.trace.f_ring[4]) < 1e-4);
  c.alpha = 0.4;
  CHECK_THROWS_AS(run_generalized(c), DomainError);
}

TEST_CASE("generalized exponents") {
  std::vector<std::pair<double, double>> pts;
  for (int L = 16; L <= 512; L *= 2) {
    LimitConfig c = config(L, 2);
    c.alpha = 0.75;
    c.gamma = 0.75;
    pts.emplace_back(L, std::abs(run_generalized(c).trace.f_ring[1]));
  }
  CHECK(std::abs(diag::fit_power_law(pts).exponent + 0.5) <= 0.1);

  // ODE regime: |f_1| settles to a depth-independent constant.
  std::vector<double> f;
  for (int L = 16; L <= 256; L *= 2) {
    LimitConfig c = config(L, 2);
    c.alpha = 1.0;
    c.gamma = 0.0;
    f.push_back(std::abs(run_generalized(c).trace.f_ring[1]));
  }
  for (std::size_t i = 2; i < f.size(); ++i) {
    CHECK(std::abs(f[i] - f[i - 1]) < std::abs(f[i - 1] - f[i - 2]));
  }
  CHECK(std::abs(f.back() / f[f.size() - 2] - 1.0) < 0.02);
}

TEST_CASE("output kernel") {
  const LimitResult r = run_depth_mup(config(16, 4));
  const double rms = layer_rms_limit(r, 0, 16);
  CHECK(output_kernel(r, 0, 0).kernel == doctest::Approx(rms * rms).epsilon(1e-13));
  CHECK(output_kernel(r, 1, 2).c_table_value == doctest::Approx(r.trace.chi_ring[1] * r.trace.chi_ring[2]));
  const auto K = output_kernel_matrix(r);
  for (int t = 0; t < 4; ++t) {
    for (int s = 0; s < 4; ++s) CHECK(K[t][s] == K[s][t]);
  }
  std::vector<double> xi, y;
  exp::bounded_stream(6, xi, y);
  CHECK(exp::output_kernel_min_eigenvalue(Nonlinearity::Identity, 32, xi, y) >= -1e-10);
}

TEST_CASE("capacity is checked before allocation") {
  LimitConfig c = config(4096, 10);
  CHECK_THROWS_AS(run_depth_mup(c), CapacityError);
  c = config(512, 10);
  c.memory_budget_bytes = 1 << 20;
  CHECK_THROWS_AS(run_depth_mup(c), CapacityError);
  CHECK(gamma_table_bytes(256, 10, Precision::F32) * 2 == gamma_table_bytes(256, 10, Precision::F64));
  c = config(8, 11);
  CHECK_THROWS_AS(run_depth_mup(c), CapacityError);
  c = config(8, 3);
  c.y.pop_back();
  CHECK_THROWS(run_depth_mup(c));
}

TEST_CASE("pluggable loss derivative") {
  LimitConfig c = config(8, 3);
  c.loss_derivative = [](int, double f) { return 2.0 * f - 1.0; };
  const LimitResult r = run_depth_mup(c);
  CHECK(r.trace.chi_ring[0] == -1.0);
  CHECK(r.trace.chi_ring[2] == doctest::Approx(2.0 * r.trace.f_ring[2] - 1.0));
}

TEST_CASE("exports") {
  const LimitResult r = run_depth_mup(config(4, 2));
  const auto dir = std::filesystem::temp_directory_path() / "depthmup_tp_test";
  std::filesystem::create_directories(dir);
  write_rms_csv((dir / "rms.csv").string(), r);
  write_kernel_csv((dir / "kernel.csv").string(), r);
  write_trace_csv((dir / "trace.csv").string(), r);
  std::ifstream is(dir / "rms.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == "t,l,rms");

  write_binary_dump((dir / "tables.bin").string(), r);
  const TableDump d = read_binary_dump((dir / "tables.bin").string());
  CHECK(d.L == 4);
  CHECK(d.T == 2);
  // t = 0: r in {-1, 0}; t = 1: r in {-1, 0, 1}; each block 2 x 2 x (L + 1) x L.
  CHECK(d.gamma.size() == static_cast<std::size_t>((2 + 3) * 4 * 5 * 4));
  CHECK(d.C.size() == static_cast<std::size_t>(3 * 3 * 2 * 4));
  {
    std::ofstream os(dir / "bad.bin", std::ios::binary);
    os << "DMUPGAMC";
  }
  CHECK_THROWS_AS(read_binary_dump((dir / "bad.bin").string()), ParseError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("second output matches wide Monte Carlo") {
  const LimitConfig c = config(16, 2);
  const double f1 = run_depth_mup(c).trace.f_ring[1];
  const int seeds = 32;
  double mean = 0.0, m2 = 0.0;
  for (int k = 0; k < seeds; ++k) {
    const double f = sim::run_wide_sim(wide(8192, c), 500 + k).f[1];
    mean += f / seeds;
    m2 += f * f / seeds;
  }
  const double se = std::sqrt((m2 - mean * mean) / (seeds - 1));
  CHECK(std::abs(mean - f1) <= 3 * se);
}

TEST_CASE("mid-depth rms and kernel match wide Monte Carlo") {
  const LimitConfig c = config(64, 6);
  const LimitResult r = run_depth_mup(c);
  const int seeds = 8;
  double rms = 0.0;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(3, 3);
  for (int k = 0; k < seeds; ++k) {
    const sim::WideTrace tr = sim::run_wide_sim(wide(8192, c), 900 + k);
    rms += tr.rms[5][32] / seeds;
    K += tr.kernel.topLeftCorner(3, 3) / seeds;
  }
  CHECK(rms == doctest::Approx(layer_rms_limit(r, 5, 32)).epsilon(0.05));
  for (int t = 0; t < 3; ++t) {
    for (int s = 0; s < 3; ++s) {
      const double scale = std::sqrt(r.xcov(t, t, 64) * r.xcov(s, s, 64));
      CHECK(std::abs(K(t, s) - r.xcov(t, s, 64)) <= 0.05 * scale);
    }
  }
}
