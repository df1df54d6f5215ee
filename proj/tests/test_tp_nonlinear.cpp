#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "depthmup/errors.hpp"
#include "depthmup/experiments.hpp"
#include "depthmup/gauss_quadrature.hpp"
#include "depthmup/tp_linear.hpp"
#include "depthmup/tp_nonlinear.hpp"

using namespace depthmup;
using namespace depthmup::tp;

namespace {

double ident(double x) { return x; }
double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }
double step(double x) { return x > 0 ? 1.0 : 0.0; }

}  // namespace

TEST_CASE("Gauss-Legendre rule") {
  CHECK(integrate([](double x) { return x * x; }, 0.0, 3.0, 8) == doctest::Approx(9.0).epsilon(1e-14));
  CHECK(integrate([](double x) { return std::exp(x); }, 0.0, 1.0, 16) == doctest::Approx(std::exp(1.0) - 1).epsilon(1e-14));
}

TEST_CASE("quadrature oracle examples") {
  const GaussPair g{1.3, 0.7, 0.4};
  CHECK(std::abs(v_quadrature(ident, ident, g) - 0.4) < 1e-12);
  CHECK(std::abs(v_quadrature(sgn, sgn, GaussPair{1, 1, 0})) < 1e-14);
  CHECK(v_quadrature(step, step, GaussPair{1, 1, 0}) == doctest::Approx(0.25).epsilon(1e-12));
  // Degenerate variance: z = 0 almost surely.
  CHECK(v_quadrature([](double x) { return x + 2.0; }, ident, GaussPair{0.0, 1.0, 0.0}) == doctest::Approx(0.0));
  CHECK(v_quadrature([](double) { return 3.0; }, [](double y) { return y * y; }, GaussPair{0.0, 2.0, 0.0}) ==
        doctest::Approx(6.0).epsilon(1e-12));
  CHECK_THROWS_AS(v_quadrature(ident, ident, GaussPair{1, 1, 1.5}), DomainError);
  CHECK_THROWS_AS(v_quadrature(ident, ident, g, 4), DomainError);
}

TEST_CASE("closed forms: special values") {
  CHECK(v_phi_prime(Nonlinearity::Identity, GaussPair{2, 3, 1}) == 1.0);
  CHECK(v_phi_prime(Nonlinearity::Abs, GaussPair{1, 1, 1}) == doctest::Approx(1.0));
  CHECK(v_phi_prime(Nonlinearity::Abs, GaussPair{1, 1, 0}) == 0.0);
  CHECK(v_phi_prime(Nonlinearity::ReLU, GaussPair{1, 1, 0.5}) ==
        doctest::Approx(v_phi_prime_quadrature(Nonlinearity::ReLU, GaussPair{1, 1, 0.5})).epsilon(1e-9));
  CHECK(v_phi_prime(Nonlinearity::ReLU, GaussPair{1, 1, 0.5}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(v_phi_c(Nonlinearity::Identity, GaussPair{2, 3, 1.1}) == 1.1);
  CHECK(std::abs(v_phi_c(Nonlinearity::ReLU, GaussPair{1, 1, 0})) < 1e-15);
  for (Nonlinearity phi : {Nonlinearity::ReLU, Nonlinearity::Abs}) {
    CHECK(v_phi_c(phi, GaussPair{1.7, 1.7, 1.7}) >= 0.0);
  }
  // Literal cross kernel vanishes for the identity.
  CHECK(v_phi_c_prime_literal(Nonlinearity::Identity, GaussPair{1, 1, 0.3}) == 0.0);
}

TEST_CASE("closed forms agree with quadrature on the grid") { CHECK(exp::vkernel_max_error(64) <= 1e-6); }

TEST_CASE("quadrature order doubling is converged") {
  for (Nonlinearity phi : {Nonlinearity::ReLU, Nonlinearity::Abs}) {
    for (double rho : {-0.9, 0.2, 0.95}) {
      const GaussPair g{1.4, 0.6, rho * std::sqrt(1.4 * 0.6)};
      CHECK(std::abs(v_phi_c_quadrature(phi, g, 64) - v_phi_c_quadrature(phi, g, 128)) < 1e-8);
      CHECK(std::abs(v_phi_prime_quadrature(phi, g, 64) - v_phi_prime_quadrature(phi, g, 128)) < 1e-8);
    }
  }
}

TEST_CASE("kernel set variants") {
  const GaussPair g{1, 1, 0.3};
  const VKernelSet pair(Nonlinearity::ReLU);
  const VKernelSet lit(Nonlinearity::ReLU, CrossVariant::Literal);
  CHECK(pair.v_c_prime(g) == pair.v_prime(g));
  CHECK(lit.v_c_prime(g) == doctest::Approx(pair.v_prime(g) - 0.25).epsilon(1e-12));
  const VKernelSet quad(Nonlinearity::ReLU, CrossVariant::PhiPrimePairing, 64, true);
  CHECK(quad.v_c(g) == doctest::Approx(pair.v_c(g)).epsilon(1e-9));
  CHECK(parse_cross_variant("literal") == CrossVariant::Literal);
  CHECK_THROWS_AS(parse_cross_variant("other"), ConfigError);
}

TEST_CASE("identity reduction gate") {
  std::vector<double> xi, y;
  exp::bounded_stream(5, xi, y);
  CHECK(exp::identity_reduction_error(64, xi, y) <= 1e-8);
}

TEST_CASE("relu limit") {
  NonlinearConfig nc;
  nc.limit.L = 16;
  nc.limit.T = 1;
  nc.limit.xi = {0.8};
  nc.limit.y = {1.0};
  CHECK(run_nonlinear(nc).trace.f_ring[0] == 0.0);

  std::vector<double> xi, y;
  exp::bounded_stream(5, xi, y);
  for (Nonlinearity phi : {Nonlinearity::ReLU, Nonlinearity::Abs}) {
    CHECK(exp::output_kernel_min_eigenvalue(phi, 32, xi, y) >= -1e-8);
  }
  nc.limit.alpha = 0.75;
  CHECK_THROWS_AS(run_nonlinear(nc), ConfigError);
}

TEST_CASE("relu limit kernel against a wide simulator") {
  std::vector<double> xi, y;
  exp::bounded_stream(3, xi, y);
  const exp::KernelCheckReport r = exp::nonlinear_kernel_check(Nonlinearity::ReLU, 4096, 32, xi, y, 4, 5, 1);
  CHECK(r.max_rel_gap <= 0.07);
}

TEST_CASE("vkernel table dump") {
  const auto path = (std::filesystem::temp_directory_path() / "depthmup_vk.csv").string();
  write_vkernel_table(path, VKernelSet(Nonlinearity::Abs), {GaussPair{1, 1, 0}, GaussPair{2, 1, 0.5}});
  std::ifstream is(path);
  std::string header, line;
  std::getline(is, header);
  CHECK(header == "phi,c11,c22,c12,v_c,v_prime,v_c_prime");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 2);
  std::filesystem::remove(path);
}
