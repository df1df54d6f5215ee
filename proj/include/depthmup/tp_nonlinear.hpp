#pragma once

#include <functional>
#include <string>

#include "depthmup/activation.hpp"
#include "depthmup/tp_tables.hpp"

namespace depthmup::tp {

/// Covariance of a centered bivariate Gaussian (z, y).
struct GaussPair {
  double c11 = 1.0;
  double c22 = 1.0;
  double c12 = 0.0;

  /// Throws DomainError unless the matrix is PSD up to a relative 1e-12 slack.
  void validate() const;
  /// c12 / sqrt(c11 c22) clamped to [-1, 1]; 0 when either variance is 0.
  double rho() const;
};

/// E[phi_a(z) phi_b(y)] by polar quadrature after whitening with the PSD square root of the
/// covariance. The angular integral is split at the angles where z or y changes sign, so
/// kinks and jumps at 0 are integrated exactly by smooth panels.
double v_quadrature(const std::function<double(double)>& phi_a, const std::function<double(double)>& phi_b,
                    const GaussPair& g, int order = 64);

/// E phi'(z) phi'(y). Closed form for identity, relu and abs.
double v_phi_prime(Nonlinearity phi, const GaussPair& g);
/// E (phi(z) - E phi(z)) (phi(y) - E phi(y)). Closed form for identity, relu and abs.
double v_phi_c(Nonlinearity phi, const GaussPair& g);
/// E (phi'(z) - E phi'(z)) phi'(y).
double v_phi_c_prime_literal(Nonlinearity phi, const GaussPair& g);

/// Quadrature versions of the three kernels, used as the oracle for the closed forms.
double v_phi_prime_quadrature(Nonlinearity phi, const GaussPair& g, int order = 64);
double v_phi_c_quadrature(Nonlinearity phi, const GaussPair& g, int order = 64);
double v_phi_c_prime_literal_quadrature(Nonlinearity phi, const GaussPair& g, int order = 64);

enum class CrossVariant {
  PhiPrimePairing,  // V_{c|'} = E phi'(z) phi'(y)
  Literal,          // V_{c|'} = E MS(phi'(z)) phi'(y)
};

std::string_view to_string(CrossVariant v);
CrossVariant parse_cross_variant(std::string_view s);

class VKernelSet {
 public:
  explicit VKernelSet(Nonlinearity phi, CrossVariant variant = CrossVariant::PhiPrimePairing,
                      int order = 64, bool use_quadrature = false);

  Nonlinearity phi() const { return phi_; }
  CrossVariant variant() const { return variant_; }
  int order() const { return order_; }

  double v_c(const GaussPair& g) const;
  double v_prime(const GaussPair& g) const;
  double v_c_prime(const GaussPair& g) const;

 private:
  Nonlinearity phi_;
  CrossVariant variant_;
  int order_;
  bool use_quadrature_;
};

struct NonlinearConfig {
  LimitConfig limit;  // alpha, gamma fixed at 1/2
  Nonlinearity phi = Nonlinearity::ReLU;
  CrossVariant variant = CrossVariant::PhiPrimePairing;
  int quadrature_order = 64;
};

/// Depth-muP limit of the post-nonlinearity resnet with mean subtraction. The linear
/// schedule with V-kernel factors: the forward correction carries V_phi', the backward
/// correction carries V_{c|'} Gamma - V_phi' C, and forward base covariances are V_phic.
LimitResult run_nonlinear(const NonlinearConfig& cfg);

/// CSV with columns phi, c11, c22, c12, v_c, v_prime, v_c_prime.
void write_vkernel_table(const std::string& path, const VKernelSet& k, const std::vector<GaussPair>& grid);

}  // namespace depthmup::tp
