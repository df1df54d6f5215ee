#include "depthmup/tp_nonlinear.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "depthmup/csv.hpp"
#include "depthmup/errors.hpp"
#include "depthmup/gauss_quadrature.hpp"
#include "tp_engine.hpp"

namespace depthmup::tp {

using std::numbers::pi;

namespace {
constexpr double kPsdSlack = 1e-12;
constexpr double kRadialCutoff = 10.0;
}  // namespace

void GaussPair::validate() const {
  if (!std::isfinite(c11) || !std::isfinite(c22) || !std::isfinite(c12)) {
    throw DomainError("GaussPair: non-finite entry");
  }
  const double scale = std::max({std::abs(c11), std::abs(c22), std::abs(c12), 1e-300});
  if (c11 < -kPsdSlack * scale || c22 < -kPsdSlack * scale) throw DomainError("GaussPair: negative variance");
  if (c12 * c12 > std::max(c11, 0.0) * std::max(c22, 0.0) + kPsdSlack * scale * scale) {
    throw DomainError("GaussPair: covariance is indefinite (c12^2 > c11 c22)");
  }
}

double GaussPair::rho() const {
  if (c11 <= 0.0 || c22 <= 0.0) return 0.0;
  return std::clamp(c12 / std::sqrt(c11 * c22), -1.0, 1.0);
}

double v_quadrature(const std::function<double(double)>& phi_a, const std::function<double(double)>& phi_b,
                    const GaussPair& g, int order) {
  if (order < 8) throw DomainError("v_quadrature: order must be >= 8");
  g.validate();
  // PSD square root through the symmetric eigendecomposition; eigenvalues in [-slack, 0] clamp to 0.
  const double a = std::max(g.c11, 0.0), d = std::max(g.c22, 0.0), b = g.c12;
  const double tr = 0.5 * (a + d);
  const double disc = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
  const double l1 = std::max(tr + disc, 0.0), l2 = std::max(tr - disc, 0.0);
  double vx, vy;  // unit eigenvector for l1
  if (std::abs(b) > 0.0) {
    vx = l1 - d;
    vy = b;
    const double nv = std::hypot(vx, vy);
    vx /= nv;
    vy /= nv;
  } else if (a >= d) {
    vx = 1.0;
    vy = 0.0;
  } else {
    vx = 0.0;
    vy = 1.0;
  }
  const double s1 = std::sqrt(l1), s2 = std::sqrt(l2);
  // S = s1 v v^T + s2 w w^T with w = (-vy, vx).
  const double s00 = s1 * vx * vx + s2 * vy * vy;
  const double s01 = (s1 - s2) * vx * vy;
  const double s11 = s1 * vy * vy + s2 * vx * vx;
  const std::array<std::array<double, 2>, 2> rows{{{s00, s01}, {s01, s11}}};

  std::vector<double> breaks{0.0};
  for (const auto& r : rows) {
    if (r[0] == 0.0 && r[1] == 0.0) continue;
    double th = std::atan2(-r[0], r[1]);
    for (int k = 0; k < 2; ++k) {
      double v = std::fmod(th + k * pi, 2.0 * pi);
      if (v < 0) v += 2.0 * pi;
      breaks.push_back(v);
    }
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.push_back(2.0 * pi);

  const GaussLegendre& rule = gauss_legendre(order);
  // Radial factor r e^{-r^2/2} on [0, cutoff].
  std::vector<double> rr(order), rw(order);
  for (int i = 0; i < order; ++i) {
    const double r = 0.5 * kRadialCutoff * (rule.nodes[i] + 1.0);
    rr[i] = r;
    rw[i] = 0.5 * kRadialCutoff * rule.weights[i] * r * std::exp(-0.5 * r * r);
  }
  double total = 0.0;
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double lo = breaks[p], hi = breaks[p + 1];
    if (hi - lo <= 0.0) continue;
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    double panel = 0.0;
    for (int j = 0; j < order; ++j) {
      const double th = mid + half * rule.nodes[j];
      const double c = std::cos(th), s = std::sin(th);
      const double dz = s00 * c + s01 * s, dy = s01 * c + s11 * s;
      double radial = 0.0;
      for (int i = 0; i < order; ++i) radial += rw[i] * phi_a(rr[i] * dz) * phi_b(rr[i] * dy);
      panel += rule.weights[j] * radial;
    }
    total += half * panel;
  }
  return total / (2.0 * pi);
}

double v_phi_prime(Nonlinearity phi, const GaussPair& g) {
  g.validate();
  if (phi == Nonlinearity::Identity) return 1.0;
  if (g.c11 <= 0.0 || g.c22 <= 0.0) return 0.0;  // phi'(0) = 0
  const double rho = g.rho();
  if (phi == Nonlinearity::ReLU) return 0.25 + std::asin(rho) / (2.0 * pi);
  return (2.0 / pi) * std::asin(rho);
}

double v_phi_c(Nonlinearity phi, const GaussPair& g) {
  g.validate();
  if (phi == Nonlinearity::Identity) return g.c12;
  if (g.c11 <= 0.0 || g.c22 <= 0.0) return 0.0;
  const double rho = g.rho();
  const double s = std::sqrt(g.c11 * g.c22);
  if (phi == Nonlinearity::ReLU) {
    const double th = std::acos(rho);
    return s / (2.0 * pi) * (std::sin(th) + (pi - th) * std::cos(th) - 1.0);
  }
  return (2.0 / pi) * s * (std::sqrt(std::max(0.0, 1.0 - rho * rho)) + rho * std::asin(rho) - 1.0);
}

double v_phi_c_prime_literal(Nonlinearity phi, const GaussPair& g) {
  g.validate();
  if (phi == Nonlinearity::Identity) return 0.0;
  if (g.c11 <= 0.0 || g.c22 <= 0.0) return 0.0;
  // E relu'(z) = 1/2; E sign(z) = 0.
  const double mean_prod = phi == Nonlinearity::ReLU ? 0.25 : 0.0;
  return v_phi_prime(phi, g) - mean_prod;
}

namespace {

std::function<double(double)> fn(Nonlinearity phi) {
  return [phi](double x) { return activate(phi, x); };
}
std::function<double(double)> fn_prime(Nonlinearity phi) {
  return [phi](double x) { return activate_prime(phi, x); };
}
const std::function<double(double)> kOne = [](double) { return 1.0; };

}  // namespace

double v_phi_prime_quadrature(Nonlinearity phi, const GaussPair& g, int order) {
  return v_quadrature(fn_prime(phi), fn_prime(phi), g, order);
}

double v_phi_c_quadrature(Nonlinearity phi, const GaussPair& g, int order) {
  const double cross = v_quadrature(fn(phi), fn(phi), g, order);
  const double mz = v_quadrature(fn(phi), kOne, g, order);
  const double my = v_quadrature(kOne, fn(phi), g, order);
  return cross - mz * my;
}

double v_phi_c_prime_literal_quadrature(Nonlinearity phi, const GaussPair& g, int order) {
  const double cross = v_quadrature(fn_prime(phi), fn_prime(phi), g, order);
  const double mz = v_quadrature(fn_prime(phi), kOne, g, order);
  const double my = v_quadrature(kOne, fn_prime(phi), g, order);
  return cross - mz * my;
}

std::string_view to_string(CrossVariant v) { return v == CrossVariant::PhiPrimePairing ? "phi_prime" : "literal"; }

CrossVariant parse_cross_variant(std::string_view s) {
  if (s == "phi_prime" || s == "pairing") return CrossVariant::PhiPrimePairing;
  if (s == "literal") return CrossVariant::Literal;
  throw ConfigError("unknown V_{c|'} variant '" + std::string(s) + "' (expected phi_prime|literal)");
}

VKernelSet::VKernelSet(Nonlinearity phi, CrossVariant variant, int order, bool use_quadrature)
    : phi_(phi), variant_(variant), order_(order), use_quadrature_(use_quadrature) {
  if (order < 8) throw DomainError("VKernelSet: quadrature order must be >= 8");
}

double VKernelSet::v_c(const GaussPair& g) const {
  return use_quadrature_ ? v_phi_c_quadrature(phi_, g, order_) : v_phi_c(phi_, g);
}

double VKernelSet::v_prime(const GaussPair& g) const {
  return use_quadrature_ ? v_phi_prime_quadrature(phi_, g, order_) : v_phi_prime(phi_, g);
}

double VKernelSet::v_c_prime(const GaussPair& g) const {
  if (variant_ == CrossVariant::PhiPrimePairing) return v_prime(g);
  return use_quadrature_ ? v_phi_c_prime_literal_quadrature(phi_, g, order_) : v_phi_c_prime_literal(phi_, g);
}

LimitResult run_nonlinear(const NonlinearConfig& cfg) {
  if (std::abs(cfg.limit.alpha - 0.5) > 1e-12 || std::abs(cfg.limit.gamma - 0.5) > 1e-12) {
    throw ConfigError("run_nonlinear: only the Depth-muP point alpha = gamma = 1/2 is supported");
  }
  const VKernelSet kernels(cfg.phi, cfg.variant, cfg.quadrature_order);
  return detail::run_coefficient_engine(cfg.limit, &kernels);
}

void write_vkernel_table(const std::string& path, const VKernelSet& k, const std::vector<GaussPair>& grid) {
  CsvWriter w(path, {"phi", "c11", "c22", "c12", "v_c", "v_prime", "v_c_prime"});
  for (const auto& g : grid) {
    w.row({std::string(to_string(k.phi())), g.c11, g.c22, g.c12, k.v_c(g), k.v_prime(g), k.v_c_prime(g)});
  }
}

}  // namespace depthmup::tp
