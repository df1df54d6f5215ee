#include "depthmup/wide_sim.hpp"

#include <cmath>

#include "depthmup/errors.hpp"
#include "depthmup/lazy_gaussian.hpp"
#include "depthmup/rng.hpp"

namespace depthmup::sim {

using Eigen::VectorXd;

void WideSimConfig::validate() const {
  if (n < 1 || L < 1) throw ConfigError("WideSimConfig: n and L must be >= 1");
  if (xi.empty()) throw ConfigError("WideSimConfig: need at least one step");
  if (xi.size() != y.size()) throw ConfigError("WideSimConfig: xi and y lengths differ");
  p.validate();
}

namespace {

struct Layer {
  LazyGaussian G;
  std::vector<VectorXd> u, v;  // W = G + sum_s u_s v_s^T

  VectorXd apply(const VectorXd& x) {
    VectorXd out = G.apply(x);
    for (std::size_t s = 0; s < u.size(); ++s) out += u[s] * v[s].dot(x);
    return out;
  }
  VectorXd apply_transpose(const VectorXd& y) {
    VectorXd out = G.apply_transpose(y);
    for (std::size_t s = 0; s < u.size(); ++s) out += v[s] * u[s].dot(y);
    return out;
  }
};

void center(VectorXd& x) { x.array() -= x.mean(); }

double rms(const VectorXd& x) { return std::sqrt(x.squaredNorm() / static_cast<double>(x.size())); }

}  // namespace

WideTrace run_wide_sim(const WideSimConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int n = cfg.n, L = cfg.L, T = cfg.steps();
  const double dn = static_cast<double>(n);

  Rng io_rng(derive_seed(seed, {0x10}));
  const VectorXd U = io_rng.normal_vector(n, 1.0);
  const VectorXd V = io_rng.normal_vector(n, 1.0 / dn);

  std::vector<Layer> layers;
  layers.reserve(L);
  for (int l = 0; l < L; ++l) {
    layers.push_back(Layer{LazyGaussian(n, 1.0 / std::sqrt(dn), derive_seed(seed, {0x11, static_cast<std::uint64_t>(l)})), {}, {}});
  }

  const double mult = branch_multiplier(cfg.p, L);
  const double step_scale = effective_update_scale(cfg.p, L, n, ParamGroup::Hidden) *
                            grad_prescale(cfg.p, L, n, ParamGroup::Hidden);

  WideTrace tr;
  tr.rms.assign(T, std::vector<double>(L + 1, 0.0));
  Eigen::MatrixXd xL(n, T);
  std::vector<VectorXd> x(L + 1), h(L);
  for (int t = 0; t < T; ++t) {
    x[0] = cfg.xi[t] * U;
    tr.rms[t][0] = rms(x[0]);
    for (int l = 1; l <= L; ++l) {
      h[l - 1] = layers[l - 1].apply(x[l - 1]);
      VectorXd g = h[l - 1].unaryExpr([&](double z) { return activate(cfg.phi, z); });
      if (cfg.mean_subtraction) center(g);
      x[l] = x[l - 1] + mult * g;
      if (!x[l].allFinite()) throw NumericalError("wide sim: non-finite activation at layer " + std::to_string(l), l);
      tr.rms[t][l] = rms(x[l]);
    }
    xL.col(t) = x[L];
    const double f = V.dot(x[L]);
    const double chi = f - cfg.y[t];
    tr.f.push_back(f);
    tr.chi.push_back(chi);

    VectorXd dx = chi * V;
    std::vector<VectorXd> pending_u(L);
    for (int l = L; l >= 1; --l) {
      VectorXd dg = mult * dx;
      if (cfg.mean_subtraction) center(dg);
      VectorXd dh = h[l - 1].binaryExpr(dg, [&](double z, double d) { return activate_prime(cfg.phi, z) * d; });
      pending_u[l - 1] = -step_scale * dh;
      dx += layers[l - 1].apply_transpose(dh);
    }
    for (int l = 1; l <= L; ++l) {
      layers[l - 1].u.push_back(std::move(pending_u[l - 1]));
      layers[l - 1].v.push_back(x[l - 1]);
    }
  }
  tr.kernel = xL.transpose() * xL / dn;
  return tr;
}

}  // namespace depthmup::sim
