#include "depthmup/tp_linear.hpp"

#include <algorithm>
#include <cmath>

#include "depthmup/errors.hpp"
#include "depthmup/tp_nonlinear.hpp"
#include "tp_engine.hpp"

namespace depthmup::tp {

namespace {

// Base covariances Base_b(m)_{t', s'} of the hat variables, plus the per-layer V' and
// V_{c|'} factors (all ones for the linear network).
struct BaseTables {
  int L, T;
  std::vector<double> base, vprime, vcross;

  BaseTables(int L_, int T_)
      : L(L_), T(T_),
        base(static_cast<std::size_t>(2) * L_ * T_ * T_, 0.0),
        vprime(static_cast<std::size_t>(L_) * T_ * T_, 1.0),
        vcross(static_cast<std::size_t>(L_) * T_ * T_, 1.0) {}

  std::size_t bi(int b, int m, int t, int s) const {
    return ((static_cast<std::size_t>(b) * L + (m - 1)) * T + t) * T + s;
  }
  std::size_t vi(int m, int t, int s) const { return (static_cast<std::size_t>(m - 1) * T + t) * T + s; }
  void set_base(int b, int m, int t, int s, double v) {
    base[bi(b, m, t, s)] = v;
    base[bi(b, m, s, t)] = v;
  }
  void set_v(std::vector<double>& tab, int m, int t, int s, double v) {
    tab[vi(m, t, s)] = v;
    tab[vi(m, s, t)] = v;
  }
};

// <P | Q> for kets P of step tp and Q of step tq. `scale` multiplies the r >= 0 part
// (1/L for normalized coefficients, 1 for raw ones).
template <class S>
double inner(const GammaTable& G, const BaseTables& B, const S* P, int tp, const S* Q, int tq, double scale) {
  const int L = G.L();
  double acc = static_cast<double>(P[G.index(-1, 0, 1)]) * Q[G.index(-1, 0, 1)] +
               static_cast<double>(P[G.index(-1, 1, 1)]) * Q[G.index(-1, 1, 1)];
  double sum = 0.0;
  for (int b = 0; b < 2; ++b) {
    for (int tprime = 0; tprime <= tp; ++tprime) {
      const S* prow = P + G.index(tprime, b, 1);
      for (int sprime = 0; sprime <= tq; ++sprime) {
        const S* qrow = Q + G.index(sprime, b, 1);
        const double* brow = &B.base[B.bi(b, 1, tprime, sprime)];
        const std::size_t stride = static_cast<std::size_t>(B.T) * B.T;
        double part = 0.0;
        for (int m = 0; m < L; ++m) part += static_cast<double>(prow[m]) * qrow[m] * brow[m * stride];
        sum += part;
      }
    }
  }
  return acc + scale * sum;
}

template <class S>
void axpy(S* y, const S* x, std::size_t n, double a) {
  const S as = static_cast<S>(a);
  for (std::size_t i = 0; i < n; ++i) y[i] += as * x[i];
}

void record_forward(LimitResult& R, int t, int l, double C0, int s) {
  R.C.set_symmetric(t, s, 0, l, C0);
}

void finish_trace(LimitResult& R) {
  const int L = R.cfg.L, T = R.cfg.T;
  R.trace.layer_rms.assign(T, std::vector<double>(L + 1, 0.0));
  for (int t = 0; t < T; ++t) {
    for (int l = 0; l <= L; ++l) R.trace.layer_rms[t][l] = std::sqrt(std::max(0.0, R.xcov(t, t, l)));
  }
}

LimitResult allocate(const LimitConfig& cfg) {
  cfg.validate();
  check_capacity(cfg);
  LimitResult R;
  R.cfg = cfg;
  R.gamma = GammaTable(cfg.L, cfg.T, cfg.precision);
  R.C = CTable(cfg.L, cfg.T);
  R.xcov = FeatureCov(cfg.L, cfg.T);
  return R;
}

// Normalized-Gamma transcription for alpha = gamma = 1/2:
//   Gamma_{t,r,0,b}(l, m) = Gamma_{t,r,0,b}(l-1, m) + 1[t=r, b=0, l=m]
//        + (1/L) sum_{s<t} Gamma_{s,r,1,b}(l, m) (Gamma_{t,s,0,1}(l-1, l) - eta C_{t,s,0}(l))
//   Gamma_{t,r,1,b}(l-1, m) = Gamma_{t,r,1,b}(l, m) + 1[t=r, b=1, l=m]
//        + (1/L) sum_{s<t} Gamma_{s,r,0,b}(l-1, m) (Gamma_{t,s,1,0}(l, l) - eta C_{t,s,1}(l))
template <class S>
void route_a(LimitResult& R) {
  const LimitConfig& cfg = R.cfg;
  const int L = cfg.L, T = cfg.T;
  const double invL = 1.0 / L;
  GammaTable& G = R.gamma;
  BaseTables B(L, T);

  for (int t = 0; t < T; ++t) {
    const std::size_t nt = G.ket_size(t);
    S* x0 = G.ket<S>(t, 0, 0);
    for (int m = 1; m <= L; ++m) x0[G.index(-1, 0, m)] = static_cast<S>(cfg.xi[t]);
    for (int s = 0; s <= t; ++s) {
      R.xcov.set_symmetric(t, s, 0, inner(G, B, x0, t, G.ket<S>(s, 0, 0), s, invL));
    }
    for (int l = 1; l <= L; ++l) {
      for (int s = 0; s <= t; ++s) {
        const double c0 = R.xcov(t, s, l - 1);
        record_forward(R, t, l, c0, s);
        B.set_base(0, l, t, s, c0);
      }
      const S* prev = G.ket<S>(t, 0, l - 1);
      S* cur = G.ket<S>(t, 0, l);
      std::copy(prev, prev + nt, cur);
      cur[G.index(t, 0, l)] += static_cast<S>(1);
      for (int s = 0; s < t; ++s) {
        const double coef = invL * (static_cast<double>(prev[G.index(s, 1, l)]) - cfg.eta * R.C(t, s, 0, l));
        axpy(cur, G.ket<S>(s, 1, l), G.ket_size(s), coef);
      }
      for (int s = 0; s <= t; ++s) {
        R.xcov.set_symmetric(t, s, l, inner(G, B, cur, t, G.ket<S>(s, 0, l), s, invL));
      }
    }
    const double f = G.ket<S>(t, 0, L)[G.index(-1, 1, 1)];
    const double chi = cfg.chi(t, f);
    R.trace.f_ring.push_back(f);
    R.trace.chi_ring.push_back(chi);

    S* dL = G.ket<S>(t, 1, L);
    for (int m = 1; m <= L; ++m) dL[G.index(-1, 1, m)] = static_cast<S>(chi);
    for (int l = L; l >= 1; --l) {
      const S* cur = G.ket<S>(t, 1, l);
      for (int s = 0; s <= t; ++s) {
        const double c1 = inner(G, B, cur, t, G.ket<S>(s, 1, l), s, invL);
        R.C.set_symmetric(t, s, 1, l, c1);
        B.set_base(1, l, t, s, c1);
      }
      S* next = G.ket<S>(t, 1, l - 1);
      std::copy(cur, cur + nt, next);
      next[G.index(t, 1, l)] += static_cast<S>(1);
      for (int s = 0; s < t; ++s) {
        const double coef = invL * (static_cast<double>(cur[G.index(s, 0, l)]) - cfg.eta * R.C(t, s, 1, l));
        axpy(next, G.ket<S>(s, 0, l - 1), G.ket_size(s), coef);
      }
    }
  }
  finish_trace(R);
}

// Raw coefficients with branch multiplier L^{-alpha} and update size eta L^{-gamma}. With
// kernels, forward hat variables are MS(phi(h)) and backward ones phi'(h) * hat(W^T dx).
template <class S>
void route_b(LimitResult& R, const VKernelSet* K) {
  const LimitConfig& cfg = R.cfg;
  const int L = cfg.L, T = cfg.T;
  const double ca = std::pow(static_cast<double>(L), -cfg.alpha);
  const double cg = cfg.eta * std::pow(static_cast<double>(L), -cfg.gamma);
  GammaTable& G = R.gamma;
  BaseTables B(L, T);

  auto kernel_pair = [&](int t, int s, int l) {
    return GaussPair{R.xcov(t, t, l), R.xcov(s, s, l), R.xcov(t, s, l)};
  };

  for (int t = 0; t < T; ++t) {
    const std::size_t nt = G.ket_size(t);
    S* x0 = G.ket<S>(t, 0, 0);
    for (int m = 1; m <= L; ++m) x0[G.index(-1, 0, m)] = static_cast<S>(cfg.xi[t]);
    for (int s = 0; s <= t; ++s) R.xcov.set_symmetric(t, s, 0, inner(G, B, x0, t, G.ket<S>(s, 0, 0), s, 1.0));

    for (int l = 1; l <= L; ++l) {
      for (int s = 0; s <= t; ++s) {
        const double c0 = R.xcov(t, s, l - 1);
        record_forward(R, t, l, c0, s);
        if (K) {
          try {
            GaussPair g = kernel_pair(t, s, l - 1);
            // Round-off can push a Gram entry marginally outside the PSD cone.
            const double bound = std::sqrt(std::max(0.0, g.c11) * std::max(0.0, g.c22));
            g.c12 = std::clamp(g.c12, -bound, bound);
            B.set_base(0, l, t, s, K->v_c(g));
            B.set_v(B.vprime, l, t, s, K->v_prime(g));
            B.set_v(B.vcross, l, t, s, K->v_c_prime(g));
          } catch (const DomainError& e) {
            throw DomainError(std::string("V-kernel evaluation failed at step ") + std::to_string(t) +
                              ", layer " + std::to_string(l) + ": " + e.what());
          }
        } else {
          B.set_base(0, l, t, s, c0);
        }
      }
      const S* prev = G.ket<S>(t, 0, l - 1);
      S* cur = G.ket<S>(t, 0, l);
      std::copy(prev, prev + nt, cur);
      cur[G.index(t, 0, l)] += static_cast<S>(ca);
      for (int s = 0; s < t; ++s) {
        const double vp = B.vprime[B.vi(l, t, s)];
        const double coef = ca * vp * (static_cast<double>(prev[G.index(s, 1, l)]) - cg * R.C(t, s, 0, l));
        axpy(cur, G.ket<S>(s, 1, l), G.ket_size(s), coef);
      }
      for (int s = 0; s <= t; ++s) {
        R.xcov.set_symmetric(t, s, l, inner(G, B, cur, t, G.ket<S>(s, 0, l), s, 1.0));
      }
    }
    const double f = G.ket<S>(t, 0, L)[G.index(-1, 1, 1)];
    if (!std::isfinite(f)) throw NumericalError("limit engine: non-finite output at step " + std::to_string(t), L);
    const double chi = cfg.chi(t, f);
    R.trace.f_ring.push_back(f);
    R.trace.chi_ring.push_back(chi);

    S* dL = G.ket<S>(t, 1, L);
    for (int m = 1; m <= L; ++m) dL[G.index(-1, 1, m)] = static_cast<S>(chi);
    for (int l = L; l >= 1; --l) {
      const S* cur = G.ket<S>(t, 1, l);
      for (int s = 0; s <= t; ++s) {
        const double c1 = inner(G, B, cur, t, G.ket<S>(s, 1, l), s, 1.0);
        R.C.set_symmetric(t, s, 1, l, c1);
        B.set_base(1, l, t, s, B.vprime[B.vi(l, t, s)] * c1);
      }
      S* next = G.ket<S>(t, 1, l - 1);
      std::copy(cur, cur + nt, next);
      next[G.index(t, 1, l)] += static_cast<S>(ca);
      for (int s = 0; s < t; ++s) {
        const double vp = B.vprime[B.vi(l, t, s)];
        const double vc = B.vcross[B.vi(l, t, s)];
        const double coef = ca * (vc * static_cast<double>(cur[G.index(s, 0, l)]) - cg * vp * R.C(t, s, 1, l));
        axpy(next, G.ket<S>(s, 0, l - 1), G.ket_size(s), coef);
      }
    }
  }

  // Normalize the r >= 0 coefficients by sqrt(L).
  const S root = static_cast<S>(std::sqrt(static_cast<double>(L)));
  for (int t = 0; t < T; ++t) {
    for (int a = 0; a < 2; ++a) {
      for (int l = 0; l <= L; ++l) {
        S* k = G.ket<S>(t, a, l);
        for (std::size_t i = G.index(0, 0, 1); i < G.ket_size(t); ++i) k[i] *= root;
      }
    }
  }
  finish_trace(R);
}

}  // namespace

namespace detail {

LimitResult run_coefficient_engine(const LimitConfig& cfg, const VKernelSet* kernels) {
  if (cfg.alpha < 0.5 - 1e-12) {
    throw DomainError("limit engine: alpha < 1/2 is unstable at initialization and is rejected");
  }
  LimitResult R = allocate(cfg);
  if (cfg.precision == Precision::F64) {
    route_b<double>(R, kernels);
  } else {
    route_b<float>(R, kernels);
  }
  return R;
}

}  // namespace detail

LimitResult run_depth_mup(const LimitConfig& cfg) {
  if (std::abs(cfg.alpha - 0.5) > 1e-12 || std::abs(cfg.gamma - 0.5) > 1e-12) {
    throw ConfigError("run_depth_mup requires alpha = gamma = 1/2; use run_generalized");
  }
  LimitResult R = allocate(cfg);
  if (cfg.precision == Precision::F64) {
    route_a<double>(R);
  } else {
    route_a<float>(R);
  }
  return R;
}

LimitResult run_generalized(const LimitConfig& cfg) { return detail::run_coefficient_engine(cfg, nullptr); }

double layer_rms_limit(const LimitResult& r, int t, int l) {
  if (t < 0 || t >= r.cfg.T || l < 0 || l > r.cfg.L) throw DomainError("layer_rms_limit: index out of range");
  return r.trace.layer_rms[t][l];
}

OutputKernel output_kernel(const LimitResult& r, int s, int t) {
  if (s < 0 || s >= r.cfg.T || t < 0 || t >= r.cfg.T) throw DomainError("output_kernel: index out of range");
  return {r.xcov(t, s, r.cfg.L), r.C(t, s, 1, r.cfg.L)};
}

std::vector<std::vector<double>> output_kernel_matrix(const LimitResult& r) {
  std::vector<std::vector<double>> k(r.cfg.T, std::vector<double>(r.cfg.T));
  for (int t = 0; t < r.cfg.T; ++t) {
    for (int s = 0; s < r.cfg.T; ++s) k[t][s] = r.xcov(t, s, r.cfg.L);
  }
  return k;
}

}  // namespace depthmup::tp
