#include "depthmup/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "depthmup/csv.hpp"
#include "depthmup/errors.hpp"
#include "depthmup/rng.hpp"
#include "depthmup/tp_linear.hpp"
#include "depthmup/tp_nonlinear.hpp"

namespace depthmup::diag {

PowerLawFit fit_power_law(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 2) throw DomainError("fit_power_law: need at least 2 points");
  const double n = static_cast<double>(pairs.size());
  double sx = 0, sy = 0;
  for (const auto& [x, y] : pairs) {
    if (!(x > 0.0) || !(y > 0.0) || !std::isfinite(x) || !std::isfinite(y)) {
      throw DomainError("fit_power_law: all coordinates must be positive and finite");
    }
    sx += std::log(x);
    sy += std::log(y);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& [x, y] : pairs) {
    const double dx = std::log(x) - mx, dy = std::log(y) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw DomainError("fit_power_law: all x values are equal");
  PowerLawFit f;
  f.exponent = sxy / sxx;
  f.intercept = my - f.exponent * mx;
  f.n_points = static_cast<int>(pairs.size());
  const double ss_res = std::max(0.0, syy - f.exponent * sxy);
  f.r2 = syy <= 1e-300 ? 1.0 : std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  return f;
}

namespace {

// Returns E[A^2] samples accumulated for one depth given the per-layer increments.
double warmup_a(RuleKind kind, const std::vector<double>& w, std::vector<double>& pre, std::vector<double>& suf) {
  const int L = static_cast<int>(w.size());
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(L));
  pre.assign(L + 1, 1.0);
  suf.assign(L + 2, 1.0);
  for (int k = 0; k < L; ++k) pre[k + 1] = pre[k] * (1.0 + w[k] * inv_sqrt);
  for (int k = L - 1; k >= 0; --k) suf[k] = suf[k + 1] * (1.0 + w[k] * inv_sqrt);
  double a = 0.0;
  for (int l = 0; l < L; ++l) {
    const double p = pre[l] * suf[l + 1];
    if (kind == RuleKind::SGD) {
      a += p * p * inv_sqrt;
    } else {
      a += p * (p > 0.0 ? 1.0 : (p < 0.0 ? -1.0 : 0.0));
    }
  }
  return a;
}

}  // namespace

WarmupResult warmup_al_scaling(RuleKind kind, const std::vector<int>& L_grid, int trials, std::uint64_t seed) {
  if (kind == RuleKind::Adam) throw ConfigError("warmup_al_scaling: use SGD or SignSGD (SignSGD is the memoryless Adam)");
  if (L_grid.size() < 3) throw DomainError("warmup_al_scaling: need at least 3 depths");
  if (trials < 1000) throw DomainError("warmup_al_scaling: need at least 1000 trials");
  int Lmax = 0;
  for (int L : L_grid) {
    if (L < 1) throw DomainError("warmup_al_scaling: depths must be >= 1");
    Lmax = std::max(Lmax, L);
  }
  const bool coupled = std::all_of(L_grid.begin(), L_grid.end(), [&](int L) { return Lmax % L == 0; });

  const std::size_t nL = L_grid.size();
  std::vector<double> mean(nL, 0.0), m2(nL, 0.0);
  std::vector<double> fine(Lmax), w, pre, suf;
  for (int tr = 0; tr < trials; ++tr) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(tr)}));
    if (coupled) {
      for (double& v : fine) v = rng.normal();
    }
    for (std::size_t i = 0; i < nL; ++i) {
      const int L = L_grid[i];
      w.assign(L, 0.0);
      if (coupled) {
        const int block = Lmax / L;
        const double scale = 1.0 / std::sqrt(static_cast<double>(block));
        for (int k = 0; k < L; ++k) {
          double s = 0.0;
          for (int j = 0; j < block; ++j) s += fine[static_cast<std::size_t>(k) * block + j];
          w[k] = s * scale;
        }
      } else {
        for (double& v : w) v = rng.normal();
      }
      const double a = warmup_a(kind, w, pre, suf);
      const double v = a * a;
      const double delta = v - mean[i];
      mean[i] += delta / (tr + 1);
      m2[i] += delta * (v - mean[i]);
    }
  }
  WarmupResult r;
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t i = 0; i < nL; ++i) {
    const double var = trials > 1 ? m2[i] / (trials - 1) : 0.0;
    r.points.push_back({L_grid[i], mean[i], std::sqrt(var / trials)});
    pairs.emplace_back(L_grid[i], mean[i]);
  }
  r.fit = fit_power_law(pairs);
  return r;
}

std::pair<double, double> warmup_factor_moment(int L, int trials, std::uint64_t seed) {
  if (L < 1 || trials < 2) throw DomainError("warmup_factor_moment: need L >= 1 and trials >= 2");
  Rng rng(seed);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(L));
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < trials; ++i) {
    const double f = 1.0 + rng.normal() * inv_sqrt;
    const double v = f * f;
    const double d = v - mean;
    mean += d / (i + 1);
    m2 += d * (v - mean);
  }
  return {mean, std::sqrt(m2 / (trials - 1) / trials)};
}

std::vector<double> dyadic_eps_grid(int L, double lambda, int max_points) {
  if (L < 1) throw DomainError("dyadic_eps_grid: L must be >= 1");
  std::vector<double> eps;
  for (int j = 0; static_cast<int>(eps.size()) < max_points; ++j) {
    const double e = std::ldexp(1.0, j) / L;
    if (lambda + e > 1.0 + 1e-12) break;
    eps.push_back(e);
  }
  return eps;
}

DiversityReport feature_diversity_exponent(const std::vector<Eigen::MatrixXd>& x, double lambda,
                                           const std::vector<double>& eps_grid) {
  if (x.size() < 2) throw DomainError("feature_diversity_exponent: need snapshots for layers 0..L");
  if (lambda < 0.0 || lambda > 1.0) throw DomainError("feature_diversity_exponent: lambda must lie in [0, 1]");
  const int L = static_cast<int>(x.size()) - 1;
  for (std::size_t i = 1; i < eps_grid.size(); ++i) {
    if (!(eps_grid[i] > eps_grid[i - 1])) throw DomainError("feature_diversity_exponent: eps grid must increase");
  }
  DiversityReport r;
  r.lambda = lambda;
  const int l0 = static_cast<int>(std::floor(lambda * L + 1e-9));
  const double sqrt_n = std::sqrt(static_cast<double>(x[0].rows()));
  int last_layer = l0;
  for (double e : eps_grid) {
    if (lambda + e > 1.0 + 1e-12) throw DomainError("feature_diversity_exponent: lambda + eps exceeds 1");
    const int l1 = static_cast<int>(std::floor((lambda + e) * L + 1e-9));
    if (l1 == last_layer) {
      r.warnings.push_back("eps = " + format_double(e) + " maps to an already used layer; dropped");
      continue;
    }
    last_layer = l1;
    const Eigen::MatrixXd diff = x[l1] - x[l0];
    const double d = diff.colwise().norm().mean() / sqrt_n;
    if (!(d > 0.0)) {
      r.warnings.push_back("eps = " + format_double(e) + " gives d = 0; dropped");
      continue;
    }
    r.eps_grid.push_back(e);
    r.layers.push_back(l1);
    r.d_curve.push_back(d);
  }
  if (r.d_curve.size() < 2) throw DomainError("feature_diversity_exponent: fewer than 2 usable eps values");
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t i = 0; i < r.d_curve.size(); ++i) pairs.emplace_back(r.eps_grid[i], r.d_curve[i]);
  r.fit = fit_power_law(pairs);
  r.fitted_exponent = r.fit.exponent;
  r.kappa_hat = 1.0 - r.fit.exponent;
  const double anchor = r.d_curve.back();
  for (double d : r.d_curve) r.d_normalized.push_back(d / anchor);
  return r;
}

double linearization_residual(const sim::NetState& state, const sim::NetConfig& cfg, const Parametrization& p,
                              const sim::Batch& batch, int l) {
  if (!state.W_init) throw ContractViolation("linearization_residual: the initial weight snapshot was not kept");
  if (l < 1 || l > cfg.L) throw DomainError("linearization_residual: layer out of range");
  const sim::ForwardCache cache = sim::forward(state, cfg, p, batch.inputs);
  const sim::BlockCache& b = cache.blocks[l - 1];
  const Eigen::MatrixXd& u = cfg.placement == sim::Placement::Pre ? b.act[0] : b.input;
  const Eigen::MatrixXd& Wt = state.W[l - 1][0];
  const Eigen::MatrixXd& W0 = (*state.W_init)[l - 1][0];
  const Eigen::MatrixXd h0 = W0 * u;
  const Eigen::MatrixXd ht = Wt * u;
  const Eigen::MatrixXd dh = ht - h0;
  Eigen::MatrixXd r(h0.rows(), h0.cols());
  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      r(i, j) = activate(cfg.phi, ht(i, j)) - activate(cfg.phi, h0(i, j)) -
                activate_prime(cfg.phi, h0(i, j)) * dh(i, j);
    }
  }
  if (cfg.mean_subtraction) r = sim::ms_columns(r);
  const double scale = std::pow(static_cast<double>(cfg.L), -p.alpha);
  return scale * r.colwise().norm().mean() / std::sqrt(static_cast<double>(cfg.n));
}

DeltaFResult deltaf_exponent(EngineKind kind, double alpha, double gamma, const std::vector<int>& L_grid,
                             const std::vector<double>& xi, const std::vector<double>& y, Nonlinearity phi) {
  if (alpha < 0.5 - 1e-12) throw DomainError("deltaf_exponent: alpha must be >= 1/2");
  if (xi.size() < 2 || y.size() < 2) throw DomainError("deltaf_exponent: need inputs and targets for T = 2");
  DeltaFResult r;
  std::vector<std::pair<double, double>> pairs;
  for (int L : L_grid) {
    tp::LimitConfig c;
    c.L = L;
    c.T = 2;
    c.xi = {xi[0], xi[1]};
    c.y = {y[0], y[1]};
    c.alpha = alpha;
    c.gamma = gamma;
    c.max_L = std::max(c.max_L, L);
    tp::LimitResult res;
    if (kind == EngineKind::Linear) {
      res = tp::run_generalized(c);
    } else {
      tp::NonlinearConfig nc;
      nc.limit = c;
      nc.phi = phi;
      res = tp::run_nonlinear(nc);
    }
    const double f1 = std::abs(res.trace.f_ring[1]);
    r.points.emplace_back(L, f1);
    pairs.emplace_back(L, f1);
  }
  r.fit = fit_power_law(pairs);
  return r;
}

TransferShift transfer_shift(const std::vector<std::vector<double>>& losses, const std::vector<double>& lr_grid) {
  if (losses.size() < 2) throw DomainError("transfer_shift: need at least 2 depths");
  for (std::size_t j = 1; j < lr_grid.size(); ++j) {
    if (!(lr_grid[j] > lr_grid[j - 1])) throw DomainError("transfer_shift: lr grid must be ascending");
  }
  TransferShift t;
  for (const auto& row : losses) {
    if (row.size() != lr_grid.size()) throw DomainError("transfer_shift: sweep grid is not rectangular");
    int best = -1;
    double best_v = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double v = std::isnan(row[j]) ? std::numeric_limits<double>::infinity() : row[j];
      if (v < best_v) {
        best_v = v;
        best = static_cast<int>(j);
      }
    }
    const bool all_nan = std::all_of(row.begin(), row.end(), [](double v) { return std::isnan(v); });
    if (all_nan) best = -1;
    t.argmin.push_back(best);
    t.excluded.push_back(all_nan || best < 0);
  }
  int prev = -1, first = -1;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (t.excluded[i]) continue;
    if (first < 0) first = t.argmin[i];
    if (prev >= 0) t.max_shift = std::max(t.max_shift, std::abs(t.argmin[i] - prev));
    prev = t.argmin[i];
  }
  if (first >= 0) t.total_shift = prev - first;
  return t;
}

SublevelSlope sublevel_slope(const std::vector<std::vector<double>>& losses, const std::vector<double>& log2_lr,
                             const std::vector<double>& log2_a, double quantile) {
  if (!(quantile > 0.0 && quantile <= 0.5)) throw DomainError("sublevel_slope: quantile must lie in (0, 0.5]");
  if (losses.size() != log2_lr.size() || log2_lr.size() < 4 || log2_a.size() < 4) {
    throw DomainError("sublevel_slope: need a grid of at least 4 x 4");
  }
  std::vector<double> finite;
  for (const auto& row : losses) {
    if (row.size() != log2_a.size()) throw DomainError("sublevel_slope: grid is not rectangular");
    for (double v : row) {
      if (std::isfinite(v)) finite.push_back(v);
    }
  }
  if (finite.empty()) throw DomainError("sublevel_slope: no finite losses");
  std::sort(finite.begin(), finite.end());
  const std::size_t k = static_cast<std::size_t>(std::ceil(quantile * finite.size()));
  const double threshold = finite[std::max<std::size_t>(k, 1) - 1];
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    for (std::size_t j = 0; j < log2_a.size(); ++j) {
      if (std::isfinite(losses[i][j]) && losses[i][j] <= threshold) pts.emplace_back(log2_lr[i], log2_a[j]);
    }
  }
  if (pts.size() < 2) throw DomainError("sublevel_slope: fewer than 2 cells selected");
  double mx = 0, my = 0;
  for (const auto& [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= pts.size();
  my /= pts.size();
  double sxx = 0, syy = 0, sxy = 0;
  for (const auto& [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    syy += (y - my) * (y - my);
    sxy += (x - mx) * (y - my);
  }
  // Major axis of the 2 x 2 scatter matrix.
  const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  SublevelSlope s;
  s.selected = static_cast<int>(pts.size());
  s.slope = std::tan(theta);
  return s;
}

void write_fit_json(const std::string& path, const std::string& name, const PowerLawFit& fit,
                    const Expectation* expectation) {
  nlohmann::json j;
  j["name"] = name;
  j["exponent"] = fit.exponent;
  j["intercept"] = fit.intercept;
  j["r2"] = fit.r2;
  j["n_points"] = fit.n_points;
  if (expectation) {
    j["expected"] = expectation->target;
    j["tolerance"] = expectation->tolerance;
    j["pass"] = expectation->pass(fit.exponent);
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << j.dump(2) << '\n';
}

void write_warmup_csv(const std::string& path, const WarmupResult& r) {
  CsvWriter w(path, {"L", "mean_sq", "std_err"});
  for (const auto& p : r.points) w.row({p.L, p.mean_sq, p.std_err});
}

void write_diversity_csv(const std::string& path, const DiversityReport& r) {
  CsvWriter w(path, {"eps", "layer", "d", "d_normalized"});
  for (std::size_t i = 0; i < r.d_curve.size(); ++i) {
    w.row({r.eps_grid[i], r.layers[i], r.d_curve[i], r.d_normalized[i]});
  }
}

void write_diversity_json(const std::string& path, const DiversityReport& r, const Expectation* e) {
  nlohmann::json j;
  j["lambda"] = r.lambda;
  j["fitted_exponent"] = r.fitted_exponent;
  j["kappa_hat"] = r.kappa_hat;
  j["r2"] = r.fit.r2;
  j["n_points"] = r.fit.n_points;
  j["warnings"] = r.warnings;
  if (e) {
    j["expected"] = e->target;
    j["tolerance"] = e->tolerance;
    j["pass"] = e->pass(r.fitted_exponent);
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << j.dump(2) << '\n';
}

void write_deltaf_csv(const std::string& path, const DeltaFResult& r) {
  CsvWriter w(path, {"L", "abs_f1"});
  for (const auto& [L, f] : r.points) w.row({L, f});
}

}  // namespace depthmup::diag
