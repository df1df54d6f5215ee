#include "depthmup/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "depthmup/errors.hpp"
#include "depthmup/resnet_sim.hpp"
#include "depthmup/rng.hpp"
#include "depthmup/tp_linear.hpp"
#include "depthmup/tp_nonlinear.hpp"
#include "depthmup/wide_sim.hpp"

namespace depthmup::exp {

namespace {

// Runs job(i) for i in [0, count) on `threads` workers. Each job writes only its own slot.
template <class Job>
void parallel_for(int count, int threads, Job job) {
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) job(i);
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min(threads, count); ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

sim::WideSimConfig wide_config(int n, int L, Nonlinearity phi, const std::vector<double>& xi,
                               const std::vector<double>& y) {
  sim::WideSimConfig w;
  w.n = n;
  w.L = L;
  w.phi = phi;
  w.mean_subtraction = phi != Nonlinearity::Identity;
  // The limit engines describe SGD with unit learning rate and depth ratios taken against 1.
  w.p = depth_mup_preset(RuleKind::SGD, 1.0, 1.0, 1);
  w.xi = xi;
  w.y = y;
  return w;
}

tp::LimitConfig limit_config(int L, const std::vector<double>& xi, const std::vector<double>& y) {
  tp::LimitConfig c;
  c.L = L;
  c.T = static_cast<int>(xi.size());
  c.xi = xi;
  c.y = y;
  return c;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

void scalar_stream(int T, std::uint64_t seed, std::vector<double>& xi, std::vector<double>& y) {
  DatasetSpec spec;
  spec.d_in = 1;
  spec.size = T;
  spec.seed = seed;
  const Dataset ds = synth_dataset(spec);
  xi.assign(ds.inputs.data(), ds.inputs.data() + T);
  y.assign(ds.targets.data(), ds.targets.data() + T);
}

void bounded_stream(int T, std::vector<double>& xi, std::vector<double>& y) {
  xi.resize(T);
  y.resize(T);
  for (int t = 0; t < T; ++t) {
    xi[t] = std::cos(1.3 * t);
    y[t] = std::sin(0.7 * t + 0.3);
  }
}

LinearAgreementReport linear_agreement(const LinearAgreementSpec& spec) {
  if (spec.widths.empty() || spec.seeds < 1) throw ConfigError("linear_agreement: empty grid");
  const tp::LimitResult lim = tp::run_depth_mup(limit_config(spec.L, spec.xi, spec.y));
  LinearAgreementReport r;
  for (int s : spec.steps) {
    for (int l : spec.layers) {
      if (s < 1 || s > spec.T || l < 0 || l > spec.L) throw DomainError("linear_agreement: observable out of range");
      r.limit.push_back(tp::layer_rms_limit(lim, s - 1, l));
    }
  }
  for (int n : spec.widths) {
    const sim::WideSimConfig w = wide_config(n, spec.L, Nonlinearity::Identity, spec.xi, spec.y);
    std::vector<std::vector<double>> per_seed(spec.seeds);
    parallel_for(spec.seeds, spec.threads, [&](int k) {
      const sim::WideTrace tr = sim::run_wide_sim(w, derive_seed(spec.seed, {static_cast<std::uint64_t>(n),
                                                                             static_cast<std::uint64_t>(k)}));
      for (int s : spec.steps) {
        for (int l : spec.layers) per_seed[k].push_back(tr.rms[s - 1][l]);
      }
    });
    std::vector<double> mean(r.limit.size(), 0.0);
    for (const auto& v : per_seed) {
      for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i] / spec.seeds;
    }
    std::vector<double> gap(mean.size());
    for (std::size_t i = 0; i < gap.size(); ++i) gap[i] = rel(mean[i], r.limit[i]);
    double sum = 0.0;
    for (double g : gap) sum += g;
    r.mean_gap.push_back(sum / gap.size());
    r.max_gap.push_back(*std::max_element(gap.begin(), gap.end()));
    r.mc.push_back(std::move(mean));
    r.rel_gap.push_back(std::move(gap));
  }
  r.monotone = true;
  for (std::size_t i = 1; i < r.mean_gap.size(); ++i) r.monotone = r.monotone && r.mean_gap[i] < r.mean_gap[i - 1];
  return r;
}

DepthConvergenceReport depth_convergence(const std::vector<int>& depths, const std::vector<double>& xi,
                                         const std::vector<double>& y, const std::vector<int>& steps) {
  if (depths.size() < 3) throw ConfigError("depth_convergence: need at least 3 depths");
  DepthConvergenceReport r;
  r.depths = depths;
  for (int L : depths) {
    if (L % 4 != 0) throw DomainError("depth_convergence: depths must be multiples of 4");
    const tp::LimitResult lim = tp::run_depth_mup(limit_config(L, xi, y));
    std::vector<double> o;
    for (int s : steps) {
      for (int q = 1; q <= 4; ++q) o.push_back(tp::layer_rms_limit(lim, s - 1, q * L / 4));
    }
    r.obs.push_back(std::move(o));
  }
  for (std::size_t i = 1; i < depths.size(); ++i) {
    std::vector<double> d;
    for (std::size_t k = 0; k < r.obs[i].size(); ++k) d.push_back(std::abs(r.obs[i][k] - r.obs[i - 1][k]));
    double m = 0.0;
    for (double v : d) m += v / d.size();
    r.mean_diff.push_back(m);
    r.diffs.push_back(std::move(d));
  }
  r.strictly_decreasing = true;
  for (std::size_t i = 1; i < r.diffs.size(); ++i) {
    double ratio = 0.0;
    for (std::size_t k = 0; k < r.diffs[i].size(); ++k) {
      if (!(r.diffs[i][k] < r.diffs[i - 1][k])) ++r.observable_violations;
      ratio += r.diffs[i - 1][k] / r.diffs[i][k] / r.diffs[i].size();
    }
    r.mean_ratio.push_back(ratio);
    r.strictly_decreasing = r.strictly_decreasing && r.mean_diff[i] < r.mean_diff[i - 1];
  }
  return r;
}

double vkernel_max_error(int order) {
  double worst = 0.0;
  const double vars[] = {0.5, 1.0, 2.0};
  const double rhos[] = {-0.99, -0.5, 0.0, 0.5, 0.99};
  for (Nonlinearity phi : {Nonlinearity::Identity, Nonlinearity::ReLU, Nonlinearity::Abs}) {
    for (double c11 : vars) {
      for (double c22 : vars) {
        for (double rho : rhos) {
          const tp::GaussPair g{c11, c22, rho * std::sqrt(c11 * c22)};
          worst = std::max({worst, std::abs(tp::v_phi_prime(phi, g) - tp::v_phi_prime_quadrature(phi, g, order)),
                            std::abs(tp::v_phi_c(phi, g) - tp::v_phi_c_quadrature(phi, g, order)),
                            std::abs(tp::v_phi_c_prime_literal(phi, g) -
                                     tp::v_phi_c_prime_literal_quadrature(phi, g, order))});
        }
      }
    }
  }
  return worst;
}

double identity_reduction_error(int L, const std::vector<double>& xi, const std::vector<double>& y) {
  const tp::LimitConfig lc = limit_config(L, xi, y);
  const tp::LimitResult a = tp::run_depth_mup(lc);
  tp::NonlinearConfig nc;
  nc.limit = lc;
  nc.phi = Nonlinearity::Identity;
  const tp::LimitResult b = tp::run_nonlinear(nc);
  double worst = 0.0;
  for (int t = 0; t < lc.T; ++t) {
    worst = std::max(worst, std::abs(a.trace.f_ring[t] - b.trace.f_ring[t]));
    for (int l = 0; l <= L; ++l) worst = std::max(worst, std::abs(a.trace.layer_rms[t][l] - b.trace.layer_rms[t][l]));
  }
  return worst;
}

KernelCheckReport nonlinear_kernel_check(Nonlinearity phi, int n, int L, const std::vector<double>& xi,
                                         const std::vector<double>& y, int seeds, std::uint64_t seed, int threads) {
  const int T = static_cast<int>(xi.size());
  tp::NonlinearConfig nc;
  nc.limit = limit_config(L, xi, y);
  nc.phi = phi;
  const tp::LimitResult lim = tp::run_nonlinear(nc);

  KernelCheckReport r;
  r.limit.resize(T, T);
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < T; ++s) r.limit(t, s) = lim.xcov(t, s, L);
  }
  const sim::WideSimConfig w = wide_config(n, L, phi, xi, y);
  std::vector<Eigen::MatrixXd> per_seed(seeds);
  parallel_for(seeds, threads, [&](int k) {
    per_seed[k] = sim::run_wide_sim(w, derive_seed(seed, {static_cast<std::uint64_t>(k)})).kernel;
  });
  r.mc = Eigen::MatrixXd::Zero(T, T);
  for (const auto& K : per_seed) r.mc += K / seeds;
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < T; ++s) {
      const double scale = std::sqrt(r.limit(t, t) * r.limit(s, s));
      r.max_rel_gap = std::max(r.max_rel_gap, std::abs(r.mc(t, s) - r.limit(t, s)) / scale);
    }
  }
  return r;
}

DiversityRun diversity_run(const DiversitySpec& spec) {
  DatasetSpec ds;
  ds.task = TaskKind::Classification;
  ds.d_in = spec.d_in;
  ds.size = 2048;
  ds.seed = derive_seed(spec.seed, {0xDA7A});
  const Dataset train = synth_dataset(ds);
  ds.size = spec.eval_batch;
  ds.seed = derive_seed(spec.seed, {0xE7A1});
  const Dataset eval = synth_dataset(ds);

  sim::NetConfig net;
  net.d_in = spec.d_in;
  net.d_out = train.d_out();
  net.n = spec.n;
  net.L = spec.L;
  net.phi = spec.phi;
  net.mean_subtraction = true;
  net.loss = sim::LossKind::SoftmaxCrossEntropy;
  Parametrization p = depth_mup_preset(RuleKind::Adam, 1.0, spec.lr);
  p.alpha = spec.alpha;
  p.gamma = spec.gamma;
  const UpdateRule rule{RuleKind::Adam};

  DiversityRun out;
  sim::NetState state = sim::init(net, spec.seed);
  const std::uint64_t batch_seed = derive_seed(spec.seed, {0xBA7C});
  for (int s = 0; s < spec.steps; ++s) {
    out.losses.push_back(sim::train_step(state, net, p, rule, train.minibatch(s, spec.batch, batch_seed)).loss);
  }
  const sim::ForwardCache cache = sim::forward(state, net, p, eval.inputs);
  out.report = diag::feature_diversity_exponent(cache.x, spec.lambda, diag::dyadic_eps_grid(spec.L, spec.lambda));
  return out;
}

HarnessConfig desk_sweep_config() {
  HarnessConfig c;
  c.rule = UpdateRule{RuleKind::Adam};
  c.param = depth_mup_preset(RuleKind::Adam, 1.0, 1e-3, 8);
  c.net.n = 64;
  c.net.phi = Nonlinearity::ReLU;
  c.net.mean_subtraction = true;
  c.net.loss = sim::LossKind::Squared;
  c.dataset.kind = DatasetKind::Synthetic;
  c.dataset.task = TaskKind::Regression;
  c.dataset.d_in = 8;
  c.dataset.size = 1024;
  c.training.steps = 1000;
  c.training.batch_size = 32;
  c.sweep.depths = {8, 64};
  c.sweep.lrs.clear();
  for (int j = -3; j <= 3; ++j) c.sweep.lrs.push_back(std::ldexp(1e-3, j));
  c.sweep.a_values = {1.0};
  c.sweep.seeds = 3;
  c.sweep.experiment = ExperimentKind::Train;
  return c;
}

TransferReport transfer_sweep(HarnessConfig c) {
  c.sweep.a_values = {c.param.a};
  TransferReport r;
  r.sweep = run_sweep(c);
  r.losses = mean_loss_grid(r.sweep, c.sweep.depths, static_cast<int>(c.sweep.lrs.size()), 0);
  r.shift = diag::transfer_shift(r.losses, c.sweep.lrs);
  return r;
}

SlopeReport slope_sweep(HarnessConfig c, double quantile) {
  if (c.sweep.depths.size() != 1) throw ConfigError("slope_sweep: exactly one depth");
  SlopeReport r;
  r.sweep = run_sweep(c);
  const int nl = static_cast<int>(c.sweep.lrs.size());
  const int na = static_cast<int>(c.sweep.a_values.size());
  r.losses.assign(nl, std::vector<double>(na));
  for (int j = 0; j < na; ++j) {
    const auto g = mean_loss_grid(r.sweep, c.sweep.depths, nl, j);
    for (int i = 0; i < nl; ++i) r.losses[i][j] = g[0][i];
  }
  std::vector<double> log2_lr, log2_a;
  for (double v : c.sweep.lrs) log2_lr.push_back(std::log2(v));
  for (double v : c.sweep.a_values) log2_a.push_back(std::log2(v));
  r.slope = diag::sublevel_slope(r.losses, log2_lr, log2_a, quantile);
  return r;
}

// ---- property checks ------------------------------------------------------------------------

namespace {

double loss_of(const sim::NetState& s, const sim::NetConfig& cfg, const Parametrization& p, const sim::Batch& b) {
  return sim::evaluate_loss(cfg.loss, sim::forward(s, cfg, p, b.inputs).f, b.targets).loss;
}

// Relative error of an analytic gradient against central differences, entry by entry on M.
double fd_error(sim::NetState& s, Eigen::MatrixXd& M, const Eigen::MatrixXd& analytic, const sim::NetConfig& cfg,
                const Parametrization& p, const sim::Batch& b) {
  const double h = 1e-5;
  Eigen::MatrixXd fd(M.rows(), M.cols());
  for (Eigen::Index i = 0; i < M.size(); ++i) {
    const double keep = M.data()[i];
    M.data()[i] = keep + h;
    const double up = loss_of(s, cfg, p, b);
    M.data()[i] = keep - h;
    const double down = loss_of(s, cfg, p, b);
    M.data()[i] = keep;
    fd.data()[i] = (up - down) / (2 * h);
  }
  return (fd - analytic).norm() / std::max(analytic.norm(), 1e-12);
}

}  // namespace

double gradient_check_max_error(std::uint64_t seed) {
  double worst = 0.0;
  int variant = 0;
  for (auto placement : {sim::Placement::Post, sim::Placement::Pre}) {
    for (bool msub : {false, true}) {
      for (bool ln : {false, true}) {
        for (int k : {1, 2}) {
          if (placement == sim::Placement::Pre && k != 1) continue;
          for (Nonlinearity phi : {Nonlinearity::Identity, Nonlinearity::ReLU, Nonlinearity::Abs}) {
            for (auto loss : {sim::LossKind::Squared, sim::LossKind::SoftmaxCrossEntropy}) {
              sim::NetConfig cfg;
              cfg.d_in = 3;
              cfg.d_out = 2;
              cfg.n = 8;
              cfg.L = 3;
              cfg.k = k;
              cfg.phi = phi;
              cfg.placement = placement;
              cfg.mean_subtraction = msub;
              cfg.pre_layernorm = ln;
              cfg.train_io = true;
              cfg.loss = loss;
              const Parametrization p = depth_mup_preset(RuleKind::SGD, 1.3, 1e-2, 2);
              const std::uint64_t s = derive_seed(seed, {static_cast<std::uint64_t>(variant++)});
              sim::NetState st = sim::init(cfg, s);
              Rng rng(derive_seed(s, {1}));
              // Output weights of unit scale keep every gradient well above rounding noise.
              st.V = rng.normal_matrix(cfg.n, cfg.d_out, 1.0 / std::sqrt(cfg.n));
              sim::Batch b;
              b.inputs = rng.normal_matrix(cfg.d_in, 3, 1.0);
              b.targets = loss == sim::LossKind::Squared ? rng.normal_matrix(cfg.d_out, 3, 1.0)
                                                         : Eigen::MatrixXd(Eigen::MatrixXd::Identity(2, 3));
              const sim::ForwardCache cache = sim::forward(st, cfg, p, b.inputs);
              const auto le = sim::evaluate_loss(cfg.loss, cache.f, b.targets);
              const sim::Gradients g = sim::backward(st, cfg, p, cache, le.chi);
              worst = std::max(worst, fd_error(st, st.U, *g.dU, cfg, p, b));
              worst = std::max(worst, fd_error(st, st.V, *g.dV, cfg, p, b));
              for (int l = 0; l < cfg.L; ++l) {
                for (int j = 0; j < k; ++j) worst = std::max(worst, fd_error(st, st.W[l][j], g.dW[l][j], cfg, p, b));
              }
            }
          }
        }
      }
    }
  }
  return worst;
}

double ms_identity_error(std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    const Eigen::VectorXd x = rng.normal_vector(17, 2.0).array() + 3.0;
    const Eigen::VectorXd y = rng.normal_vector(17, 1.0);
    const Eigen::VectorXd mx = sim::ms(x);
    worst = std::max({worst, (sim::ms(mx) - mx).cwiseAbs().maxCoeff(), std::abs(mx.sum()),
                      std::abs(mx.dot(y) - x.dot(sim::ms(y)))});
  }
  return worst;
}

double scale_invariance_error(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Eigen::MatrixXd> grads;
  for (int t = 0; t < 6; ++t) grads.push_back(rng.normal_matrix(4, 5, 1.0));
  double worst = 0.0;
  for (RuleKind kind : {RuleKind::SignSGD, RuleKind::Adam}) {
    UpdateRule rule{kind};
    rule.epsilon = 0.0;
    for (double c : {1e-3, 7.0, 1e4}) {
      OptimizerState a = OptimizerState::for_shape(4, 5, rule);
      OptimizerState b = OptimizerState::for_shape(4, 5, rule);
      for (const auto& g : grads) {
        const Eigen::MatrixXd qa = q_eval(rule, a, g);
        const Eigen::MatrixXd qb = q_eval(rule, b, c * g);
        worst = std::max(worst, (qa - qb).cwiseAbs().maxCoeff() / std::max(qa.cwiseAbs().maxCoeff(), 1e-300));
      }
    }
  }
  return worst;
}

double generalized_specialization_error(int L, const std::vector<double>& xi, const std::vector<double>& y) {
  const tp::LimitConfig lc = limit_config(L, xi, y);
  const tp::LimitResult a = tp::run_depth_mup(lc);
  const tp::LimitResult b = tp::run_generalized(lc);
  double worst = 0.0;
  for (int t = 0; t < lc.T; ++t) {
    worst = std::max(worst, std::abs(a.trace.f_ring[t] - b.trace.f_ring[t]));
    for (int l = 0; l <= L; ++l) worst = std::max(worst, std::abs(a.trace.layer_rms[t][l] - b.trace.layer_rms[t][l]));
  }
  return worst;
}

double output_kernel_min_eigenvalue(Nonlinearity phi, int L, const std::vector<double>& xi,
                                    const std::vector<double>& y) {
  tp::LimitResult r;
  if (phi == Nonlinearity::Identity) {
    r = tp::run_depth_mup(limit_config(L, xi, y));
  } else {
    tp::NonlinearConfig nc;
    nc.limit = limit_config(L, xi, y);
    nc.phi = phi;
    r = tp::run_nonlinear(nc);
  }
  const auto K = tp::output_kernel_matrix(r);
  const int T = static_cast<int>(K.size());
  Eigen::MatrixXd M(T, T);
  for (int i = 0; i < T; ++i) {
    for (int j = 0; j < T; ++j) M(i, j) = K[i][j];
  }
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M).eigenvalues();
  return ev.minCoeff() / ev.maxCoeff();
}

bool sweep_thread_determinism(int threads) {
  HarnessConfig c = desk_sweep_config();
  c.net.n = 8;
  c.dataset.size = 64;
  c.training.steps = 6;
  c.training.batch_size = 4;
  c.sweep.depths = {2, 4};
  c.rule = UpdateRule{RuleKind::SGD};
  c.param = depth_mup_preset(RuleKind::SGD, 1.0, 1e-3, 8);
  c.sweep.lrs = {1e-3, 4e-3, 1e30};  // the last one diverges into a NaN row
  c.sweep.a_values = {1.0, 2.0};
  c.sweep.seeds = 2;
  c.threads = 1;
  const std::string one = sweep_csv_string(run_sweep(c));
  c.threads = threads;
  return one == sweep_csv_string(run_sweep(c));
}

}  // namespace depthmup::exp
