#include "depthmup/resnet_sim.hpp"

#include <cmath>

#include "depthmup/csv.hpp"
#include "depthmup/errors.hpp"
#include "depthmup/rng.hpp"

namespace depthmup {

namespace sim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(Placement p) { return p == Placement::Post ? "post" : "pre"; }

std::string_view to_string(LossKind l) {
  return l == LossKind::Squared ? "squared" : "softmax_ce";
}

Placement parse_placement(std::string_view s) {
  if (s == "post") return Placement::Post;
  if (s == "pre") return Placement::Pre;
  throw ConfigError("unknown placement '" + std::string(s) + "' (expected post|pre)");
}

LossKind parse_loss(std::string_view s) {
  if (s == "squared") return LossKind::Squared;
  if (s == "softmax_ce" || s == "logistic" || s == "softmax") return LossKind::SoftmaxCrossEntropy;
  throw ConfigError("unknown loss '" + std::string(s) + "' (expected squared|softmax_ce)");
}

void NetConfig::validate() const {
  if (d_in < 1 || d_out < 1) throw ConfigError("NetConfig: d_in and d_out must be >= 1");
  if (n < 1) throw ConfigError("NetConfig: width n must be >= 1");
  if (L < 1) throw ConfigError("NetConfig: depth L must be >= 1");
  if (k < 1) throw ConfigError("NetConfig: block depth k must be >= 1");
  if (placement == Placement::Pre && k != 1) {
    throw ConfigError("NetConfig: pre-nonlinearity placement requires block depth k = 1");
  }
  if (loss == LossKind::SoftmaxCrossEntropy && d_out < 2) {
    throw ConfigError("NetConfig: softmax cross-entropy needs d_out >= 2");
  }
}

void Batch::validate(const NetConfig& cfg) const {
  if (inputs.cols() < 1) throw ContractViolation("Batch: empty batch");
  if (inputs.rows() != cfg.d_in) throw ContractViolation("Batch: input rows != d_in");
  if (targets.rows() != cfg.d_out || targets.cols() != inputs.cols()) {
    throw ContractViolation("Batch: targets must be d_out x B");
  }
  if (!inputs.allFinite() || !targets.allFinite()) throw ContractViolation("Batch: non-finite entries");
}

VectorXd ms(const VectorXd& x) {
  if (x.size() == 0) return x;
  return x.array() - x.mean();
}

MatrixXd ms_columns(const MatrixXd& x) {
  if (x.rows() == 0) return x;
  return x.rowwise() - x.colwise().mean();
}

namespace {

MatrixXd apply_phi(Nonlinearity phi, const MatrixXd& h) {
  if (phi == Nonlinearity::Identity) return h;
  return h.unaryExpr([phi](double v) { return activate(phi, v); });
}

MatrixXd phi_prime_times(Nonlinearity phi, const MatrixXd& h, const MatrixXd& g) {
  if (phi == Nonlinearity::Identity) return g;
  return h.binaryExpr(g, [phi](double hv, double gv) { return activate_prime(phi, hv) * gv; });
}

void layer_norm(const MatrixXd& x, MatrixXd& z, Eigen::RowVectorXd& inv_std) {
  const double n = static_cast<double>(x.rows());
  z = ms_columns(x);
  inv_std = ((z.array().square().colwise().sum() / n) + kLayerNormEps).sqrt().inverse().matrix();
  z = z * inv_std.asDiagonal();
}

MatrixXd layer_norm_backward(const MatrixXd& z, const Eigen::RowVectorXd& inv_std, const MatrixXd& dz) {
  const double n = static_cast<double>(z.rows());
  const Eigen::RowVectorXd mean_dz = dz.colwise().sum() / n;
  const Eigen::RowVectorXd mean_dz_z = z.cwiseProduct(dz).colwise().sum() / n;
  MatrixXd dx = dz.rowwise() - mean_dz;
  dx -= z * mean_dz_z.asDiagonal();
  return dx * inv_std.asDiagonal();
}

}  // namespace

NetState init(const NetConfig& cfg, std::uint64_t seed, bool keep_init_snapshot) {
  cfg.validate();
  NetState s;
  s.seed = seed;
  const double n = static_cast<double>(cfg.n);
  Rng rng(derive_seed(seed, {0x1}));
  s.U = rng.normal_matrix(cfg.n, cfg.d_in, 1.0);
  s.V = rng.normal_matrix(cfg.n, cfg.d_out, 1.0 / n);
  s.W.resize(cfg.L);
  for (int l = 0; l < cfg.L; ++l) {
    Rng layer_rng(derive_seed(seed, {0x2, static_cast<std::uint64_t>(l)}));
    s.W[l].reserve(cfg.k);
    for (int j = 0; j < cfg.k; ++j) s.W[l].push_back(layer_rng.normal_matrix(cfg.n, cfg.n, 1.0 / std::sqrt(n)));
  }
  if (keep_init_snapshot) s.W_init = s.W;
  return s;
}

ForwardCache forward(const NetState& state, const NetConfig& cfg, const Parametrization& p,
                     const MatrixXd& inputs) {
  if (inputs.rows() != cfg.d_in) throw ContractViolation("forward: input rows != d_in");
  if (static_cast<int>(state.W.size()) != cfg.L) throw ContractViolation("forward: state depth != cfg.L");
  ForwardCache c;
  c.multiplier = branch_multiplier(p, cfg.L);
  c.inputs = inputs;
  c.x.reserve(cfg.L + 1);
  c.x.push_back(state.U * inputs);
  c.blocks.resize(cfg.L);
  for (int l = 1; l <= cfg.L; ++l) {
    const MatrixXd& prev = c.x.back();
    BlockCache& b = c.blocks[l - 1];
    if (cfg.pre_layernorm) {
      layer_norm(prev, b.input, b.ln_inv_std);
    } else {
      b.input = prev;
    }
    MatrixXd g;
    if (cfg.placement == Placement::Pre) {
      b.act.push_back(apply_phi(cfg.phi, b.input));
      b.h.push_back(state.W[l - 1][0] * b.act[0]);
      g = b.h[0];
    } else {
      const MatrixXd* in = &b.input;
      for (int j = 0; j < cfg.k; ++j) {
        b.h.push_back(state.W[l - 1][j] * (*in));
        b.act.push_back(apply_phi(cfg.phi, b.h.back()));
        in = &b.act.back();
      }
      g = b.act.back();
    }
    if (cfg.mean_subtraction) g = ms_columns(g);
    MatrixXd next = prev + c.multiplier * g;
    if (!next.allFinite()) {
      throw NumericalError("forward: non-finite activation at layer " + std::to_string(l), l);
    }
    c.x.push_back(std::move(next));
  }
  c.f = state.V.transpose() * c.x.back();
  return c;
}

Gradients backward(const NetState& state, const NetConfig& cfg, const Parametrization& /*p*/,
                   const ForwardCache& cache, const MatrixXd& chi) {
  if (static_cast<int>(cache.x.size()) != cfg.L + 1 || static_cast<int>(state.W.size()) != cfg.L) {
    throw ContractViolation("backward: cache does not match state/config depth");
  }
  if (chi.rows() != cfg.d_out || chi.cols() != cache.f.cols()) {
    throw ContractViolation("backward: chi must be d_out x B");
  }
  Gradients g;
  g.dW.resize(cfg.L);
  if (cfg.train_io) g.dV = cache.x.back() * chi.transpose();

  MatrixXd dx = state.V * chi;
  for (int l = cfg.L; l >= 1; --l) {
    const BlockCache& b = cache.blocks[l - 1];
    const auto& Wl = state.W[l - 1];
    auto& dWl = g.dW[l - 1];
    dWl.resize(cfg.k);

    MatrixXd dg = cache.multiplier * dx;
    if (cfg.mean_subtraction) dg = ms_columns(dg);

    MatrixXd dinput;
    if (cfg.placement == Placement::Pre) {
      dWl[0] = dg * b.act[0].transpose();
      MatrixXd du = Wl[0].transpose() * dg;
      dinput = phi_prime_times(cfg.phi, b.input, du);
    } else {
      MatrixXd da = std::move(dg);
      for (int j = cfg.k - 1; j >= 0; --j) {
        MatrixXd dh = phi_prime_times(cfg.phi, b.h[j], da);
        const MatrixXd& in = j == 0 ? b.input : b.act[j - 1];
        dWl[j] = dh * in.transpose();
        da = Wl[j].transpose() * dh;
      }
      dinput = std::move(da);
    }
    if (cfg.pre_layernorm) dinput = layer_norm_backward(b.input, b.ln_inv_std, dinput);
    dx += dinput;
  }
  if (cfg.train_io) g.dU = dx * cache.inputs.transpose();
  return g;
}

LossEval evaluate_loss(LossKind kind, const MatrixXd& f, const MatrixXd& targets) {
  if (f.rows() != targets.rows() || f.cols() != targets.cols()) {
    throw ContractViolation("evaluate_loss: output and target shapes differ");
  }
  const double B = static_cast<double>(f.cols());
  LossEval out;
  if (kind == LossKind::Squared) {
    MatrixXd diff = f - targets;
    out.loss = 0.5 * diff.squaredNorm() / B;
    out.chi = diff / B;
    return out;
  }
  out.chi.resize(f.rows(), f.cols());
  double total = 0.0;
  for (Eigen::Index j = 0; j < f.cols(); ++j) {
    const double mx = f.col(j).maxCoeff();
    VectorXd e = (f.col(j).array() - mx).exp();
    const double z = e.sum();
    VectorXd prob = e / z;
    const double log_z = mx + std::log(z);
    for (Eigen::Index i = 0; i < f.rows(); ++i) total -= targets(i, j) * (f(i, j) - log_z);
    out.chi.col(j) = (prob * targets.col(j).sum() - targets.col(j)) / B;
  }
  out.loss = total / B;
  return out;
}

double rms(const MatrixXd& x) {
  if (x.size() == 0) return 0.0;
  return std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
}

std::vector<int> probe_layers(int L) { return {0, L / 4, L / 2, (3 * L) / 4, L}; }

StepLog train_step(NetState& state, const NetConfig& cfg, const Parametrization& p,
                   const UpdateRule& rule, const Batch& batch) {
  batch.validate(cfg);
  ForwardCache cache = forward(state, cfg, p, batch.inputs);
  LossEval le = evaluate_loss(cfg.loss, cache.f, batch.targets);
  Gradients g = backward(state, cfg, p, cache, le.chi);

  StepLog log;
  log.step = state.step;
  log.loss = le.loss;
  log.f = cache.f;
  log.chi = le.chi;
  for (int l : probe_layers(cfg.L)) log.layer_rms.push_back(rms(cache.x[l]));

  if (state.opt_W.empty()) {
    state.opt_W.resize(cfg.L);
    for (int l = 0; l < cfg.L; ++l) {
      for (int j = 0; j < cfg.k; ++j) state.opt_W[l].push_back(OptimizerState::for_shape(cfg.n, cfg.n, rule));
    }
    if (cfg.train_io) {
      state.opt_U = OptimizerState::for_shape(cfg.n, cfg.d_in, rule);
      state.opt_V = OptimizerState::for_shape(cfg.n, cfg.d_out, rule);
    }
  }
  for (int l = 0; l < cfg.L; ++l) {
    for (int j = 0; j < cfg.k; ++j) {
      apply_update(state.W[l][j], g.dW[l][j], p, rule, state.opt_W[l][j], cfg.L, cfg.n, ParamGroup::Hidden);
    }
  }
  if (cfg.train_io) {
    // Input/output layers are not depth-scaled: evaluate their factors at the base depth.
    apply_update(state.U, *g.dU, p, rule, *state.opt_U, p.base_depth, cfg.n, ParamGroup::Input);
    apply_update(state.V, *g.dV, p, rule, *state.opt_V, p.base_depth, cfg.n, ParamGroup::Output);
  }
  ++state.step;
  return log;
}

FeatureSnapshot feature_snapshot(const ForwardCache& cache, int l) {
  if (l < 0 || l >= static_cast<int>(cache.x.size())) {
    throw DomainError("feature_snapshot: layer index " + std::to_string(l) + " out of range");
  }
  return {cache.x[l], rms(cache.x[l])};
}

std::string step_log_csv_header() {
  return "step,loss,f_norm,chi_norm,layer_rms_0,layer_rms_L4,layer_rms_L2,layer_rms_3L4,layer_rms_L";
}

std::string step_log_csv_row(const StepLog& log) {
  std::string out = std::to_string(log.step) + ',' + format_double(log.loss) + ',' + format_double(log.f.norm()) +
                    ',' + format_double(log.chi.norm());
  for (double r : log.layer_rms) out += ',' + format_double(r);
  return out;
}

}  // namespace sim
}  // namespace depthmup
