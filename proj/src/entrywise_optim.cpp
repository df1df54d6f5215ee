#include "depthmup/entrywise_optim.hpp"

#include <cmath>

#include "depthmup/errors.hpp"

namespace depthmup {

void UpdateRule::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in [0, 1)");
  if (!(epsilon >= 0.0)) throw ConfigError("adam_eps must be >= 0");
}

OptimizerState OptimizerState::for_shape(Eigen::Index rows, Eigen::Index cols, const UpdateRule& rule) {
  OptimizerState s;
  s.rows = rows;
  s.cols = cols;
  if (rule.kind == RuleKind::Adam) {
    s.m = Eigen::MatrixXd::Zero(rows, cols);
    s.v = Eigen::MatrixXd::Zero(rows, cols);
  }
  return s;
}

Eigen::MatrixXd q_eval(const UpdateRule& rule, OptimizerState& state, const Eigen::MatrixXd& g) {
  if (g.rows() != state.rows || g.cols() != state.cols) {
    throw ContractViolation("q_eval: gradient shape does not match optimizer state");
  }
  if (!g.allFinite()) state.saw_nonfinite = true;

  Eigen::MatrixXd out;
  switch (rule.kind) {
    case RuleKind::SGD:
      out = g;
      break;
    case RuleKind::SignSGD:
      out = g.unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : x); });
      break;
    case RuleKind::Adam: {
      if (state.m.rows() != g.rows() || state.m.cols() != g.cols()) {
        throw ContractViolation("q_eval: Adam moments not allocated for this shape");
      }
      state.m = rule.beta1 * state.m + (1.0 - rule.beta1) * g;
      state.v = rule.beta2 * state.v + (1.0 - rule.beta2) * g.cwiseProduct(g);
      const double t1 = static_cast<double>(state.step + 1);
      const double c1 = 1.0 - std::pow(rule.beta1, t1);
      const double c2 = 1.0 - std::pow(rule.beta2, t1);
      const double eps = rule.epsilon;
      out = state.m.binaryExpr(state.v, [c1, c2, eps](double m, double v) {
        const double denom = std::sqrt(v / c2 + eps);
        return denom == 0.0 ? 0.0 : (m / c1) / denom;
      });
      break;
    }
  }
  ++state.step;
  return out;
}

void apply_update(Eigen::MatrixXd& W, const Eigen::MatrixXd& grads, const Parametrization& p,
                  const UpdateRule& rule, OptimizerState& state, int L, int n, ParamGroup group) {
  if (W.rows() != grads.rows() || W.cols() != grads.cols()) {
    throw ContractViolation("apply_update: parameter and gradient shapes differ");
  }
  const double prescale = grad_prescale(p, L, n, group);
  const double lr = effective_update_scale(p, L, n, group);
  W.noalias() -= lr * q_eval(rule, state, prescale * grads);
}

}  // namespace depthmup
