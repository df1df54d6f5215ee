#pragma once

#include <Eigen/Dense>

#include "depthmup/parametrization.hpp"

namespace depthmup {

struct UpdateRule {
  RuleKind kind = RuleKind::SGD;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Per-tensor optimizer memory. `m` and `v` are only allocated for Adam.
struct OptimizerState {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  long step = 0;
  Eigen::MatrixXd m;
  Eigen::MatrixXd v;
  /// Set once a non-finite entry has been fed to q_eval; the value itself is propagated.
  bool saw_nonfinite = false;

  static OptimizerState for_shape(Eigen::Index rows, Eigen::Index cols, const UpdateRule& rule);
};

/// One application of the entrywise rule Q_t to an already prescaled gradient.
/// Advances `state`. SGD returns the input, SignSGD its sign (sign(0) = 0), Adam the
/// bias-corrected ratio m_hat / sqrt(v_hat + epsilon); a zero denominator yields 0.
Eigen::MatrixXd q_eval(const UpdateRule& rule, OptimizerState& state, const Eigen::MatrixXd& g_scaled);

/// W <- W - effective_update_scale * Q(grad_prescale * grads), in place.
void apply_update(Eigen::MatrixXd& W, const Eigen::MatrixXd& grads, const Parametrization& p,
                  const UpdateRule& rule, OptimizerState& state, int L, int n, ParamGroup group);

}  // namespace depthmup
