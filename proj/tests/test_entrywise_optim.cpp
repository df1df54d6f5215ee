#include <doctest.h>

#include <cmath>
#include <limits>

#include "depthmup/entrywise_optim.hpp"
#include "depthmup/errors.hpp"
#include "depthmup/experiments.hpp"

using namespace depthmup;
using Eigen::MatrixXd;

namespace {

MatrixXd row(std::initializer_list<double> v) {
  MatrixXd m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

}  // namespace

TEST_CASE("q_eval examples") {
  UpdateRule sgd{RuleKind::SGD};
  auto s = OptimizerState::for_shape(1, 2, sgd);
  CHECK(q_eval(sgd, s, row({3, -1})) == row({3, -1}));
  CHECK(s.step == 1);

  UpdateRule sign{RuleKind::SignSGD};
  auto ss = OptimizerState::for_shape(1, 3, sign);
  CHECK(q_eval(sign, ss, row({3, -1, 0})) == row({1, -1, 0}));

  UpdateRule adam{RuleKind::Adam};
  auto sa = OptimizerState::for_shape(1, 1, adam);
  const double expected = 2.0 / std::sqrt(4.0 + 1e-8);
  CHECK(q_eval(adam, sa, row({2}))(0, 0) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(expected == doctest::Approx(0.99999999875).epsilon(1e-14));
}

TEST_CASE("adam bias corrections cancel on a constant stream") {
  UpdateRule adam{RuleKind::Adam};
  adam.epsilon = 0.0;
  auto s = OptimizerState::for_shape(2, 2, adam);
  for (int t = 0; t < 20; ++t) {
    const MatrixXd q = q_eval(adam, s, MatrixXd::Constant(2, 2, 0.7));
    CHECK((q.array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("zero history gives zero") {
  for (RuleKind k : {RuleKind::SGD, RuleKind::SignSGD, RuleKind::Adam}) {
    UpdateRule r{k};
    auto s = OptimizerState::for_shape(3, 2, r);
    for (int t = 0; t < 3; ++t) CHECK(q_eval(r, s, MatrixXd::Zero(3, 2)).isZero(0.0));
  }
}

TEST_CASE("scale invariance") { CHECK(exp::scale_invariance_error(11) < 1e-12); }

TEST_CASE("determinism") {
  UpdateRule adam{RuleKind::Adam};
  auto a = OptimizerState::for_shape(1, 3, adam);
  auto b = OptimizerState::for_shape(1, 3, adam);
  for (int t = 0; t < 4; ++t) {
    const MatrixXd g = row({0.1 * t, -2.0, 3.0 + t});
    CHECK(q_eval(adam, a, g) == q_eval(adam, b, g));
  }
}

TEST_CASE("errors and non-finite input") {
  UpdateRule sgd{RuleKind::SGD};
  auto s = OptimizerState::for_shape(2, 2, sgd);
  CHECK_THROWS_AS(q_eval(sgd, s, MatrixXd::Zero(1, 2)), ContractViolation);
  const MatrixXd q = q_eval(sgd, s, row({std::numeric_limits<double>::quiet_NaN(), 1}).replicate(2, 1));
  CHECK(std::isnan(q(0, 0)));
  CHECK(s.saw_nonfinite);

  UpdateRule bad{RuleKind::Adam};
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.beta1 = 0.9;
  bad.epsilon = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("apply_update") {
  Parametrization p;
  p.eta = 1.0;
  p.gamma = 0.0;
  p.delta = 0.0;
  p.hidden = {0.0, 0.0};
  UpdateRule sgd{RuleKind::SGD};
  MatrixXd W = row({1, 2, 3});
  auto s = OptimizerState::for_shape(1, 3, sgd);
  apply_update(W, row({0.5, -1, 0}), p, sgd, s, 8, 4, ParamGroup::Hidden);
  CHECK(W == row({0.5, 3, 3}));

  MatrixXd W2 = W;
  apply_update(W2, MatrixXd::Zero(1, 3), p, sgd, s, 8, 4, ParamGroup::Hidden);
  CHECK(W2 == W);
  CHECK(s.step == 2);

  const Parametrization dm = depth_mup_preset(RuleKind::Adam);
  UpdateRule sign{RuleKind::SignSGD};
  MatrixXd V = MatrixXd::Zero(3, 3);
  auto sv = OptimizerState::for_shape(3, 3, sign);
  MatrixXd g = MatrixXd::Random(3, 3);
  g(1, 1) = 0.0;
  apply_update(V, g, dm, sign, sv, 64, 128, ParamGroup::Hidden);
  const double scale = effective_update_scale(dm, 64, 128, ParamGroup::Hidden);
  for (Eigen::Index i = 0; i < 9; ++i) {
    if (i == 4) {
      CHECK(V.data()[i] == 0.0);
    } else {
      CHECK(std::abs(V.data()[i]) == doctest::Approx(scale).epsilon(1e-15));
      CHECK((V.data()[i] < 0) == (g.data()[i] > 0));
    }
  }
}
