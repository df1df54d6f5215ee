#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "depthmup/checkpoint.hpp"
#include "depthmup/dataset.hpp"
#include "depthmup/errors.hpp"
#include "depthmup/experiments.hpp"
#include "depthmup/resnet_sim.hpp"
#include "depthmup/rng.hpp"

using namespace depthmup;
using namespace depthmup::sim;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

NetConfig small_config() {
  NetConfig c;
  c.d_in = 2;
  c.d_out = 1;
  c.n = 16;
  c.L = 4;
  c.phi = Nonlinearity::Identity;
  c.mean_subtraction = false;
  return c;
}

}  // namespace

TEST_CASE("mean subtraction") {
  CHECK(ms(VectorXd::Ones(3)).isZero(0.0));
  VectorXd x(2);
  x << 2, 0;
  VectorXd e(2);
  e << 1, -1;
  CHECK(ms(x) == e);
  CHECK(exp::ms_identity_error(3) < 1e-12);
}

TEST_CASE("init is deterministic and has the documented variances") {
  NetConfig c = small_config();
  const NetState a = init(c, 42);
  const NetState b = init(c, 42);
  CHECK(a.U == b.U);
  CHECK(a.V == b.V);
  CHECK(a.W[3][0] == b.W[3][0]);
  CHECK(init(c, 43).U != a.U);

  c.n = 4096;
  c.L = 1;
  c.d_in = 1;
  c.d_out = 4;
  const NetState s = init(c, 7);
  const double n = c.n;
  CHECK(s.W[0][0].squaredNorm() / (n * n) == doctest::Approx(1.0 / n).epsilon(0.05));
  CHECK(s.V.squaredNorm() / s.V.size() == doctest::Approx(1.0 / (n * n)).epsilon(0.05));
  CHECK(s.U.squaredNorm() / s.U.size() == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("zero blocks pass the input through") {
  for (Nonlinearity phi : {Nonlinearity::Identity, Nonlinearity::ReLU, Nonlinearity::Abs}) {
    NetConfig c = small_config();
    c.phi = phi;
    NetState s = init(c, 1);
    for (auto& blk : s.W) {
      for (auto& W : blk) W.setZero();
    }
    const MatrixXd xi = MatrixXd::Random(2, 3);
    const ForwardCache fc = forward(s, c, depth_mup_preset(RuleKind::SGD), xi);
    CHECK((fc.x.back() - fc.x[0]).norm() == 0.0);
    CHECK((fc.f - s.V.transpose() * s.U * xi).norm() < 1e-15);
  }
}

TEST_CASE("one identity block matches the closed form") {
  NetConfig c = small_config();
  c.L = 1;
  Parametrization p = depth_mup_preset(RuleKind::SGD, 1.0, 1.0, 1);
  const NetState s = init(c, 5);
  const MatrixXd xi = MatrixXd::Random(2, 4);
  const MatrixXd I = MatrixXd::Identity(c.n, c.n);
  const MatrixXd expected = s.V.transpose() * (I + s.W[0][0]) * s.U * xi;
  CHECK((forward(s, c, p, xi).f - expected).norm() < 1e-12 * expected.norm());
}

TEST_CASE("second moment at init follows the product formula") {
  NetConfig c = small_config();
  c.d_in = 1;
  c.n = 256;
  c.L = 16;
  const Parametrization p = depth_mup_preset(RuleKind::SGD, 0.8);
  const double bm = branch_multiplier(p, c.L);
  const double expected = std::pow(1.0 + bm * bm, c.L);
  const int seeds = 24;
  double mean = 0.0, m2 = 0.0;
  for (int k = 0; k < seeds; ++k) {
    const NetState s = init(c, 100 + k);
    const ForwardCache fc = forward(s, c, p, MatrixXd::Ones(1, 1));
    const double r = fc.x.back().squaredNorm() / fc.x[0].squaredNorm();
    mean += r / seeds;
    m2 += r * r / seeds;
  }
  const double se = std::sqrt((m2 - mean * mean) / (seeds - 1));
  CHECK(std::abs(mean - expected) < 4 * se + 1e-12);
}

TEST_CASE("depth stability at initialization") {
  NetConfig c = small_config();
  c.d_in = 1;
  c.n = 256;
  Parametrization p = depth_mup_preset(RuleKind::SGD, 1.0, 1e-3, 1);
  auto max_ratio = [&](int L, std::uint64_t seed) {
    c.L = L;
    const ForwardCache fc = forward(init(c, seed), c, p, MatrixXd::Ones(1, 1));
    double m = 0.0;
    for (const auto& x : fc.x) m = std::max(m, rms(x));
    return m / rms(fc.x[0]);
  };
  for (int L : {8, 32, 128, 512}) CHECK(max_ratio(L, 3) <= std::exp(0.5) * 1.05);

  p.alpha = 0.25;
  double prev = max_ratio(32, 9);
  for (int L : {64, 128}) {
    const double cur = max_ratio(L, 9);
    CHECK(cur >= 2.0 * prev);
    prev = cur;
  }
}

TEST_CASE("gradients match finite differences on every toggle") {
  CHECK(exp::gradient_check_max_error(2024) <= 1e-4);
}

TEST_CASE("zero chi and frozen input/output layers") {
  NetConfig c = small_config();
  c.k = 2;
  c.phi = Nonlinearity::ReLU;
  const NetState s = init(c, 8);
  const Parametrization p = depth_mup_preset(RuleKind::SGD);
  const ForwardCache fc = forward(s, c, p, MatrixXd::Random(2, 3));
  const Gradients g = backward(s, c, p, fc, MatrixXd::Zero(1, 3));
  for (const auto& blk : g.dW) {
    for (const auto& d : blk) CHECK(d.isZero(0.0));
  }
  CHECK_FALSE(g.dU.has_value());
  CHECK_FALSE(g.dV.has_value());
  CHECK_THROWS_AS(backward(s, c, p, fc, MatrixXd::Zero(2, 3)), ContractViolation);
}

TEST_CASE("zero learning rate leaves the state unchanged") {
  NetConfig c = small_config();
  c.train_io = true;
  NetState s = init(c, 4);
  const NetState before = s;
  Parametrization p = depth_mup_preset(RuleKind::SGD);
  p.eta = 0.0;
  Batch b{MatrixXd::Random(2, 5), MatrixXd::Random(1, 5)};
  const StepLog log = train_step(s, c, p, UpdateRule{RuleKind::SGD}, b);
  CHECK(log.loss > 0.0);
  CHECK(s.W[0][0] == before.W[0][0]);
  CHECK(s.U == before.U);
  CHECK(s.V == before.V);
}

TEST_CASE("single neuron SGD step by hand") {
  NetConfig c;
  c.d_in = c.d_out = c.n = 1;
  c.L = 1;
  c.phi = Nonlinearity::Identity;
  c.mean_subtraction = false;
  const Parametrization p = depth_mup_preset(RuleKind::SGD, 1.0, 0.1, 1);
  NetState s = init(c, 12);
  const double U = s.U(0, 0), V = s.V(0, 0), W = s.W[0][0](0, 0);
  const double xi = 0.7, y = 1.3;
  const double x0 = U * xi;
  const double x1 = x0 + W * x0;
  const double chi = V * x1 - y;
  const StepLog log = train_step(s, c, p, UpdateRule{RuleKind::SGD}, Batch{MatrixXd::Constant(1, 1, xi),
                                                                           MatrixXd::Constant(1, 1, y)});
  CHECK(log.f(0, 0) == doctest::Approx(V * x1).epsilon(1e-15));
  CHECK(log.chi(0, 0) == doctest::Approx(chi).epsilon(1e-15));
  CHECK(s.W[0][0](0, 0) == doctest::Approx(W - 0.1 * V * chi * x0).epsilon(1e-14));
  // Next forward pass: x^1 = x^0 + (W - 0.1 V chi x0) x0.
  const double W1 = W - 0.1 * V * chi * x0;
  CHECK(forward(s, c, p, MatrixXd::Constant(1, 1, xi)).x[1](0, 0) == doctest::Approx(x0 + W1 * x0).epsilon(1e-14));
}

TEST_CASE("Depth-muP Adam lowers the loss on separable blobs") {
  DatasetSpec ds;
  ds.task = TaskKind::Classification;
  ds.d_in = 4;
  ds.size = 256;
  ds.blob_separation = 6.0;
  const Dataset data = synth_dataset(ds);
  NetConfig c;
  c.d_in = 4;
  c.d_out = 2;
  c.n = 64;
  c.L = 8;
  c.loss = LossKind::SoftmaxCrossEntropy;
  const Parametrization p = depth_mup_preset(RuleKind::Adam);
  double first = 0.0, last = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    NetState s = init(c, seed);
    for (int t = 0; t < 50; ++t) {
      const double loss = train_step(s, c, p, UpdateRule{RuleKind::Adam}, data.minibatch(t, 32, seed)).loss;
      if (t < 5) first += loss;
      if (t >= 45) last += loss;
    }
  }
  CHECK(last < first);
}

TEST_CASE("feature snapshots") {
  NetConfig c = small_config();
  c.d_in = 3;
  const NetState s = init(c, 6);
  const ForwardCache fc = forward(s, c, depth_mup_preset(RuleKind::SGD), MatrixXd::Identity(3, 1));
  CHECK(feature_snapshot(fc, 0).x == s.U.col(0));
  CHECK_THROWS_AS(feature_snapshot(fc, c.L + 1), DomainError);
  CHECK(rms(MatrixXd::Zero(5, 2)) == 0.0);

  NetConfig w = small_config();
  w.d_in = 1;
  w.n = 4096;
  w.L = 1;
  const ForwardCache f2 = forward(init(w, 1), w, depth_mup_preset(RuleKind::SGD), MatrixXd::Ones(1, 1));
  CHECK(feature_snapshot(f2, 0).rms == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("non-finite activations are reported with the layer") {
  NetConfig c = small_config();
  NetState s = init(c, 2);
  s.W[2][0](0, 0) = std::numeric_limits<double>::infinity();
  try {
    forward(s, c, depth_mup_preset(RuleKind::SGD), MatrixXd::Ones(2, 1));
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.layer() == 3);
  }
}

TEST_CASE("config validation") {
  NetConfig c = small_config();
  c.placement = Placement::Pre;
  c.k = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.k = 1;
  c.n = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_placement("pre") == Placement::Pre);
  CHECK_THROWS_AS(parse_loss("hinge"), ConfigError);
}

TEST_CASE("training is deterministic") {
  NetConfig c = small_config();
  c.phi = Nonlinearity::ReLU;
  c.mean_subtraction = true;
  c.pre_layernorm = true;
  const Batch b{MatrixXd::Random(2, 4), MatrixXd::Random(1, 4)};
  NetState a = init(c, 77), d = init(c, 77);
  for (int t = 0; t < 3; ++t) {
    train_step(a, c, depth_mup_preset(RuleKind::Adam), UpdateRule{RuleKind::Adam}, b);
    train_step(d, c, depth_mup_preset(RuleKind::Adam), UpdateRule{RuleKind::Adam}, b);
  }
  CHECK(a.W[1][0] == d.W[1][0]);
}

TEST_CASE("checkpoint round trip") {
  NetConfig c = small_config();
  c.train_io = true;
  NetState s = init(c, 31, true);
  train_step(s, c, depth_mup_preset(RuleKind::Adam), UpdateRule{RuleKind::Adam},
             Batch{MatrixXd::Random(2, 3), MatrixXd::Random(1, 3)});
  const auto path = (std::filesystem::temp_directory_path() / "depthmup_ck_test.bin").string();
  save_checkpoint(path, {"{\"x\": 1}", c, s});
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.config_echo == "{\"x\": 1}");
  CHECK(back.cfg.n == c.n);
  CHECK(back.state.step == 1);
  CHECK(back.state.W[3][0] == s.W[3][0]);
  CHECK(back.state.W_init.has_value());
  CHECK(back.state.opt_W[0][0].v == s.opt_W[0][0].v);
  CHECK(back.state.U == s.U);

  {
    std::ofstream os(path, std::ios::binary);
    os << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  std::filesystem::remove(path);
}
