#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "depthmup/activation.hpp"
#include "depthmup/entrywise_optim.hpp"
#include "depthmup/parametrization.hpp"

// Finite-width residual MLP with muP initialization, optional mean subtraction and
// pre-LayerNorm, block depth k, and hand-written reverse mode. All arithmetic is in
// 64-bit floats; activations are stored column-per-sample (n x B).
namespace depthmup::sim {

enum class Placement { Post, Pre };
enum class LossKind { Squared, SoftmaxCrossEntropy };

std::string_view to_string(Placement p);
std::string_view to_string(LossKind l);
Placement parse_placement(std::string_view s);
LossKind parse_loss(std::string_view s);

struct NetConfig {
  int d_in = 1;
  int d_out = 1;
  int n = 64;
  int L = 8;
  int k = 1;
  Nonlinearity phi = Nonlinearity::ReLU;
  Placement placement = Placement::Post;
  bool mean_subtraction = true;
  bool pre_layernorm = false;
  bool train_io = false;
  LossKind loss = LossKind::Squared;

  void validate() const;
};

inline constexpr double kLayerNormEps = 1e-6;

struct NetState {
  Eigen::MatrixXd U;                            // n x d_in, Var 1
  Eigen::MatrixXd V;                            // n x d_out, Var n^-2
  std::vector<std::vector<Eigen::MatrixXd>> W;  // [L][k], n x n, Var n^-1
  std::optional<std::vector<std::vector<Eigen::MatrixXd>>> W_init;

  std::optional<OptimizerState> opt_U;
  std::optional<OptimizerState> opt_V;
  std::vector<std::vector<OptimizerState>> opt_W;

  std::uint64_t seed = 0;
  long step = 0;
};

struct Batch {
  Eigen::MatrixXd inputs;   // d_in x B
  Eigen::MatrixXd targets;  // d_out x B (one-hot rows for classification)

  Eigen::Index size() const { return inputs.cols(); }
  void validate(const NetConfig& cfg) const;
};

struct BlockCache {
  Eigen::MatrixXd input;              // block input after optional LN (n x B)
  Eigen::RowVectorXd ln_inv_std;      // per-sample 1/sigma when LN is on
  std::vector<Eigen::MatrixXd> h;     // pre-activations h^{l,j}
  std::vector<Eigen::MatrixXd> act;   // post: phi(h^{l,j}); pre: phi(input) in act[0]
};

struct ForwardCache {
  Eigen::MatrixXd inputs;          // d_in x B
  std::vector<Eigen::MatrixXd> x;  // x^0 .. x^L
  std::vector<BlockCache> blocks;  // 1..L stored at index l-1
  Eigen::MatrixXd f;               // d_out x B
  double multiplier = 0.0;
};

struct Gradients {
  std::optional<Eigen::MatrixXd> dU;
  std::optional<Eigen::MatrixXd> dV;
  std::vector<std::vector<Eigen::MatrixXd>> dW;
};

struct LossEval {
  double loss = 0.0;      // mean over the batch
  Eigen::MatrixXd chi;    // d(mean loss)/df, d_out x B
};

struct StepLog {
  long step = 0;
  double loss = 0.0;
  Eigen::MatrixXd f;
  Eigen::MatrixXd chi;
  std::vector<double> layer_rms;  // at layers 0, L/4, L/2, 3L/4, L
};

struct FeatureSnapshot {
  Eigen::MatrixXd x;
  double rms = 0.0;
};

/// x minus its coordinate mean.
Eigen::VectorXd ms(const Eigen::VectorXd& x);
/// Column-wise mean subtraction.
Eigen::MatrixXd ms_columns(const Eigen::MatrixXd& x);

NetState init(const NetConfig& cfg, std::uint64_t seed, bool keep_init_snapshot = false);

ForwardCache forward(const NetState& state, const NetConfig& cfg, const Parametrization& p,
                     const Eigen::MatrixXd& inputs);

Gradients backward(const NetState& state, const NetConfig& cfg, const Parametrization& p,
                   const ForwardCache& cache, const Eigen::MatrixXd& chi);

/// Mean loss over the batch and its gradient with respect to f.
LossEval evaluate_loss(LossKind kind, const Eigen::MatrixXd& f, const Eigen::MatrixXd& targets);

StepLog train_step(NetState& state, const NetConfig& cfg, const Parametrization& p,
                   const UpdateRule& rule, const Batch& batch);

FeatureSnapshot feature_snapshot(const ForwardCache& cache, int l);

/// Root mean square over all entries; 0 for an empty matrix.
double rms(const Eigen::MatrixXd& x);

/// Five depth probes used in step logs: 0, L/4, L/2, 3L/4, L.
std::vector<int> probe_layers(int L);

std::string step_log_csv_header();
std::string step_log_csv_row(const StepLog& log);

}  // namespace depthmup::sim
