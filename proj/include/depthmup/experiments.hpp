#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "depthmup/activation.hpp"
#include "depthmup/diagnostics.hpp"
#include "depthmup/sweep.hpp"

// Composite experiments shared by the command line and the acceptance driver.
namespace depthmup::exp {

/// Synthetic scalar stream: the first T samples of a d_in = 1 regression dataset.
void scalar_stream(int T, std::uint64_t seed, std::vector<double>& xi, std::vector<double>& y);

/// Deterministic bounded stream xi_t = cos(1.3 t), y_t = sin(0.7 t + 0.3). Keeps unit-rate SGD
/// well inside its stable range, unlike Gaussian inputs whose tails reach |xi| ~ 2.
void bounded_stream(int T, std::vector<double>& xi, std::vector<double>& y);

// ---- finite width vs infinite width, linear ---------------------------------------------------

struct LinearAgreementSpec {
  int L = 64;
  int T = 10;
  std::vector<int> widths{128, 512, 2048, 8192};
  int seeds = 32;
  std::vector<int> layers{16, 32, 48, 64};
  std::vector<int> steps{1, 5, 10};  // 1-based; step s reads the state before update s
  std::vector<double> xi;
  std::vector<double> y;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct LinearAgreementReport {
  std::vector<double> limit;                 // [obs], obs = (step, layer) row-major
  std::vector<std::vector<double>> mc;       // [width][obs], seed averages
  std::vector<std::vector<double>> rel_gap;  // [width][obs]
  std::vector<double> mean_gap;              // [width]
  std::vector<double> max_gap;               // [width]
  bool monotone = false;                     // mean_gap strictly decreasing in width
};

LinearAgreementReport linear_agreement(const LinearAgreementSpec& spec);

// ---- depth convergence of the limit ---------------------------------------------------------

struct DepthConvergenceReport {
  std::vector<int> depths;
  std::vector<std::vector<double>> obs;    // [depth][obs], layers at fractions 1/4..1
  std::vector<std::vector<double>> diffs;  // [pair][obs], |O(2L) - O(L)|
  std::vector<double> mean_diff;           // [pair]
  std::vector<double> mean_ratio;          // [pair - 1], averaged over observables
  bool strictly_decreasing = false;        // mean_diff strictly decreasing
  int observable_violations = 0;           // (pair, observable) cases where |diff| grew
};

DepthConvergenceReport depth_convergence(const std::vector<int>& depths, const std::vector<double>& xi,
                                         const std::vector<double>& y, const std::vector<int>& steps);

// ---- nonlinear limit checks -----------------------------------------------------------------

/// Largest |closed form - quadrature| over all nonlinearities, kernels and a grid of pairs.
double vkernel_max_error(int order = 96);

/// Largest difference between run_nonlinear(identity) and the linear engine over f and RMS.
double identity_reduction_error(int L, const std::vector<double>& xi, const std::vector<double>& y);

struct KernelCheckReport {
  Eigen::MatrixXd limit;
  Eigen::MatrixXd mc;
  double max_rel_gap = 0.0;  // max |mc - limit| / sqrt(limit_ss limit_tt)
};

KernelCheckReport nonlinear_kernel_check(Nonlinearity phi, int n, int L, const std::vector<double>& xi,
                                         const std::vector<double>& y, int seeds, std::uint64_t seed, int threads);

// ---- training-based diagnostics -------------------------------------------------------------

struct DiversitySpec {
  int n = 256;
  int L = 256;
  int steps = 500;
  int batch = 32;
  int eval_batch = 64;
  int d_in = 8;
  double lr = 1e-3;
  double alpha = 0.5;
  double gamma = 0.5;
  Nonlinearity phi = Nonlinearity::ReLU;
  double lambda = 0.0;
  std::uint64_t seed = 1;
};

struct DiversityRun {
  diag::DiversityReport report;
  std::vector<double> losses;
};

/// Adam training on synthetic two-blob classification, then d(eps) on held-out inputs.
DiversityRun diversity_run(const DiversitySpec& spec);

/// The harness configuration used by the transfer and slope sweeps: Adam, synthetic
/// regression, post-nonlinearity relu with mean subtraction.
HarnessConfig desk_sweep_config();

struct TransferReport {
  std::vector<std::vector<double>> losses;  // [depth][lr], seed means
  diag::TransferShift shift;
  SweepResult sweep;
};

TransferReport transfer_sweep(HarnessConfig c);

struct SlopeReport {
  std::vector<std::vector<double>> losses;  // [lr][a], seed means
  diag::SublevelSlope slope;
  SweepResult sweep;
};

/// One depth; sweep.lrs and sweep.a_values must be powers of two.
SlopeReport slope_sweep(HarnessConfig c, double quantile);

// ---- property checks ------------------------------------------------------------------------

/// Worst relative error between backward() and central differences of the loss over every
/// architecture toggle (placement, mean subtraction, LayerNorm, block depth, phi, loss).
double gradient_check_max_error(std::uint64_t seed);

/// Worst violation of MS idempotence, zero mean and self-adjointness.
double ms_identity_error(std::uint64_t seed);

/// Worst change of SignSGD and Adam (epsilon = 0) outputs under positive rescaling.
double scale_invariance_error(std::uint64_t seed);

/// Largest |generalized engine - Depth-muP engine| over the whole trace.
double generalized_specialization_error(int L, const std::vector<double>& xi, const std::vector<double>& y);

/// Smallest eigenvalue of the output kernel matrix (normalized by its largest).
double output_kernel_min_eigenvalue(Nonlinearity phi, int L, const std::vector<double>& xi,
                                    const std::vector<double>& y);

/// run_sweep on a small grid at 1 and `threads` workers gives byte-identical CSV tables.
bool sweep_thread_determinism(int threads);

}  // namespace depthmup::exp
