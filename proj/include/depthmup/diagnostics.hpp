#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "depthmup/activation.hpp"
#include "depthmup/parametrization.hpp"
#include "depthmup/resnet_sim.hpp"

namespace depthmup::diag {

struct PowerLawFit {
  double exponent = 0.0;
  double intercept = 0.0;  // log y at log x = 0
  double r2 = 1.0;
  int n_points = 0;
};

/// Least squares on (log x, log y). r2 is 1 when y is constant.
PowerLawFit fit_power_law(const std::vector<std::pair<double, double>>& pairs);

// ---- warm-up single-neuron model --------------------------------------------------------

struct WarmupPoint {
  int L = 0;
  double mean_sq = 0.0;  // E[A_L^2]
  double std_err = 0.0;
};

struct WarmupResult {
  PowerLawFit fit;
  std::vector<WarmupPoint> points;
};

/// Monte Carlo of E[A_L^2] with A_L = sum_l prod_{k != l}(1 + W_k / sqrt(L)) G_l x_0 and
/// x_0 = 1. SGD: G_l = L^{-1/2} prod_{k != l}(1 + W_k / sqrt(L)) dx with dx = 1. SignSGD:
/// G_l = sign of the same. When every depth divides the largest one, the W_k of coarser
/// depths are block sums of the finest draw rescaled to unit variance, so all depths share
/// one set of Gaussian increments per trial.
WarmupResult warmup_al_scaling(RuleKind kind, const std::vector<int>& L_grid, int trials, std::uint64_t seed);

/// Sample mean and standard error of (1 + W/sqrt(L))^2; the exact value is 1 + 1/L.
std::pair<double, double> warmup_factor_moment(int L, int trials, std::uint64_t seed);

// ---- feature diversity --------------------------------------------------------------------

struct DiversityReport {
  double lambda = 0.0;
  std::vector<double> eps_grid;     // surviving eps values
  std::vector<int> layers;          // floor((lambda + eps) L)
  std::vector<double> d_curve;      // raw d(eps)
  std::vector<double> d_normalized; // scaled to pass through 1 at the largest eps
  double fitted_exponent = 0.0;
  double kappa_hat = 0.0;
  PowerLawFit fit;
  std::vector<std::string> warnings;
};

/// eps = 2^j / L for j = 0.. while lambda + eps <= 1 (at most `max_points` values).
std::vector<double> dyadic_eps_grid(int L, double lambda, int max_points = 64);

/// x[l] holds the n x B features of layer l = 0..L at the evaluation step.
DiversityReport feature_diversity_exponent(const std::vector<Eigen::MatrixXd>& x, double lambda,
                                           const std::vector<double>& eps_grid);

// ---- layerwise linearization --------------------------------------------------------------

/// L^{-alpha} || MS(phi(W_t u) - phi(W_0 u) - phi'(W_0 u) * ((W_t - W_0) u)) || / sqrt(n), averaged
/// over the batch, for block l (1-based) and its first matrix; u is that block's input under the
/// current weights. MS is applied when the network uses mean subtraction.
double linearization_residual(const sim::NetState& state, const sim::NetConfig& cfg, const Parametrization& p,
                              const sim::Batch& batch, int l);

// ---- output change exponent ---------------------------------------------------------------

enum class EngineKind { Linear, Nonlinear };

struct DeltaFResult {
  PowerLawFit fit;
  std::vector<std::pair<int, double>> points;  // (L, |f_1|)
};

/// |f_1| of the limit engine after one update from (xi_0, y_0), fitted against L.
DeltaFResult deltaf_exponent(EngineKind kind, double alpha, double gamma, const std::vector<int>& L_grid,
                             const std::vector<double>& xi, const std::vector<double>& y,
                             Nonlinearity phi = Nonlinearity::ReLU);

// ---- hyperparameter transfer --------------------------------------------------------------

struct TransferShift {
  std::vector<int> argmin;         // per depth; -1 when the row is all NaN
  std::vector<bool> excluded;
  int max_shift = 0;               // largest |change| between consecutive usable depths
  int total_shift = 0;             // last usable depth minus first usable depth
};

/// losses[i][j]: depth i, learning rate j (lr_grid ascending). NaN counts as +inf; ties go to
/// the smaller learning rate.
TransferShift transfer_shift(const std::vector<std::vector<double>>& losses, const std::vector<double>& lr_grid);

struct SublevelSlope {
  double slope = 0.0;
  int selected = 0;
};

/// losses[i][j] over log2_lr[i] x log2_a[j]. Selects the cells whose loss is at or below the
/// `quantile` empirical quantile of the finite losses (the minimum is always included) and
/// returns the principal-axis slope d log2(a) / d log2(lr) through them.
SublevelSlope sublevel_slope(const std::vector<std::vector<double>>& losses, const std::vector<double>& log2_lr,
                             const std::vector<double>& log2_a, double quantile = 0.1);

// ---- emission -----------------------------------------------------------------------------

struct Expectation {
  double target = 0.0;
  double tolerance = 0.0;
  bool pass(double v) const { return std::abs(v - target) <= tolerance; }
};

/// JSON summary {name, exponent, intercept, r2, n_points, expected, tolerance, pass}.
void write_fit_json(const std::string& path, const std::string& name, const PowerLawFit& fit,
                    const Expectation* expectation = nullptr);
void write_warmup_csv(const std::string& path, const WarmupResult& r);
void write_diversity_csv(const std::string& path, const DiversityReport& r);
void write_diversity_json(const std::string& path, const DiversityReport& r, const Expectation* e = nullptr);
void write_deltaf_csv(const std::string& path, const DeltaFResult& r);

}  // namespace depthmup::diag
