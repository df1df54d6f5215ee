#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "depthmup/activation.hpp"
#include "depthmup/parametrization.hpp"

// Wide-network Monte Carlo for the scalar-input / scalar-output resnet trained with SGD at
// batch size 1 and frozen U, V. Hidden weights are lazy Gaussian matrices plus the
// rank-one SGD updates, so widths of several thousand fit in memory at depth ~100.
namespace depthmup::sim {

struct WideSimConfig {
  int n = 1024;
  int L = 64;
  Nonlinearity phi = Nonlinearity::Identity;
  bool mean_subtraction = false;
  Parametrization p;  // SGD; base_depth, a, alpha, gamma, delta, eta all honoured
  std::vector<double> xi;  // one scalar input per step
  std::vector<double> y;   // one scalar target per step

  int steps() const { return static_cast<int>(xi.size()); }
  void validate() const;
};

struct WideTrace {
  std::vector<double> f;                     // output before the update at each step
  std::vector<double> chi;                   // f - y
  std::vector<std::vector<double>> rms;      // [t][l], l = 0..L
  Eigen::MatrixXd kernel;                    // (1/n) <x_s^L, x_t^L>, T x T
};

WideTrace run_wide_sim(const WideSimConfig& cfg, std::uint64_t seed);

}  // namespace depthmup::sim
