#pragma once

#include "depthmup/tp_tables.hpp"

// Exact infinite-width training dynamics of the scalar-in / scalar-out linear resnet
// x^l = x^{l-1} + L^{-alpha} W^l x^{l-1} trained by SGD with frozen U, V, evaluated at a
// finite depth L. Integrals over the depth grid are the exact finite sums.
namespace depthmup::tp {

/// alpha = gamma = 1/2. Runs the normalized-Gamma recursion directly.
LimitResult run_depth_mup(const LimitConfig& cfg);

/// Any alpha >= 1/2 and gamma. Runs the raw-coefficient recursion with multipliers
/// L^{-alpha} and eta L^{-gamma} and normalizes the table afterwards. At (1/2, 1/2) it is
/// an independent implementation of run_depth_mup.
LimitResult run_generalized(const LimitConfig& cfg);

/// sqrt(<x_t^l | x_t^l>).
double layer_rms_limit(const LimitResult& r, int t, int l);

struct OutputKernel {
  double kernel = 0.0;         // <x_s^L | x_t^L>
  double c_table_value = 0.0;  // C_{t,s,1} at the last layer, i.e. chi_t chi_s
};
OutputKernel output_kernel(const LimitResult& r, int s, int t);

/// T x T matrix of <x_s^L | x_t^L>.
std::vector<std::vector<double>> output_kernel_matrix(const LimitResult& r);

}  // namespace depthmup::tp
