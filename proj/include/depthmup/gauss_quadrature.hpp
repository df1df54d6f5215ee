#pragma once

#include <functional>
#include <vector>

namespace depthmup {

struct GaussLegendre {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

/// Nodes and weights of the order-n Gauss-Legendre rule (Newton on the Legendre recurrence).
/// Cached per order; thread safe.
const GaussLegendre& gauss_legendre(int n);

/// Integral of f over [a, b] with the order-n rule.
double integrate(const std::function<double(double)>& f, double a, double b, int n);

}  // namespace depthmup
