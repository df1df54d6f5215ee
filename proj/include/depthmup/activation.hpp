#pragma once

#include <string>
#include <string_view>

namespace depthmup {

enum class Nonlinearity { Identity, ReLU, Abs };

std::string_view to_string(Nonlinearity phi);
Nonlinearity parse_nonlinearity(std::string_view s);

inline double activate(Nonlinearity phi, double x) {
  switch (phi) {
    case Nonlinearity::Identity: return x;
    case Nonlinearity::ReLU: return x > 0.0 ? x : 0.0;
    case Nonlinearity::Abs: return x < 0.0 ? -x : x;
  }
  return x;
}

// relu'(0) = abs'(0) = 0.
inline double activate_prime(Nonlinearity phi, double x) {
  switch (phi) {
    case Nonlinearity::Identity: return 1.0;
    case Nonlinearity::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case Nonlinearity::Abs: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  }
  return 1.0;
}

}  // namespace depthmup
