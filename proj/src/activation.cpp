#include "depthmup/activation.hpp"

#include "depthmup/errors.hpp"

namespace depthmup {

std::string_view to_string(Nonlinearity phi) {
  switch (phi) {
    case Nonlinearity::Identity: return "identity";
    case Nonlinearity::ReLU: return "relu";
    case Nonlinearity::Abs: return "abs";
  }
  return "?";
}

Nonlinearity parse_nonlinearity(std::string_view s) {
  if (s == "identity" || s == "linear") return Nonlinearity::Identity;
  if (s == "relu") return Nonlinearity::ReLU;
  if (s == "abs") return Nonlinearity::Abs;
  throw ConfigError("unknown nonlinearity '" + std::string(s) + "' (expected identity|relu|abs)");
}

}  // namespace depthmup
