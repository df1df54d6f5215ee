#include "depthmup/parametrization.hpp"

#include <cmath>

#include "depthmup/errors.hpp"

namespace depthmup {

std::string_view to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::SGD: return "sgd";
    case RuleKind::SignSGD: return "signsgd";
    case RuleKind::Adam: return "adam";
  }
  return "?";
}

RuleKind parse_rule_kind(std::string_view s) {
  if (s == "sgd") return RuleKind::SGD;
  if (s == "signsgd") return RuleKind::SignSGD;
  if (s == "adam") return RuleKind::Adam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected sgd|signsgd|adam)");
}

std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::Input: return "input";
    case ParamGroup::Hidden: return "hidden";
    case ParamGroup::Output: return "output";
  }
  return "?";
}

const WidthExponents& Parametrization::exponents(ParamGroup g) const {
  switch (g) {
    case ParamGroup::Input: return input;
    case ParamGroup::Hidden: return hidden;
    case ParamGroup::Output: return output;
  }
  throw ConfigError("missing width exponents for parameter group");
}

void Parametrization::validate() const {
  if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("parametrization: a must be > 0");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("parametrization: eta must be > 0");
  if (base_depth < 1) throw ConfigError("parametrization: base_depth must be >= 1");
  for (double v : {alpha, gamma, delta, input.c, input.d, hidden.c, hidden.d, output.c, output.d}) {
    if (!std::isfinite(v)) throw ConfigError("parametrization: exponents must be finite");
  }
}

namespace {

double depth_ratio(const Parametrization& p, int L) {
  if (L < 1) throw DomainError("depth L must be >= 1, got " + std::to_string(L));
  if (p.base_depth < 1) throw ConfigError("parametrization: base_depth must be >= 1");
  return static_cast<double>(L) / static_cast<double>(p.base_depth);
}

void check_width(int n) {
  if (n < 1) throw DomainError("width n must be >= 1, got " + std::to_string(n));
}

}  // namespace

double branch_multiplier(const Parametrization& p, int L) {
  return p.a * std::pow(depth_ratio(p, L), -p.alpha);
}

double effective_update_scale(const Parametrization& p, int L, int n, ParamGroup group) {
  check_width(n);
  const auto& e = p.exponents(group);
  return p.eta * std::pow(static_cast<double>(n), -e.c) * std::pow(depth_ratio(p, L), -p.gamma);
}

double grad_prescale(const Parametrization& p, int L, int n, ParamGroup group) {
  check_width(n);
  const auto& e = p.exponents(group);
  return std::pow(static_cast<double>(n), e.d) * std::pow(depth_ratio(p, L), p.delta);
}

double raw_lr_depth_exponent(const Parametrization& p, RuleKind kind) {
  // SGD's Q is linear in the prescaled gradient, which already carries L^{-alpha}
  // from the branch multiplier; adaptive rules normalize it away.
  return kind == RuleKind::SGD ? p.alpha - p.gamma : -p.gamma;
}

std::string_view to_string(RegionClass r) {
  switch (r) {
    case RegionClass::UnstableInit: return "UnstableInit";
    case RegionClass::UnstableTraining: return "UnstableTraining";
    case RegionClass::Trivial: return "Trivial";
    case RegionClass::Unfaithful: return "Unfaithful";
    case RegionClass::Redundant: return "Redundant";
    case RegionClass::DepthMuP: return "DepthMuP";
  }
  return "?";
}

RegionClass classify_region(double alpha, double gamma) {
  if (!std::isfinite(alpha) || !std::isfinite(gamma)) {
    throw DomainError("classify_region: alpha and gamma must be finite");
  }
  constexpr double tol = kRegionTolerance;
  const double sum = alpha + gamma;
  if (alpha < 0.5 - tol) return RegionClass::UnstableInit;
  if (sum < 1.0 - tol) return RegionClass::UnstableTraining;
  if (sum > 1.0 + tol) return RegionClass::Trivial;
  if (alpha > 1.0 + tol) return RegionClass::Unfaithful;
  if (alpha > 0.5 + tol) return RegionClass::Redundant;
  return RegionClass::DepthMuP;
}

Parametrization depth_mup_preset(RuleKind /*kind*/, double a, double eta, int base_depth) {
  Parametrization p;
  p.alpha = 0.5;
  p.gamma = 0.5;
  p.delta = 0.5;
  p.input = {0.0, 1.0};
  p.hidden = {1.0, 1.0};
  p.output = {1.0, 0.0};
  p.a = a;
  p.eta = eta;
  p.base_depth = base_depth;
  p.validate();
  return p;
}

}  // namespace depthmup
