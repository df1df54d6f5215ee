#pragma once

#include <string>
#include <string_view>

namespace depthmup {

enum class RuleKind { SGD, SignSGD, Adam };

enum class ParamGroup { Input, Hidden, Output };

std::string_view to_string(RuleKind kind);
RuleKind parse_rule_kind(std::string_view s);
std::string_view to_string(ParamGroup g);

/// Widthwise exponents for one parameter group: the effective learning rate carries
/// n^{-c}, the gradient fed to the update rule is prescaled by n^{d}.
struct WidthExponents {
  double c = 0.0;
  double d = 0.0;
};

/// Depth and width scaling of a residual MLP.
///
/// Depth factors are always evaluated on the ratio L / base_depth, so every
/// scaling equals its constant at the base depth.
struct Parametrization {
  double alpha = 0.5;   ///< branch multiplier ~ (L/L0)^{-alpha}
  double gamma = 0.5;   ///< effective update size ~ (L/L0)^{-gamma}
  double delta = 0.5;   ///< gradient prescale ~ (L/L0)^{delta}
  WidthExponents input{0.0, 1.0};
  WidthExponents hidden{1.0, 1.0};
  WidthExponents output{1.0, 0.0};
  double a = 1.0;       ///< branch multiplier constant
  double eta = 1e-3;    ///< learning-rate constant
  int base_depth = 8;   ///< L0

  const WidthExponents& exponents(ParamGroup g) const;

  /// Throws ConfigError unless a > 0, eta > 0, base_depth >= 1 and all exponents finite.
  void validate() const;
};

/// a * (L / L0)^{-alpha}.
double branch_multiplier(const Parametrization& p, int L);

/// eta * n^{-c(group)} * (L / L0)^{-gamma}.
double effective_update_scale(const Parametrization& p, int L, int n, ParamGroup group);

/// n^{d(group)} * (L / L0)^{delta}.
double grad_prescale(const Parametrization& p, int L, int n, ParamGroup group);

/// Exponent e such that the user-facing learning rate scales as L^e.
/// SGD: alpha - gamma. SignSGD and Adam: -gamma.
double raw_lr_depth_exponent(const Parametrization& p, RuleKind kind);

enum class RegionClass { UnstableInit, UnstableTraining, Trivial, Unfaithful, Redundant, DepthMuP };

std::string_view to_string(RegionClass r);

inline constexpr double kRegionTolerance = 1e-12;

/// Analytic (alpha, gamma) taxonomy. Checked in order: alpha < 1/2, alpha + gamma < 1,
/// alpha + gamma > 1, then on the line alpha + gamma = 1: alpha > 1, alpha in (1/2, 1],
/// alpha = 1/2. Equalities use kRegionTolerance.
RegionClass classify_region(double alpha, double gamma);

/// alpha = gamma = delta = 1/2 with muP width exponents (c, d) = input (0, 1),
/// hidden (1, 1), output (1, 0). The rule kind only affects how the learning rate is
/// interpreted (see raw_lr_depth_exponent); the exponents are identical.
Parametrization depth_mup_preset(RuleKind kind, double a = 1.0, double eta = 1e-3, int base_depth = 8);

}  // namespace depthmup
