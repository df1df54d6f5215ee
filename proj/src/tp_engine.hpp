#pragma once

#include "depthmup/tp_tables.hpp"

namespace depthmup::tp {
class VKernelSet;

namespace detail {

/// Raw-coefficient recursion shared by run_generalized (kernels == nullptr) and
/// run_nonlinear.
LimitResult run_coefficient_engine(const LimitConfig& cfg, const VKernelSet* kernels);

}  // namespace detail
}  // namespace depthmup::tp
