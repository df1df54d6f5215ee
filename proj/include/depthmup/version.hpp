#pragma once

namespace depthmup {

inline constexpr const char* kVersion = "0.1.0";
// Bumped whenever a CSV header changes.
inline constexpr int kSchemaVersion = 1;

}  // namespace depthmup
