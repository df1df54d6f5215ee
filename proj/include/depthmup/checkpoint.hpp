#pragma once

#include <string>

#include "depthmup/resnet_sim.hpp"

namespace depthmup::sim {

inline constexpr char kCheckpointMagic[8] = {'D', 'M', 'U', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_echo;  // free-form text, usually the resolved JSON config
  NetConfig cfg;
  NetState state;
};

/// Layout: magic, u32 version, config echo, NetConfig fields, u64 seed, i64 step, then
/// tensors in declaration order (U, V, W[l][j], optional W_init, optimizer states), each as
/// u64 rows, u64 cols and row-major little-endian f64 data.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace depthmup::sim
