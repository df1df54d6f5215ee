#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthmup/config.hpp"
#include "depthmup/dataset.hpp"

namespace depthmup {

struct SweepRow {
  int depth = 0;
  int lr_index = 0;
  double lr = 0.0;
  int a_index = 0;
  double a = 0.0;
  int seed_index = 0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;  // NaN when the cell failed
  std::string error;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // sorted by (depth, lr_index, a_index, seed_index)
  nlohmann::json manifest;
};

/// hash(master, depth, lr_index, a_index, seed_index) through derive_seed.
std::uint64_t cell_seed(std::uint64_t master, int depth, int lr_index, int a_index, int seed_index);

/// Mean of the last ceil(fraction * size) entries.
double final_slice_mean(const std::vector<double>& losses, double fraction);

/// Per-step training losses of resnet_sim on `data` with the configured network,
/// parametrization and rule, overriding depth, learning rate constant and branch constant.
/// Minibatches are drawn from a stream keyed by `seed`; the weights use the same seed.
std::vector<double> train_losses(const HarnessConfig& c, const Dataset& data, int depth, double lr, double a,
                                 std::uint64_t seed);

/// Per-step losses 0.5 (f_t - y_t)^2 of the limit engine at depth L with eta = lr. The
/// linear engine is used for identity phi, the nonlinear one otherwise. a must be 1.
std::vector<double> limit_losses(const HarnessConfig& c, int depth, double lr, double a);

/// Runs every cell on `threads` workers. Failures become NaN rows carrying the message.
SweepResult run_sweep(const HarnessConfig& c);

std::string sweep_csv_header();
std::string sweep_csv_string(const SweepResult& r);
void write_sweep_csv(const std::string& path, const SweepResult& r);
void write_json(const std::string& path, const nlohmann::json& j);

/// Seed-averaged losses[depth][lr] at the given a index. A cell whose seeds are all NaN
/// stays NaN; otherwise NaN seeds count as +inf.
std::vector<std::vector<double>> mean_loss_grid(const SweepResult& r, const std::vector<int>& depths, int n_lrs,
                                                int a_index);

/// Manifest skeleton: config echo, master seed, version, fp note, UTC timestamps.
nlohmann::json make_manifest(const HarnessConfig& c, const std::string& started, const std::string& finished);
std::string utc_timestamp();

}  // namespace depthmup
