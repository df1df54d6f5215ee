#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "depthmup/resnet_sim.hpp"

namespace depthmup {

enum class DatasetKind { Synthetic, Idx };
enum class TaskKind { Regression, Classification };

std::string_view to_string(DatasetKind k);
std::string_view to_string(TaskKind k);
DatasetKind parse_dataset_kind(std::string_view s);
TaskKind parse_task_kind(std::string_view s);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Synthetic;
  TaskKind task = TaskKind::Regression;
  int d_in = 8;
  int size = 512;
  std::uint64_t seed = 1;
  double noise = 0.1;            // regression label noise
  double blob_separation = 3.0;  // distance between classification blob means
  // idx
  std::string image_path;
  std::string label_path;
  double norm_mean = 0.0;
  double norm_std = 1.0;
  bool scalar_projection = false;     // reduce each image to one scalar
  std::uint64_t projection_seed = 7;

  void validate() const;
};

struct Dataset {
  TaskKind task = TaskKind::Regression;
  Eigen::MatrixXd inputs;   // d_in x N
  Eigen::MatrixXd targets;  // d_out x N
  Eigen::VectorXd w_star;   // regression teacher (synthetic)
  Eigen::VectorXd projection;  // scalar projection used for idx data, if any

  Eigen::Index size() const { return inputs.cols(); }
  int d_in() const { return static_cast<int>(inputs.rows()); }
  int d_out() const { return static_cast<int>(targets.rows()); }

  sim::Batch batch(const std::vector<Eigen::Index>& indices) const;
  /// B indices drawn uniformly with replacement from a stream keyed by (seed, step).
  sim::Batch minibatch(long step, int B, std::uint64_t seed) const;
  sim::Batch all() const;
};

/// Regression: xi ~ N(0, I), y = w*^T xi + noise * N(0, 1) with w* ~ N(0, I / d_in).
/// Classification: two Gaussian blobs N(+-m, I) with |m| = blob_separation / 2 and one-hot
/// targets (d_out = 2).
Dataset synth_dataset(const DatasetSpec& spec);

/// Pixels scaled to [0, 1], then (p - norm_mean) / norm_std. Targets are one-hot over 10
/// classes, or, with scalar_projection, the scalar +1 for even labels and -1 for odd ones
/// with inputs r^T p for a seeded r ~ N(0, I / dim).
Dataset load_dataset(const DatasetSpec& spec);

/// Any spec.
Dataset make_dataset(const DatasetSpec& spec);

}  // namespace depthmup
