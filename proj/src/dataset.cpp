#include "depthmup/dataset.hpp"

#include <cmath>

#include "depthmup/errors.hpp"
#include "depthmup/idx.hpp"
#include "depthmup/rng.hpp"

namespace depthmup {

std::string_view to_string(DatasetKind k) { return k == DatasetKind::Synthetic ? "synthetic" : "idx"; }
std::string_view to_string(TaskKind k) { return k == TaskKind::Regression ? "regression" : "classification"; }

DatasetKind parse_dataset_kind(std::string_view s) {
  if (s == "synthetic") return DatasetKind::Synthetic;
  if (s == "idx") return DatasetKind::Idx;
  throw ConfigError("unknown dataset kind '" + std::string(s) + "' (expected synthetic|idx)");
}

TaskKind parse_task_kind(std::string_view s) {
  if (s == "regression") return TaskKind::Regression;
  if (s == "classification") return TaskKind::Classification;
  throw ConfigError("unknown task '" + std::string(s) + "' (expected regression|classification)");
}

void DatasetSpec::validate() const {
  if (kind == DatasetKind::Synthetic) {
    if (d_in < 1) throw ConfigError("dataset: d_in must be >= 1");
    if (size < 1) throw ConfigError("dataset: size must be >= 1");
    if (noise < 0.0) throw ConfigError("dataset: noise must be >= 0");
  } else {
    if (image_path.empty() || label_path.empty()) throw ConfigError("dataset: idx needs image_path and label_path");
    if (!(norm_std > 0.0)) throw ConfigError("dataset: norm_std must be > 0");
  }
}

sim::Batch Dataset::batch(const std::vector<Eigen::Index>& indices) const {
  sim::Batch b;
  b.inputs.resize(inputs.rows(), static_cast<Eigen::Index>(indices.size()));
  b.targets.resize(targets.rows(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] < 0 || indices[j] >= size()) throw DomainError("Dataset::batch: index out of range");
    b.inputs.col(static_cast<Eigen::Index>(j)) = inputs.col(indices[j]);
    b.targets.col(static_cast<Eigen::Index>(j)) = targets.col(indices[j]);
  }
  return b;
}

sim::Batch Dataset::minibatch(long step, int B, std::uint64_t seed) const {
  if (B < 1) throw DomainError("Dataset::minibatch: batch size must be >= 1");
  Rng rng(derive_seed(seed, {0xBA7C, static_cast<std::uint64_t>(step)}));
  std::uniform_int_distribution<Eigen::Index> pick(0, size() - 1);
  std::vector<Eigen::Index> idx(B);
  for (auto& i : idx) i = pick(rng.engine());
  return batch(idx);
}

sim::Batch Dataset::all() const { return {inputs, targets}; }

Dataset synth_dataset(const DatasetSpec& spec) {
  spec.validate();
  if (spec.kind != DatasetKind::Synthetic) throw ConfigError("synth_dataset: spec is not synthetic");
  Dataset ds;
  ds.task = spec.task;
  Rng rng(derive_seed(spec.seed, {0xDA7A}));
  if (spec.task == TaskKind::Regression) {
    ds.w_star = rng.normal_vector(spec.d_in, 1.0 / std::sqrt(static_cast<double>(spec.d_in)));
    ds.inputs = rng.normal_matrix(spec.d_in, spec.size, 1.0);
    ds.targets = ds.w_star.transpose() * ds.inputs;
    for (Eigen::Index j = 0; j < ds.targets.cols(); ++j) ds.targets(0, j) += spec.noise * rng.normal();
  } else {
    Eigen::VectorXd m = rng.normal_vector(spec.d_in, 1.0);
    m *= 0.5 * spec.blob_separation / m.norm();
    ds.inputs = rng.normal_matrix(spec.d_in, spec.size, 1.0);
    ds.targets = Eigen::MatrixXd::Zero(2, spec.size);
    for (Eigen::Index j = 0; j < spec.size; ++j) {
      const int label = rng.uniform() < 0.5 ? 0 : 1;
      ds.inputs.col(j) += (label == 0 ? 1.0 : -1.0) * m;
      ds.targets(label, j) = 1.0;
    }
  }
  return ds;
}

Dataset load_dataset(const DatasetSpec& spec) {
  spec.validate();
  const IdxDataset raw = load_idx(spec.image_path, spec.label_path);
  const std::size_t N = spec.size > 0 ? std::min<std::size_t>(raw.size(), static_cast<std::size_t>(spec.size))
                                      : raw.size();
  const int dim = raw.dim();
  Dataset ds;
  ds.task = spec.scalar_projection ? TaskKind::Regression : TaskKind::Classification;
  if (spec.scalar_projection) {
    Rng rng(derive_seed(spec.projection_seed, {0x9E0}));
    ds.projection = rng.normal_vector(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
    ds.inputs.resize(1, static_cast<Eigen::Index>(N));
    ds.targets.resize(1, static_cast<Eigen::Index>(N));
  } else {
    ds.inputs.resize(dim, static_cast<Eigen::Index>(N));
    ds.targets = Eigen::MatrixXd::Zero(10, static_cast<Eigen::Index>(N));
  }
  for (std::size_t i = 0; i < N; ++i) {
    const Eigen::VectorXd p = (raw.pixels(i).array() - spec.norm_mean) / spec.norm_std;
    const int label = raw.labels.labels[i];
    const auto j = static_cast<Eigen::Index>(i);
    if (spec.scalar_projection) {
      ds.inputs(0, j) = ds.projection.dot(p);
      ds.targets(0, j) = label % 2 == 0 ? 1.0 : -1.0;
    } else {
      ds.inputs.col(j) = p;
      if (label > 9) throw ParseError("IDX label " + std::to_string(label) + " outside 0..9", 8 + i);
      ds.targets(label, j) = 1.0;
    }
  }
  return ds;
}

Dataset make_dataset(const DatasetSpec& spec) {
  return spec.kind == DatasetKind::Synthetic ? synth_dataset(spec) : load_dataset(spec);
}

}  // namespace depthmup
