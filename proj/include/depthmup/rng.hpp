#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace depthmup {

/// splitmix64 finalizer. Used as the published seed-mixing function.
std::uint64_t mix64(std::uint64_t x);

/// Order-sensitive combination of a master seed with any number of coordinates.
/// Each coordinate is folded in as state = mix64(state ^ mix64(coord + golden)).
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coords);

/// Seeded 64-bit Mersenne twister with Gaussian helpers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev);
  Eigen::VectorXd normal_vector(Eigen::Index n, double stddev);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace depthmup
