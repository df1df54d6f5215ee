#include "depthmup/rng.hpp"

namespace depthmup {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coords) {
  std::uint64_t state = mix64(master);
  for (std::uint64_t c : coords) {
    state = mix64(state ^ mix64(c + 0x9E3779B97F4A7C15ULL));
  }
  return state;
}

Eigen::MatrixXd Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev) {
  Eigen::MatrixXd out(rows, cols);
  // Fill in column-major order so results do not depend on expression evaluation order.
  double* p = out.data();
  for (Eigen::Index i = 0; i < rows * cols; ++i) p[i] = stddev * normal_(engine_);
  return out;
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index n, double stddev) {
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = stddev * normal_(engine_);
  return out;
}

}  // namespace depthmup
