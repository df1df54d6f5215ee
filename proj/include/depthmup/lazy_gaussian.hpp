#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "depthmup/rng.hpp"

namespace depthmup {

/// An n x n matrix G with iid N(0, sigma^2) entries that is never materialized.
/// Entries are revealed only along the directions it has been applied to, and every new
/// product is drawn from the exact conditional law given everything revealed so far, so
/// a sequence of products G x and G^T y has the same joint distribution as with a dense
/// matrix. Memory and time per product are O(n k) for k revealed directions.
class LazyGaussian {
 public:
  LazyGaussian(Eigen::Index n, double sigma, std::uint64_t seed);

  Eigen::VectorXd apply(const Eigen::VectorXd& x);
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& y);

  Eigen::Index n() const { return n_; }
  Eigen::Index right_rank() const { return ka_; }
  Eigen::Index left_rank() const { return kc_; }

 private:
  // Extends the orthonormal basis Q (first k columns) with the component of x outside it.
  // Returns false when x already lies in span(Q) to working precision.
  static bool extend_basis(Eigen::MatrixXd& Q, Eigen::Index& k, const Eigen::VectorXd& x);
  static void ensure_capacity(Eigen::MatrixXd& M, Eigen::Index k);

  Eigen::Index n_;
  double sigma_;
  Rng rng_;
  // G QA = GA and G^T QC = GC on the leading ka_ / kc_ columns.
  Eigen::MatrixXd QA_, GA_, QC_, GC_;
  Eigen::Index ka_ = 0;
  Eigen::Index kc_ = 0;
};

}  // namespace depthmup
