#include "depthmup/lazy_gaussian.hpp"

#include "depthmup/errors.hpp"

namespace depthmup {

namespace {
constexpr double kSpanTolerance = 1e-11;
}

LazyGaussian::LazyGaussian(Eigen::Index n, double sigma, std::uint64_t seed)
    : n_(n), sigma_(sigma), rng_(seed) {
  if (n < 1) throw DomainError("LazyGaussian: n must be >= 1");
  if (!(sigma >= 0.0)) throw DomainError("LazyGaussian: sigma must be >= 0");
}

void LazyGaussian::ensure_capacity(Eigen::MatrixXd& M, Eigen::Index k) {
  if (M.cols() > k) return;
  M.conservativeResize(M.rows(), std::max<Eigen::Index>(4, 2 * M.cols()));
}

bool LazyGaussian::extend_basis(Eigen::MatrixXd& Q, Eigen::Index& k, const Eigen::VectorXd& x) {
  if (k >= Q.rows()) return false;
  const double norm_x = x.norm();
  if (norm_x == 0.0) return false;
  Eigen::VectorXd r = x;
  // Two passes of classical Gram-Schmidt.
  for (int pass = 0; pass < 2; ++pass) {
    if (k > 0) r -= Q.leftCols(k) * (Q.leftCols(k).transpose() * r);
  }
  const double norm_r = r.norm();
  if (norm_r <= kSpanTolerance * norm_x) return false;
  ensure_capacity(Q, k);
  Q.col(k) = r / norm_r;
  ++k;
  return true;
}

Eigen::VectorXd LazyGaussian::apply(const Eigen::VectorXd& x) {
  if (x.size() != n_) throw ContractViolation("LazyGaussian::apply: size mismatch");
  if (QA_.rows() == 0) QA_.resize(n_, 0);
  const Eigen::Index before = ka_;
  if (extend_basis(QA_, ka_, x)) {
    const auto a = QA_.col(before);
    Eigen::VectorXd w = rng_.normal_vector(n_, sigma_);
    Eigen::VectorXd ga(n_);
    if (kc_ > 0) {
      const auto QC = QC_.leftCols(kc_);
      w -= QC * (QC.transpose() * w);
      ga = QC * (GC_.leftCols(kc_).transpose() * a) + w;
    } else {
      ga = w;
    }
    if (GA_.rows() == 0) GA_.resize(n_, 0);
    ensure_capacity(GA_, before);
    GA_.col(before) = ga;
  }
  if (ka_ == 0) return Eigen::VectorXd::Zero(n_);
  return GA_.leftCols(ka_) * (QA_.leftCols(ka_).transpose() * x);
}

Eigen::VectorXd LazyGaussian::apply_transpose(const Eigen::VectorXd& y) {
  if (y.size() != n_) throw ContractViolation("LazyGaussian::apply_transpose: size mismatch");
  if (QC_.rows() == 0) QC_.resize(n_, 0);
  const Eigen::Index before = kc_;
  if (extend_basis(QC_, kc_, y)) {
    const auto c = QC_.col(before);
    Eigen::VectorXd w = rng_.normal_vector(n_, sigma_);
    Eigen::VectorXd gc(n_);
    if (ka_ > 0) {
      const auto QA = QA_.leftCols(ka_);
      w -= QA * (QA.transpose() * w);
      gc = QA * (GA_.leftCols(ka_).transpose() * c) + w;
    } else {
      gc = w;
    }
    if (GC_.rows() == 0) GC_.resize(n_, 0);
    ensure_capacity(GC_, before);
    GC_.col(before) = gc;
  }
  if (kc_ == 0) return Eigen::VectorXd::Zero(n_);
  return GC_.leftCols(kc_) * (QC_.leftCols(kc_).transpose() * y);
}

}  // namespace depthmup
