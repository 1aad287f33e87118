#pragma once

#include <optional>

#include <Eigen/Dense>

#include "qta/error.hpp"

namespace qta {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PcaModel {
  Eigen::VectorXd mean;
  /// d x k, orthonormal columns ordered by decreasing variance.
  Eigen::MatrixXd components;
  /// Variance along each retained component.
  Eigen::VectorXd variances;
  /// Fraction of total variance per retained component.
  Eigen::VectorXd explained_ratio;
  double total_variance = 0;

  std::size_t k() const { return static_cast<std::size_t>(components.cols()); }
  double explained() const { return explained_ratio.sum(); }
};

/// Mean-centred PCA without scaling. Keeps the smallest k whose cumulative
/// explained variance reaches `variance_target`, or exactly `fixed_k`
/// components when given.
inline PcaModel pca_fit(const Eigen::Ref<const RowMatrix> &X, double variance_target,
                        std::optional<std::size_t> fixed_k = std::nullopt) {
  const Eigen::Index n = X.rows(), d = X.cols();
  require(n >= 2, "pca_fit: need at least 2 samples");
  require(d >= 1, "pca_fit: need at least 1 feature");
  require(variance_target > 0 && variance_target <= 1, "pca_fit: variance_target must be in (0, 1]");
  if (fixed_k)
    require(*fixed_k >= 1 && static_cast<Eigen::Index>(*fixed_k) <= d,
            "pca_fit: fixed k must be in [1, n_features]");

  PcaModel m;
  m.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd Xc = X.rowwise() - m.mean.transpose();
  Eigen::VectorXd evals;
  Eigen::MatrixXd evecs;
  if (n < d) {
    // eigenvectors of the Gram matrix map to those of the covariance
    const Eigen::MatrixXd G = Xc * Xc.transpose() / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    if (es.info() != Eigen::Success)
      throw NumericError("pca_fit: eigen decomposition failed");
    evals = es.eigenvalues().cwiseMax(0.0);
    evecs = Eigen::MatrixXd::Zero(d, n);
    const double floor = 1e-12 * std::max(evals.maxCoeff(), 1e-300);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (evals(i) <= floor) {
        evals(i) = 0.0;
        continue;
      }
      const Eigen::VectorXd v = Xc.transpose() * es.eigenvectors().col(i);
      evecs.col(i) = v / v.norm();
    }
  } else {
    const Eigen::MatrixXd C = Xc.transpose() * Xc / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
    if (es.info() != Eigen::Success)
      throw NumericError("pca_fit: eigen decomposition failed");
    evals = es.eigenvalues().cwiseMax(0.0);
    evecs = es.eigenvectors();
  }
  // eigen returns ascending order
  const Eigen::Index r = evals.size();
  Eigen::VectorXd desc(r);
  Eigen::MatrixXd vecs(d, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    desc(i) = evals(r - 1 - i);
    vecs.col(i) = evecs.col(r - 1 - i);
  }
  m.total_variance = desc.sum();

  Eigen::Index k = 0;
  if (fixed_k) {
    k = static_cast<Eigen::Index>(*fixed_k);
  } else if (m.total_variance <= 0) {
    k = 1;
  } else {
    double acc = 0;
    while (k < r) {
      acc += desc(k);
      ++k;
      if (acc / m.total_variance >= variance_target * (1.0 - 1e-12))
        break;
    }
  }
  m.components = Eigen::MatrixXd::Zero(d, k);
  m.variances = Eigen::VectorXd::Zero(k);
  Eigen::Index valid = 0;
  while (valid < r && vecs.col(valid).squaredNorm() > 0.5)
    ++valid;
  const Eigen::Index avail = std::min(k, valid);
  m.components.leftCols(avail) = vecs.leftCols(avail);
  m.variances.head(avail) = desc.head(avail);
  if (avail < k) {
    // pad a fixed-k request beyond the sample rank with an orthonormal complement
    Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(d, d);
    if (avail > 0) {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(m.components.leftCols(avail));
      Q = qr.householderQ() * Q;
    }
    m.components.rightCols(k - avail) = Q.block(0, avail, d, k - avail);
  }
  m.explained_ratio = m.total_variance > 0 ? Eigen::VectorXd(m.variances / m.total_variance)
                                           : Eigen::VectorXd(Eigen::VectorXd::Zero(k));
  return m;
}

inline RowMatrix pca_transform(const PcaModel &m, const Eigen::Ref<const RowMatrix> &X) {
  require(X.cols() == m.mean.size(), "pca_transform: feature count mismatch");
  return (X.rowwise() - m.mean.transpose()) * m.components;
}

} // namespace qta
