#pragma once

// Ensemble storage, 1/K sample moments and the square-root transform update.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/QR>

#include "teki/linalg.hpp"

namespace teki {

/// K members of dimension d_u, stored column-wise (d_u x K).
class Ensemble {
 public:
  explicit Ensemble(Matrix members) : members_(std::move(members)) {
    if (members_.cols() < 2) throw std::invalid_argument("Ensemble: need at least 2 members");
    if (members_.rows() < 1) throw std::invalid_argument("Ensemble: member dimension must be positive");
  }

  static Ensemble from_members(const std::vector<Vector>& members) {
    if (members.empty()) throw std::invalid_argument("Ensemble: no members");
    Matrix m(members.front().size(), static_cast<Index>(members.size()));
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (members[i].size() != m.rows()) throw std::invalid_argument("Ensemble: members differ in dimension");
      m.col(static_cast<Index>(i)) = members[i];
    }
    return Ensemble(std::move(m));
  }

  Index size() const { return members_.cols(); }
  Index dim() const { return members_.rows(); }
  const Matrix& members() const { return members_; }
  Vector member(Index i) const { return members_.col(i); }

 private:
  Matrix members_;
};

/// Sample moments of an ensemble and its image under the augmented map.
struct MomentSet {
  Vector mean;  // m
  Vector hbar;  // mean of H(u_i)
  Matrix cuu;
  Matrix cup;
  Matrix cpp;

  Matrix cpu() const { return cup.transpose(); }
};

inline Vector ensemble_mean(const Ensemble& e) { return e.members().rowwise().mean(); }

/// Columns (u_i - m)/sqrt(K); S S^T = cuu.
inline Matrix spread_matrix(const Ensemble& e) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(e.size()));
  return (e.members().colwise() - ensemble_mean(e)) * scale;
}

inline Matrix sample_covariance(const Ensemble& e) {
  const Matrix s = spread_matrix(e);
  return symmetrize(s * s.transpose());
}

/// h_values holds H(u_i) column-wise, (d_y + d_u) x K.
inline MomentSet compute_moments(const Ensemble& e, const Matrix& h_values) {
  if (h_values.cols() != e.size())
    throw std::invalid_argument("compute_moments: need one mapped value per member");
  const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(e.size()));
  MomentSet out;
  out.mean = ensemble_mean(e);
  out.hbar = h_values.rowwise().mean();
  const Matrix su = (e.members().colwise() - out.mean) * inv_sqrt_k;
  const Matrix sp = (h_values.colwise() - out.hbar) * inv_sqrt_k;
  out.cuu = symmetrize(su * su.transpose());
  out.cup = su * sp.transpose();
  out.cpp = symmetrize(sp * sp.transpose());
  return out;
}

/// 1e-12 of the largest eigenvalue, or 1e-12 for a zero matrix.
inline double default_floor(const Matrix& a) {
  const double top = extreme_eigenvalues(a).max;
  return 1e-12 * (top > 0.0 ? top : 1.0);
}

/// Symmetric PSD square root; eigenvalues below `floor` are raised to it first.
inline Matrix sym_psd_sqrt(const Matrix& a, double floor = 0.0) {
  if (a.rows() != a.cols()) throw std::invalid_argument("sym_psd_sqrt: matrix is not square");
  if (symmetry_defect(a) > 1e-10) throw std::invalid_argument("sym_psd_sqrt: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  const Vector roots = es.eigenvalues().cwiseMax(std::max(floor, 0.0)).cwiseSqrt();
  return symmetrize(es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose());
}

struct TransformResult {
  Ensemble ensemble;
  /// cuu had eigenvalues below the floor; the spread was rebuilt to hit c_next.
  bool rank_deficient = false;
};

namespace detail {

// Orthonormal d x K rows, each orthogonal to the all-ones vector. The leading
// rows span the row space of the current spread when it has one.
inline Matrix centered_orthonormal_rows(const Matrix& spread, Index d) {
  const Index k = spread.cols();
  Matrix seed(k, 1 + spread.rows() + k);
  seed.col(0).setOnes();
  seed.middleCols(1, spread.rows()) = spread.transpose();
  seed.rightCols(k).setIdentity();
  Eigen::HouseholderQR<Matrix> qr(seed);
  const Matrix q = qr.householderQ() * Matrix::Identity(k, k);
  return q.middleCols(1, d).transpose();
}

}  // namespace detail

/// Moves the ensemble to mean m_next and sample covariance c_next using
/// T = c_next^{1/2} cuu^{-1/2}, applied to the current deviations.
inline TransformResult transform_update(const Ensemble& e, const Vector& m_next, const Matrix& c_next,
                                        std::optional<double> floor = std::nullopt) {
  const Index d = e.dim();
  const Index k = e.size();
  if (k <= d) throw std::invalid_argument("transform_update: ensemble size must exceed state dimension");
  if (m_next.size() != d || c_next.rows() != d || c_next.cols() != d)
    throw std::invalid_argument("transform_update: target dimensions do not match ensemble");

  const Vector mean = ensemble_mean(e);
  const Matrix deviations = e.members().colwise() - mean;
  const Matrix cuu = symmetrize(deviations * deviations.transpose() / static_cast<double>(k));
  const double fl = floor.value_or(default_floor(cuu));

  Eigen::SelfAdjointEigenSolver<Matrix> es(cuu);
  const Matrix target_root = sym_psd_sqrt(c_next);

  if (es.eigenvalues().minCoeff() < fl) {
    const Matrix rows = detail::centered_orthonormal_rows(deviations, d);
    Matrix members = (target_root * rows) * std::sqrt(static_cast<double>(k));
    members.colwise() += m_next;
    return {Ensemble(std::move(members)), true};
  }

  const Vector inv_roots = es.eigenvalues().cwiseSqrt().cwiseInverse();
  const Matrix inv_root = es.eigenvectors() * inv_roots.asDiagonal() * es.eigenvectors().transpose();
  const Matrix transform = target_root * symmetrize(inv_root);
  Matrix members = transform * deviations;
  // Left multiplication keeps column sums at zero up to rounding; recentre exactly.
  members.colwise() -= members.rowwise().mean();
  members.colwise() += m_next;
  return {Ensemble(std::move(members)), false};
}

}  // namespace teki
