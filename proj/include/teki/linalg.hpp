#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace teki {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Raised when a factorization, integration or other numerical step fails.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for malformed experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

/// Largest entrywise |a - a^T|, relative to max(1, max|a|).
inline double symmetry_defect(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

/// Cholesky factorization of an SPD matrix with the solves the solvers need.
class SpdFactor {
 public:
  SpdFactor() = default;
  SpdFactor(const Matrix& a, const std::string& what) : llt_(a) {
    if (a.rows() != a.cols()) throw std::invalid_argument(what + ": matrix is not square");
    if (llt_.info() != Eigen::Success || !a.allFinite())
      throw NumericalError(what + ": Cholesky factorization failed (matrix not SPD)");
  }

  Index dim() const { return llt_.rows(); }

  template <typename Rhs>
  auto solve(const Eigen::MatrixBase<Rhs>& b) const {
    return llt_.solve(b);
  }

  /// L^{-1} B for A = L L^T.
  template <typename Rhs>
  Matrix whiten(const Eigen::MatrixBase<Rhs>& b) const {
    return llt_.matrixL().solve(b);
  }

  /// v^T A^{-1} v
  double mahalanobis_sq(const Vector& v) const {
    return llt_.matrixL().solve(v).squaredNorm();
  }

  Matrix lower() const { return llt_.matrixL(); }

 private:
  Eigen::LLT<Matrix> llt_;
};

struct EigenRange {
  double min;
  double max;
};

inline EigenRange extreme_eigenvalues(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  return {ev.minCoeff(), ev.maxCoeff()};
}

inline Matrix block_diag(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

/// Least-squares slope of log(y) against log(x). Non-positive y are rejected.
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 paired points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::domain_error("loglog_slope: non-positive sample");
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace teki
