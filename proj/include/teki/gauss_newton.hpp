#pragma once

// Gauss-Newton on the whitened augmented residual Gamma_+^{-1/2}(H(v) - z),
// plus the linear-Gaussian Kalman update used as an oracle for EKI.

#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "teki/diagnostics.hpp"
#include "teki/forward_model.hpp"
#include "teki/inverse_problem.hpp"
#include "teki/models/darcy.hpp"
#include "teki/models/lorenz96.hpp"

namespace teki {

/// v - (J^T Gamma_+^{-1} J)^{-1} J^T Gamma_+^{-1} (H(v) - z), J = (jac_g; I).
inline Vector gn_step(const AugmentedProblem& p, const Vector& v, const Matrix& jac_g) {
  const Matrix jac = p.h_jacobian_from(jac_g);
  const Matrix weighted = p.gamma_plus_factor().solve(jac);  // Gamma_+^{-1} J
  const SpdFactor normal(symmetrize(jac.transpose() * weighted), "gn_step: normal matrix");
  const Vector residual = p.h(v) - p.z();
  return v - normal.solve(weighted.transpose() * residual);
}

struct GnRecord {
  int n = 0;
  double loss = kNaN;
  double rel_err = kNaN;
};

struct GnResult {
  std::vector<Vector> iterates;  // v_0 .. v_N
  std::vector<GnRecord> records;  // one per step
  bool diverged = false;
};

/// Undamped GN iterations. A non-finite iterate stops the run and is flagged.
inline GnResult gn_run(const AugmentedProblem& p, const Vector& v0, int n_iters,
                       const std::optional<Vector>& truth = std::nullopt) {
  if (n_iters < 0) throw std::invalid_argument("gn_run: iteration count must be nonnegative");
  GnResult out;
  out.iterates.push_back(v0);
  Vector v = v0;
  for (int it = 1; it <= n_iters; ++it) {
    Vector next;
    try {
      next = gn_step(p, v, p.g_jacobian(v));
    } catch (const NumericalError&) {
      out.diverged = true;
      break;
    }
    if (!next.allFinite()) {
      out.diverged = true;
      break;
    }
    v = std::move(next);
    GnRecord rec;
    rec.n = it;
    try {
      rec.loss = p.loss(v);
    } catch (const NumericalError&) {
      out.diverged = true;
      break;
    }
    if (truth) rec.rel_err = relative_error(v, *truth);
    out.iterates.push_back(v);
    out.records.push_back(rec);
  }
  return out;
}

inline Matrix l96_jacobian(const L96Model& model, const Vector& u0) { return model.jacobian(u0); }

inline Matrix darcy_jacobian(const LogPermeabilityDarcy& model, const Vector& u) { return model.jacobian(u); }

struct GaussianMoments {
  Vector mean;
  Matrix cov;
};

/// Posterior of N(b, Sigma) observed through z = H u + N(0, Gamma_+).
inline GaussianMoments kalman_reference(const Vector& prior_mean, const Matrix& prior_cov, const Matrix& h_matrix,
                                        const Matrix& gamma_plus, const Vector& z) {
  if (h_matrix.cols() != prior_mean.size() || h_matrix.rows() != z.size())
    throw std::invalid_argument("kalman_reference: dimension mismatch");
  const SpdFactor innov(symmetrize(gamma_plus + h_matrix * prior_cov * h_matrix.transpose()), "kalman_reference");
  const Matrix sh = prior_cov * h_matrix.transpose();
  GaussianMoments out;
  out.cov = symmetrize(prior_cov - sh * innov.solve(sh.transpose()));
  const SpdFactor prior(prior_cov, "kalman_reference: prior covariance");
  const SpdFactor noise(gamma_plus, "kalman_reference: Gamma_+");
  out.mean = out.cov * (prior.solve(prior_mean) + h_matrix.transpose() * noise.solve(z));
  return out;
}

}  // namespace teki
