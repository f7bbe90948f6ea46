#pragma once

// Tikhonov EKI with non-constant step-sizes and additive covariance inflation.
//
// At iteration n -> n+1 the schedule is read at index n+1, so the first
// update uses h_1 and alpha_1^2. The deterministic path matches the inflated
// mean/covariance targets with a square-root transform; the stochastic path
// uses perturbed observations plus jitter drawn from the effective prior.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "teki/diagnostics.hpp"
#include "teki/ensemble.hpp"
#include "teki/inverse_problem.hpp"
#include "teki/random.hpp"

namespace teki {

struct EkiState {
  Ensemble ensemble;
  int n = 0;
  MomentSet moments;
  /// H(u_i) column-wise.
  Matrix h_values;
  /// H(m), the map at the ensemble mean.
  Vector h_mean;
  /// The transform step that produced this state fell back to a rebuilt spread.
  bool rank_warning = false;
};

inline Matrix evaluate_members(const AugmentedProblem& p, const Ensemble& e) {
  if (e.dim() != p.d_u()) throw std::invalid_argument("evaluate_members: ensemble dimension does not match problem");
  Matrix out(p.d_aug(), e.size());
  for (Index i = 0; i < e.size(); ++i) out.col(i) = p.h(e.members().col(i));
  return out;
}

inline EkiState make_state(const AugmentedProblem& p, Ensemble e, int n = 0) {
  Matrix hv = evaluate_members(p, e);
  MomentSet moments = compute_moments(e, hv);
  Vector hm = p.h(moments.mean);
  return EkiState{std::move(e), n, std::move(moments), std::move(hv), std::move(hm), false};
}

namespace detail {

/// Ensemble-space Kalman gain. With Gamma_+ = L L^T, the whitened output spread
/// W = L^{-1} S_p = Q diag(s) V^T gives
///   C^up (S_p S_p^T + Gamma_+/h)^{-1} = S_u V diag(s / (s^2 + 1/h)) Q^T L^{-1},
/// which stays accurate when C^pp dwarfs Gamma_+/h and a direct Cholesky would fail.
class GainFactor {
 public:
  GainFactor(Matrix su, const Matrix& sp, const AugmentedProblem& p, double h_n)
      : su_(std::move(su)), gp_(&p.gamma_plus_factor()), h_(h_n) {
    if (!(h_n > 0.0)) throw std::invalid_argument("EKI: step size must be positive");
    if (!su_.allFinite() || !sp.allFinite()) throw NumericalError("EKI: non-finite ensemble spread");
    const Eigen::JacobiSVD<Matrix> svd(gp_->whiten(sp), Eigen::ComputeThinU | Eigen::ComputeThinV);
    q_ = svd.matrixU();
    v_ = svd.matrixV();
    s_ = svd.singularValues();
    const Vector w = s_.array() / (s_.array().square() + 1.0 / h_);
    gain_ = su_ * v_ * w.asDiagonal();
  }

  /// C^up (C^pp + Gamma_+/h)^{-1} r
  Vector apply(const Vector& r) const { return gain_ * (q_.transpose() * gp_->whiten(r)); }

  /// C^up (C^pp + Gamma_+/h)^{-1}
  Matrix gain() const { return gain_ * q_.transpose() * gp_->whiten(Matrix::Identity(gp_->dim(), gp_->dim())); }

  /// C^uu - C^up (C^pp + Gamma_+/h)^{-1} C^pu as B B^T.
  Matrix reduced_covariance() const {
    const Vector shrink = 1.0 - (1.0 + h_ * s_.array().square()).rsqrt();
    const Matrix b = su_ - su_ * v_ * shrink.asDiagonal() * v_.transpose();
    return symmetrize(b * b.transpose());
  }

 private:
  Matrix su_;
  const SpdFactor* gp_;
  double h_;
  Matrix q_;
  Matrix v_;
  Vector s_;
  Matrix gain_;  // S_u V diag(s / (s^2 + 1/h))
};

inline Matrix output_spread(const EkiState& state) {
  const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(state.ensemble.size()));
  return (state.h_values.colwise() - state.moments.hbar) * inv_sqrt_k;
}

inline GainFactor ensemble_gain(const EkiState& state, const AugmentedProblem& p, double h_n) {
  return GainFactor(spread_matrix(state.ensemble), output_spread(state), p, h_n);
}

}  // namespace detail

/// m + C^up (C^pp + h^{-1} Gamma_+)^{-1} (z - H(m))
inline Vector mean_update(const EkiState& state, const AugmentedProblem& p, double h_n) {
  return state.moments.mean + detail::ensemble_gain(state, p, h_n).apply(p.z() - state.h_mean);
}

/// C^uu - C^up (C^pp + h^{-1} Gamma_+)^{-1} C^pu + alpha^2 Sigma/lambda
inline Matrix covariance_target(const EkiState& state, const AugmentedProblem& p, double h_n, double alpha_sq_n) {
  if (!(alpha_sq_n >= 0.0)) throw std::invalid_argument("covariance_target: inflation must be nonnegative");
  return symmetrize(detail::ensemble_gain(state, p, h_n).reduced_covariance() + alpha_sq_n * p.sigma_eff());
}

inline EkiState eki_step(const EkiState& state, const AugmentedProblem& p, const Schedule& s) {
  const int next = state.n + 1;
  const double h = step_size(s, next);
  const double a2 = inflation(s, next);
  const detail::GainFactor f = detail::ensemble_gain(state, p, h);
  const Vector m_next = state.moments.mean + f.apply(p.z() - state.h_mean);
  const Matrix c_next = symmetrize(f.reduced_covariance() + a2 * p.sigma_eff());
  if (!m_next.allFinite() || !c_next.allFinite()) throw NumericalError("EKI: non-finite update");
  TransformResult moved = transform_update(state.ensemble, m_next, c_next);
  EkiState out = make_state(p, std::move(moved.ensemble), next);
  out.rank_warning = moved.rank_deficient;
  return out;
}

struct StochasticOptions {
  /// Suppress both the observation perturbations and the jitter.
  bool zero_noise = false;
};

/// u_i + gain (z + xi_i - H(u_i)) + alpha zeta_i with xi_i ~ N(0, Gamma_+/h), zeta_i ~ N(0, Sigma/lambda).
inline EkiState stochastic_step(const EkiState& state, const AugmentedProblem& p, const Schedule& s,
                                std::uint64_t seed, StochasticOptions options = {}) {
  const int next = state.n + 1;
  const double h = step_size(s, next);
  const double alpha = std::sqrt(inflation(s, next));
  const Matrix gain = detail::ensemble_gain(state, p, h).gain();
  const Matrix noise_lower = p.gamma_plus_factor().lower() / std::sqrt(h);
  const Matrix jitter_lower = p.sigma_eff_factor().lower();

  Rng rng(seed);
  Matrix members = state.ensemble.members();
  for (Index i = 0; i < members.cols(); ++i) {
    Vector innovation = p.z() - state.h_values.col(i);
    Vector jitter = Vector::Zero(p.d_u());
    if (!options.zero_noise) {
      innovation += noise_lower * rng.standard_normal(p.d_aug());
      jitter = alpha * (jitter_lower * rng.standard_normal(p.d_u()));
    }
    members.col(i) += gain * innovation + jitter;
  }
  return make_state(p, Ensemble(std::move(members)), next);
}

/// C^uu J^T (J C^uu J^T + h^{-1} Gamma_+)^{-1} (z - H(m))
inline Vector gn_move(const EkiState& state, const AugmentedProblem& p, double h_n, const Matrix& jac_h) {
  if (jac_h.rows() != p.d_aug() || jac_h.cols() != p.d_u())
    throw std::invalid_argument("gn_move: Jacobian of H has wrong shape");
  // C = S_u S_u^T, so J C J^T is the output spread J S_u
  const Matrix su = spread_matrix(state.ensemble);
  return detail::GainFactor(su, jac_h * su, p, h_n).apply(p.z() - state.h_mean);
}

struct MoveDiagnostics {
  Vector delta_n;
  Vector g_n;
  double gap = 0.0;
  /// l(m_{n+1}) - l(m_n)
  double descent_lhs = 0.0;
  /// -2 |J^T Gamma_+^{-1}(z - H(m))|^2 in the [(h C)^{-1} + J^T Gamma_+^{-1} J] norm
  double descent_rhs = 0.0;
  double residual = 0.0;
  /// |J Delta_n|^2_{Gamma_+}, the exact residual when H is affine
  double linear_term = 0.0;
};

inline MoveDiagnostics move_diagnostics(const EkiState& state, const AugmentedProblem& p, const Schedule& s,
                                        const Matrix& jac_h) {
  const double h = step_size(s, state.n + 1);
  MoveDiagnostics out;
  const Vector& m = state.moments.mean;
  out.delta_n = mean_update(state, p, h) - m;
  out.g_n = gn_move(state, p, h, jac_h);
  out.gap = (out.g_n - out.delta_n).norm();
  const double loss_now = p.augmented_misfit(m);
  out.descent_lhs = p.augmented_misfit(m + out.delta_n) - loss_now;
  const Vector descent_dir = jac_h.transpose() * p.gamma_plus_factor().solve(p.z() - state.h_mean);
  // [(hC)^{-1} + J^T Gamma_+^{-1} J]^{-1} descent_dir is exactly g_n
  out.descent_rhs = -2.0 * descent_dir.dot(out.g_n);
  out.residual = out.descent_lhs - out.descent_rhs;
  out.linear_term = p.gamma_plus_factor().mahalanobis_sq(jac_h * out.delta_n);
  return out;
}

enum class UpdateMode { transform, stochastic };

struct RunOptions {
  UpdateMode mode = UpdateMode::transform;
  std::uint64_t seed = 0;
  /// Compute Jacobian-based fields (gn_gap, grad_norm, descent_residual).
  bool diagnostics = true;
  /// Enables rel_err in the records.
  std::optional<Vector> truth;
  std::vector<std::function<void(const RunRecord&, const EkiState&)>> observers;
};

struct RunResult {
  EkiState final_state;
  std::vector<RunRecord> records;
};

inline RunResult run(const AugmentedProblem& p, const Schedule& s, const Ensemble& e0, int n_iters,
                     const RunOptions& options = {}) {
  s.validate();
  if (n_iters < 0) throw std::invalid_argument("run: iteration count must be nonnegative");
  if (options.mode == UpdateMode::transform && e0.size() <= e0.dim())
    throw std::invalid_argument("run: transform EKI needs ensemble size > state dimension");

  RunResult out{make_state(p, e0, 0), {}};
  out.records.reserve(static_cast<std::size_t>(n_iters));
  Matrix jac_h;
  if (options.diagnostics && n_iters > 0) jac_h = p.h_jacobian(out.final_state.moments.mean);

  for (int it = 1; it <= n_iters; ++it) {
    const EkiState& prev = out.final_state;
    RunRecord rec;
    rec.n = it;
    rec.h_n = step_size(s, it);
    rec.alpha_sq_n = inflation(s, it);
    EkiState next = [&] {
      try {
        if (options.diagnostics) {
          const MoveDiagnostics md = move_diagnostics(prev, p, s, jac_h);
          rec.gn_gap = md.gap;
          rec.descent_residual = md.residual;
        }
        return options.mode == UpdateMode::transform ? eki_step(prev, p, s)
                                                     : stochastic_step(prev, p, s, derive_seed(options.seed, it));
      } catch (const NumericalError& err) {
        throw NumericalError("iteration " + std::to_string(it) + ": " + err.what());
      }
    }();
    const Vector& m = next.moments.mean;
    if (!m.allFinite()) throw NumericalError("iteration " + std::to_string(it) + ": ensemble mean is not finite");
    rec.move_norm = (m - prev.moments.mean).norm();
    if (options.truth) rec.rel_err = relative_error(m, *options.truth);
    rec.misfit = p.misfit(m);
    rec.loss = p.loss(m);
    const EigenRange eig = extreme_eigenvalues(next.moments.cuu);
    rec.eig_min_cuu = eig.min;
    rec.eig_max_cuu = eig.max;
    const SpectralDiagnostics sd = spectral_diagnostics(next.moments.cuu, p.sigma_eff());
    rec.omega_n = sd.omega;
    rec.c_n = sd.c;
    if (options.diagnostics) {
      const Matrix jac_g = p.g_jacobian(m);
      rec.grad_norm = p.loss_gradient(m, jac_g).norm();
      jac_h = p.h_jacobian_from(jac_g);
    }
    out.final_state = std::move(next);
    out.records.push_back(rec);
    for (const auto& observer : options.observers) observer(rec, out.final_state);
  }
  return out;
}

}  // namespace teki
