#pragma once

// Tikhonov-augmented observation system, losses, mollifier and the
// step-size / inflation schedules.

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "teki/forward_model.hpp"
#include "teki/linalg.hpp"

namespace teki {

/// Smooth cutoff making the observation map vanish for |u| >= radius + 1.
struct Mollifier {
  double radius = 1000.0;
  double constant = 2000.0;

  double factor(const Vector& u) const {
    const double outer = (radius + 1.0) * (radius + 1.0);
    const double r2 = u.squaredNorm();
    if (r2 >= outer) return 0.0;
    return std::exp(-constant / (outer - r2));
  }

  /// Gradient of factor(u) with respect to u.
  Vector factor_gradient(const Vector& u) const {
    const double outer = (radius + 1.0) * (radius + 1.0);
    const double gap = outer - u.squaredNorm();
    if (gap <= 0.0) return Vector::Zero(u.size());
    return factor(u) * (-2.0 * constant / (gap * gap)) * u;
  }
};

inline Vector mollify(const Vector& g_value, const Vector& u, double radius_m, double const_c) {
  if (!(radius_m > 0.0) || !(const_c > 0.0)) throw std::invalid_argument("mollify: radius and constant must be positive");
  return g_value * Mollifier{radius_m, const_c}.factor(u);
}

/// z = H(u) + xi with H(u) = (G(u), u), z = (y, 0), Gamma_+ = diag(Gamma, Sigma/lambda).
class AugmentedProblem {
 public:
  AugmentedProblem(std::shared_ptr<const ForwardModel> forward, Vector y, Matrix gamma, Matrix sigma, double lambda,
                   std::optional<Mollifier> mollifier = std::nullopt)
      : forward_(std::move(forward)),
        y_(std::move(y)),
        gamma_(std::move(gamma)),
        sigma_(std::move(sigma)),
        lambda_(lambda),
        mollifier_(mollifier) {
    if (!forward_) throw std::invalid_argument("augment: forward model is null");
    if (!(lambda_ > 0.0)) throw std::invalid_argument("augment: lambda must be positive");
    const Index du = forward_->input_dim();
    const Index dy = forward_->output_dim();
    if (y_.size() != dy) throw std::invalid_argument("augment: data size does not match model output");
    if (gamma_.rows() != dy || gamma_.cols() != dy) throw std::invalid_argument("augment: Gamma has wrong shape");
    if (sigma_.rows() != du || sigma_.cols() != du) throw std::invalid_argument("augment: Sigma has wrong shape");
    if (mollifier_ && (!(mollifier_->radius > 0.0) || !(mollifier_->constant > 0.0)))
      throw std::invalid_argument("augment: mollifier radius and constant must be positive");
    gamma_factor_ = SpdFactor(gamma_, "augment: Gamma");
    sigma_eff_ = sigma_ / lambda_;
    sigma_eff_factor_ = SpdFactor(sigma_eff_, "augment: Sigma");
    gamma_plus_ = block_diag(gamma_, sigma_eff_);
    gamma_plus_factor_ = SpdFactor(gamma_plus_, "augment: Gamma_+");
    z_ = Vector::Zero(dy + du);
    z_.head(dy) = y_;
  }

  Index d_u() const { return forward_->input_dim(); }
  Index d_y() const { return forward_->output_dim(); }
  Index d_aug() const { return d_y() + d_u(); }

  const ForwardModel& forward() const { return *forward_; }
  std::shared_ptr<const ForwardModel> forward_ptr() const { return forward_; }
  const Vector& y() const { return y_; }
  const Vector& z() const { return z_; }
  const Matrix& gamma() const { return gamma_; }
  const Matrix& sigma() const { return sigma_; }
  /// Effective prior covariance Sigma / lambda.
  const Matrix& sigma_eff() const { return sigma_eff_; }
  double lambda() const { return lambda_; }
  const Matrix& gamma_plus() const { return gamma_plus_; }
  const SpdFactor& gamma_plus_factor() const { return gamma_plus_factor_; }
  const SpdFactor& gamma_factor() const { return gamma_factor_; }
  const SpdFactor& sigma_eff_factor() const { return sigma_eff_factor_; }
  const std::optional<Mollifier>& mollifier() const { return mollifier_; }

  /// G~(u): the forward map, mollified when configured.
  Vector g(const Vector& u) const {
    check_dim(u);
    Vector out = forward_->evaluate(u);
    if (mollifier_) out *= mollifier_->factor(u);
    return out;
  }

  /// Jacobian of G~ (analytic or finite-difference, plus the mollifier chain rule).
  Matrix g_jacobian(const Vector& u) const {
    check_dim(u);
    Matrix jac = forward_->jacobian(u);
    if (mollifier_) {
      const Vector value = forward_->evaluate(u);
      jac = jac * mollifier_->factor(u) + value * mollifier_->factor_gradient(u).transpose();
    }
    return jac;
  }

  Vector h(const Vector& u) const {
    Vector out(d_aug());
    out.head(d_y()) = g(u);
    out.tail(d_u()) = u;
    return out;
  }

  /// (grad G~; I)
  Matrix h_jacobian_from(const Matrix& jac_g) const {
    if (jac_g.rows() != d_y() || jac_g.cols() != d_u())
      throw std::invalid_argument("h_jacobian: Jacobian of G has wrong shape");
    Matrix out(d_aug(), d_u());
    out.topRows(d_y()) = jac_g;
    out.bottomRows(d_u()).setIdentity();
    return out;
  }
  Matrix h_jacobian(const Vector& u) const { return h_jacobian_from(g_jacobian(u)); }

  double misfit(const Vector& u) const { return gamma_factor_.mahalanobis_sq(g(u) - y_); }

  /// misfit + lambda |u|^2_Sigma
  double loss(const Vector& u) const { return misfit(u) + sigma_eff_factor_.mahalanobis_sq(u); }

  /// |H(u) - z|^2 in the Gamma_+ norm; equals loss(u).
  double augmented_misfit(const Vector& u) const { return gamma_plus_factor_.mahalanobis_sq(h(u) - z_); }

  /// 2 J^T Gamma_+^{-1} (H(u) - z), J = (jac_g; I).
  Vector loss_gradient(const Vector& u, const Matrix& jac_g) const {
    const Matrix jac = h_jacobian_from(jac_g);
    return 2.0 * jac.transpose() * gamma_plus_factor_.solve(h(u) - z_);
  }

 private:
  void check_dim(const Vector& u) const {
    if (u.size() != d_u()) throw std::invalid_argument("AugmentedProblem: state has wrong dimension");
  }

  std::shared_ptr<const ForwardModel> forward_;
  Vector y_;
  Matrix gamma_;
  Matrix sigma_;
  double lambda_;
  std::optional<Mollifier> mollifier_;
  Matrix sigma_eff_;
  Matrix gamma_plus_;
  Vector z_;
  SpdFactor gamma_factor_;
  SpdFactor sigma_eff_factor_;
  SpdFactor gamma_plus_factor_;
};

inline AugmentedProblem augment(std::shared_ptr<const ForwardModel> forward, Vector y, Matrix gamma, Matrix sigma,
                                double lambda, std::optional<Mollifier> mollifier = std::nullopt) {
  return AugmentedProblem(std::move(forward), std::move(y), std::move(gamma), std::move(sigma), lambda, mollifier);
}

inline double loss(const AugmentedProblem& p, const Vector& u) { return p.loss(u); }
inline double misfit(const AugmentedProblem& p, const Vector& u) { return p.misfit(u); }
inline Vector loss_gradient(const AugmentedProblem& p, const Vector& u, const Matrix& jac_g) {
  return p.loss_gradient(u, jac_g);
}

/// h_n = h0 n^beta and alpha_n^2 = alpha0^2 h0^{-1} n^{2 gamma - beta - 2}.
struct Schedule {
  double h0 = 0.5;
  double beta = 0.0;
  double alpha0 = 0.2;
  double gamma_exp = 0.9;
  bool vanilla = false;

  static Schedule custom(double beta, double gamma_exp, double h0 = 0.5, double alpha0 = 0.2) {
    Schedule s{h0, beta, alpha0, gamma_exp, false};
    s.validate();
    return s;
  }

  /// Constant step h0, no inflation.
  static Schedule vanilla_schedule(double h0 = 0.5) { return Schedule{h0, 0.0, 0.0, 0.0, true}; }

  /// Setups 1-5 sweep beta at gamma = 0.9; setups 6-10 sweep gamma at beta = 0.2.
  static Schedule table_setup(int setup, double h0 = 0.5, double alpha0 = 0.2) {
    static constexpr double kBeta[] = {0.0, 0.2, 0.4, 0.6, 0.8, 0.2, 0.2, 0.2, 0.2, 0.2};
    static constexpr double kGamma[] = {0.9, 0.9, 0.9, 0.9, 0.9, 0.2, 0.3, 0.5, 0.7, 0.9};
    if (setup < 1 || setup > 10) throw ConfigError("setup must be in 1..10, got " + std::to_string(setup));
    return custom(kBeta[setup - 1], kGamma[setup - 1], h0, alpha0);
  }

  void validate() const {
    if (!(h0 > 0.0)) throw ConfigError("schedule: h0 must be positive");
    if (vanilla) return;
    if (!(alpha0 >= 0.0)) throw ConfigError("schedule: alpha0 must be nonnegative");
    if (!(gamma_exp > 0.0 && gamma_exp < 1.0)) throw ConfigError("schedule: gamma must lie in (0, 1)");
    // small slack so table values like beta = gamma - 1 survive rounding
    if (beta < gamma_exp - 1.0 - 1e-12 || beta > gamma_exp + 1e-12)
      throw ConfigError("schedule: need gamma - 1 <= beta <= gamma");
  }
};

inline double step_size(const Schedule& s, int n) {
  if (n < 1) throw std::invalid_argument("step_size: schedules are indexed from n = 1");
  if (s.vanilla) return s.h0;
  return s.h0 * std::pow(static_cast<double>(n), s.beta);
}

/// alpha_n^2.
inline double inflation(const Schedule& s, int n) {
  if (n < 1) throw std::invalid_argument("inflation: schedules are indexed from n = 1");
  if (s.vanilla) return 0.0;
  return s.alpha0 * s.alpha0 / s.h0 * std::pow(static_cast<double>(n), 2.0 * s.gamma_exp - s.beta - 2.0);
}

}  // namespace teki
