#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "teki/forward_model.hpp"
#include "teki/linalg.hpp"
#include "teki/random.hpp"

namespace teki {

/// dv_k/dt = v_{k-1}(v_{k+1} - v_{k-2}) - v_k + F, cyclic in k.
inline Vector l96_rhs(const Vector& v, double forcing) {
  const Index n = v.size();
  if (n < 4) throw std::invalid_argument("l96_rhs: need at least 4 components");
  Vector out(n);
  for (Index k = 0; k < n; ++k) {
    const double prev = v[(k + n - 1) % n];
    const double next = v[(k + 1) % n];
    const double prev2 = v[(k + n - 2) % n];
    out[k] = prev * (next - prev2) - v[k] + forcing;
  }
  return out;
}

/// Jacobian of l96_rhs with respect to v.
inline Matrix l96_rhs_jacobian(const Vector& v) {
  const Index n = v.size();
  Matrix jac = Matrix::Zero(n, n);
  for (Index k = 0; k < n; ++k) {
    const Index km1 = (k + n - 1) % n;
    const Index kp1 = (k + 1) % n;
    const Index km2 = (k + n - 2) % n;
    jac(k, km1) += v[kp1] - v[km2];
    jac(k, kp1) += v[km1];
    jac(k, km2) -= v[km1];
    jac(k, k) -= 1.0;
  }
  return jac;
}

/// Number of fixed steps dt needed to reach t_end; throws unless t_end/dt is integral.
inline long rk4_steps(double dt, double t_end) {
  if (!(dt > 0.0) || !(t_end >= 0.0)) throw std::invalid_argument("rk4: need dt > 0 and t_end >= 0");
  const double ratio = t_end / dt;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
    throw std::invalid_argument("rk4: t_end must be an integer multiple of dt");
  return static_cast<long>(rounded);
}

/// Classical fixed-step RK4. State may be any Eigen dense type.
template <typename Rhs, typename Derived>
typename Derived::PlainObject rk4_integrate(Rhs&& rhs, const Eigen::MatrixBase<Derived>& v0, double dt, double t_end) {
  using State = typename Derived::PlainObject;
  State v = v0;
  const long steps = rk4_steps(dt, t_end);
  for (long i = 0; i < steps; ++i) {
    const State k1 = rhs(v);
    const State k2 = rhs(State(v + 0.5 * dt * k1));
    const State k3 = rhs(State(v + 0.5 * dt * k2));
    const State k4 = rhs(State(v + dt * k3));
    v += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!v.allFinite()) throw NumericalError("rk4: state became non-finite at step " + std::to_string(i + 1));
  }
  return v;
}

struct GaussianApprox {
  Vector mean;
  Matrix covariance;
};

/// Recovers v(0) from every other component of v(t_obs).
class L96Model final : public ForwardModel {
 public:
  explicit L96Model(Index n_state = 40, double forcing = 8.0, double dt = 0.01, double t_obs = 0.3)
      : n_(n_state), forcing_(forcing), dt_(dt), t_obs_(t_obs) {
    if (n_ < 4) throw std::invalid_argument("L96Model: need N >= 4");
    rk4_steps(dt_, t_obs_);
    // y_k = v_{2k-1}: 0-based even positions
    for (Index k = 0; k < n_; k += 2) obs_.push_back(k);
  }

  Index input_dim() const override { return n_; }
  Index output_dim() const override { return static_cast<Index>(obs_.size()); }
  double forcing() const { return forcing_; }
  double dt() const { return dt_; }
  double t_obs() const { return t_obs_; }
  const std::vector<Index>& obs_indices() const { return obs_; }

  Vector trajectory_end(const Vector& u0, double t_end) const {
    return rk4_integrate([this](const Vector& v) { return l96_rhs(v, forcing_); }, u0, dt_, t_end);
  }

  Vector evaluate(const Vector& u0) const override { return select(trajectory_end(u0, t_obs_)); }

  bool has_jacobian() const override { return true; }

  /// Integrates v and the variational equation Q' = grad(Phi)(v) Q jointly.
  Matrix jacobian(const Vector& u0) const override { return select_rows(flow_jacobian(u0, t_obs_)); }

  Matrix flow_jacobian(const Vector& u0, double t_end) const {
    if (u0.size() != n_) throw std::invalid_argument("L96Model: state has wrong dimension");
    // column 0 holds the state, columns 1..N the sensitivity matrix
    Matrix joint(n_, n_ + 1);
    joint.col(0) = u0;
    joint.rightCols(n_).setIdentity();
    auto rhs = [this](const Matrix& x) {
      Matrix out(x.rows(), x.cols());
      const Vector v = x.col(0);
      out.col(0) = l96_rhs(v, forcing_);
      out.rightCols(n_) = l96_rhs_jacobian(v) * x.rightCols(n_);
      return out;
    };
    const Matrix end = rk4_integrate(rhs, joint, dt_, t_end);
    return end.rightCols(n_);
  }

  /// Long-run Gaussian fit: burn-in, then n_samples states spaced by `spacing`.
  GaussianApprox equilibrium_gaussian(std::uint64_t seed, double burn_in = 10.0, int n_samples = 2000,
                                      double spacing = 0.1) const {
    Rng rng(seed);
    Vector v = Vector::Constant(n_, forcing_) + 0.01 * rng.standard_normal(n_);
    v = trajectory_end(v, burn_in);
    Matrix samples(n_, n_samples);
    for (int i = 0; i < n_samples; ++i) {
      v = trajectory_end(v, spacing);
      samples.col(i) = v;
    }
    GaussianApprox out;
    out.mean = samples.rowwise().mean();
    const Matrix centred = samples.colwise() - out.mean;
    Matrix cov = symmetrize(centred * centred.transpose() / static_cast<double>(n_samples - 1));
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    const Vector floored = es.eigenvalues().cwiseMax(1e-8);
    out.covariance = symmetrize(es.eigenvectors() * floored.asDiagonal() * es.eigenvectors().transpose());
    return out;
  }

 private:
  Vector select(const Vector& v) const {
    Vector out(static_cast<Index>(obs_.size()));
    for (std::size_t i = 0; i < obs_.size(); ++i) out[static_cast<Index>(i)] = v[obs_[i]];
    return out;
  }
  Matrix select_rows(const Matrix& q) const {
    Matrix out(static_cast<Index>(obs_.size()), q.cols());
    for (std::size_t i = 0; i < obs_.size(); ++i) out.row(static_cast<Index>(i)) = q.row(obs_[i]);
    return out;
  }

  Index n_;
  double forcing_;
  double dt_;
  double t_obs_;
  std::vector<Index> obs_;
};

inline Vector l96_forward(const L96Model& model, const Vector& u0) { return model.evaluate(u0); }

inline GaussianApprox l96_equilibrium_gaussian(const L96Model& model, std::uint64_t seed) {
  return model.equilibrium_gaussian(seed);
}

}  // namespace teki
