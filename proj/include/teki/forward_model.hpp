#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>

#include "teki/linalg.hpp"

namespace teki {

/// Central differences, one column per input coordinate.
template <typename Map>
Matrix fd_jacobian(Map&& map, const Vector& u, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("fd_jacobian: step must be positive");
  Vector probe = u;
  Matrix jac;
  for (Index j = 0; j < u.size(); ++j) {
    probe[j] = u[j] + step;
    const Vector plus = map(probe);
    probe[j] = u[j] - step;
    const Vector minus = map(probe);
    probe[j] = u[j];
    if (j == 0) jac.resize(plus.size(), u.size());
    jac.col(j) = (plus - minus) / (2.0 * step);
  }
  return jac;
}

/// Default finite-difference step used when a model has no analytic Jacobian.
inline double default_fd_step(const Vector& u) { return 1e-5 * (1.0 + u.norm()); }

/// An evaluable map u -> G(u). Implementations must be reentrant.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;

  virtual Index input_dim() const = 0;
  virtual Index output_dim() const = 0;
  virtual Vector evaluate(const Vector& u) const = 0;

  virtual bool has_jacobian() const { return false; }

  /// Analytic Jacobian when available, otherwise central differences.
  virtual Matrix jacobian(const Vector& u) const {
    return fd_jacobian([this](const Vector& x) { return evaluate(x); }, u, default_fd_step(u));
  }
};

/// G(u) = A u + b.
class AffineModel final : public ForwardModel {
 public:
  AffineModel(Matrix a, Vector b) : a_(std::move(a)), b_(std::move(b)) {
    if (a_.rows() != b_.size()) throw std::invalid_argument("AffineModel: offset size mismatch");
  }
  explicit AffineModel(Matrix a) : AffineModel(a, Vector::Zero(a.rows())) {}

  Index input_dim() const override { return a_.cols(); }
  Index output_dim() const override { return a_.rows(); }
  Vector evaluate(const Vector& u) const override { return a_ * u + b_; }
  bool has_jacobian() const override { return true; }
  Matrix jacobian(const Vector&) const override { return a_; }

  const Matrix& matrix() const { return a_; }

 private:
  Matrix a_;
  Vector b_;
};

/// Wraps callables; the Jacobian callable is optional.
class FunctionModel final : public ForwardModel {
 public:
  using Map = std::function<Vector(const Vector&)>;
  using Jac = std::function<Matrix(const Vector&)>;

  FunctionModel(Index d_in, Index d_out, Map map, std::optional<Jac> jac = std::nullopt)
      : d_in_(d_in), d_out_(d_out), map_(std::move(map)), jac_(std::move(jac)) {}

  Index input_dim() const override { return d_in_; }
  Index output_dim() const override { return d_out_; }
  Vector evaluate(const Vector& u) const override { return map_(u); }
  bool has_jacobian() const override { return jac_.has_value(); }
  Matrix jacobian(const Vector& u) const override {
    return jac_ ? (*jac_)(u) : ForwardModel::jacobian(u);
  }

 private:
  Index d_in_;
  Index d_out_;
  Map map_;
  std::optional<Jac> jac_;
};

}  // namespace teki
