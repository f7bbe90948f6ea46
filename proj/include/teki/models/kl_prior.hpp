#pragma once

// Karhunen-Loeve prior on [0,1]^2 for the covariance (-Laplacian + tau^2)^{-nu}.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "teki/linalg.hpp"

namespace teki {

using Mode = std::array<int, 2>;

inline double kl_eigenvalue(const Mode& k, double tau, double nu) {
  const double k2 = static_cast<double>(k[0] * k[0] + k[1] * k[1]);
  return std::pow(k2 * std::numbers::pi * std::numbers::pi + tau * tau, -nu);
}

/// 2 sin(pi k1 x1) sin(pi k2 x2); `literal` selects sqrt(2) sin(pi <k, x>) instead.
inline double kl_eigenfunction(const Mode& k, double x1, double x2, bool literal = false) {
  constexpr double pi = std::numbers::pi;
  if (literal) return std::sqrt(2.0) * std::sin(pi * (k[0] * x1 + k[1] * x2));
  return 2.0 * std::sin(pi * k[0] * x1) * std::sin(pi * k[1] * x2);
}

inline std::pair<double, std::function<double(double, double)>> kl_eigenpair(const Mode& k, double tau, double nu,
                                                                             bool literal = false) {
  if (k[0] < 1 || k[1] < 1) throw std::invalid_argument("kl_eigenpair: mode indices must be positive");
  if (!(tau > 0.0) || !(nu > 0.0)) throw std::invalid_argument("kl_eigenpair: tau and nu must be positive");
  return {kl_eigenvalue(k, tau, nu), [k, literal](double x1, double x2) { return kl_eigenfunction(k, x1, x2, literal); }};
}

/// The first n modes of Z_+^2 by increasing |k|^2, ties broken lexicographically.
inline std::vector<Mode> ordered_modes(Index n) {
  if (n < 1) throw std::invalid_argument("ordered_modes: need at least one mode");
  std::vector<Mode> all;
  const int limit = static_cast<int>(n);
  all.reserve(static_cast<std::size_t>(limit) * limit);
  for (int a = 1; a <= limit; ++a)
    for (int b = 1; b <= limit; ++b) all.push_back({a, b});
  auto norm2 = [](const Mode& m) { return m[0] * m[0] + m[1] * m[1]; };
  std::sort(all.begin(), all.end(), [&](const Mode& l, const Mode& r) {
    if (norm2(l) != norm2(r)) return norm2(l) < norm2(r);
    return l < r;
  });
  all.resize(static_cast<std::size_t>(n));
  return all;
}

struct KlPrior {
  double tau = 15.0;
  double nu = 2.0;
  Index n_modes = 150;
  bool literal_eigenfunctions = false;

  std::vector<Mode> modes() const { return ordered_modes(n_modes); }

  Vector eigenvalues() const {
    const auto ms = modes();
    Vector out(n_modes);
    for (Index i = 0; i < n_modes; ++i) out[i] = kl_eigenvalue(ms[static_cast<std::size_t>(i)], tau, nu);
    return out;
  }

  /// Nodal values of sqrt(lambda_k) phi_k on the (n+1)^2 grid {(i/n, j/n)}, row-major in j.
  Matrix scaled_basis(Index grid_n) const {
    if (grid_n < 1) throw std::invalid_argument("KlPrior: grid needs at least one cell");
    const auto ms = modes();
    const Index side = grid_n + 1;
    Matrix out(side * side, n_modes);
    for (Index m = 0; m < n_modes; ++m) {
      const Mode& k = ms[static_cast<std::size_t>(m)];
      const double root = std::sqrt(kl_eigenvalue(k, tau, nu));
      for (Index j = 0; j < side; ++j)
        for (Index i = 0; i < side; ++i)
          out(j * side + i, m) = root * kl_eigenfunction(k, static_cast<double>(i) / grid_n,
                                                         static_cast<double>(j) / grid_n, literal_eigenfunctions);
    }
    return out;
  }
};

/// u(x) = sum_k sqrt(lambda_k) xi_k phi_k(x), sampled at the nodes of an n x n cell grid.
inline Vector field_from_coeffs(const KlPrior& prior, const Vector& coeffs, Index grid_n) {
  if (coeffs.size() != prior.n_modes) throw std::invalid_argument("field_from_coeffs: wrong number of coefficients");
  return prior.scaled_basis(grid_n) * coeffs;
}

}  // namespace teki
