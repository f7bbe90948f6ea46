#pragma once

// Darcy flow -div(kappa grad p) = f with p = 0 on the boundary, kappa = exp(u).
//
// Both discretizations are conservative centred differences on a uniform
// node grid with face permeability equal to the arithmetic mean of the two
// nodal values. Parameters u map linearly to a nodal log-permeability field
// (field = B u), so the forward sensitivity is shared by the 1D and 2D models.

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "teki/forward_model.hpp"
#include "teki/linalg.hpp"
#include "teki/models/kl_prior.hpp"

namespace teki {

/// Node connectivity of the flux stencil. Boundary nodes carry p = 0.
struct FluxGraph {
  Index n_nodes = 0;
  /// node -> unknown index, or -1 on the boundary
  std::vector<Index> unknown_of_node;
  Index n_unknowns = 0;
  /// node pairs sharing a face, with at least one interior endpoint
  std::vector<std::pair<Index, Index>> faces;
  double inv_h2 = 1.0;
  /// unknowns are ordered along a line and faces connect consecutive nodes
  bool tridiagonal = false;
};

/// LU of a tridiagonal matrix (Thomas algorithm), kept for repeated solves.
class TridiagonalLu {
 public:
  TridiagonalLu() = default;
  TridiagonalLu(Vector lower, Vector diag, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    const Index n = diag.size();
    pivot_.resize(n);
    mult_.resize(n);
    for (Index i = 0; i < n; ++i) {
      const double d = i == 0 ? diag[0] : diag[i] - mult_[i] * upper_[i - 1];
      if (!(std::abs(d) > 0.0) || !std::isfinite(d)) throw NumericalError("tridiagonal solve: zero pivot");
      pivot_[i] = d;
      if (i + 1 < n) mult_[i + 1] = lower_[i] / d;
    }
  }

  Vector solve(const Vector& rhs) const {
    const Index n = pivot_.size();
    Vector y = rhs;
    for (Index i = 1; i < n; ++i) y[i] -= mult_[i] * y[i - 1];
    for (Index i = n - 1; i >= 0; --i) {
      if (i + 1 < n) y[i] -= upper_[i] * y[i + 1];
      y[i] /= pivot_[i];
    }
    return y;
  }

 private:
  Vector lower_;
  Vector upper_;
  Vector pivot_;
  Vector mult_;
};

/// Factorized stiffness matrix A(kappa) for a given nodal permeability.
class DarcySystem {
 public:
  DarcySystem(const FluxGraph& graph, const Vector& kappa_nodes) : graph_(&graph) {
    if (kappa_nodes.size() != graph.n_nodes) throw std::invalid_argument("Darcy: permeability has wrong size");
    for (Index i = 0; i < kappa_nodes.size(); ++i)
      if (!(kappa_nodes[i] > 0.0) || !std::isfinite(kappa_nodes[i]))
        throw std::invalid_argument("Darcy: permeability must be positive and finite at every node");
    const Index n = graph.n_unknowns;
    if (graph.tridiagonal) {
      Vector lower = Vector::Zero(std::max<Index>(n - 1, 0));
      Vector diag = Vector::Zero(n);
      Vector upper = Vector::Zero(std::max<Index>(n - 1, 0));
      for (const auto& [a, b] : graph.faces) {
        const double k = face_kappa(kappa_nodes, a, b) * graph.inv_h2;
        const Index ia = graph.unknown_of_node[static_cast<std::size_t>(a)];
        const Index ib = graph.unknown_of_node[static_cast<std::size_t>(b)];
        if (ia >= 0) diag[ia] += k;
        if (ib >= 0) diag[ib] += k;
        if (ia >= 0 && ib >= 0) {
          const Index lo = std::min(ia, ib);
          upper[lo] -= k;
          lower[lo] -= k;
        }
      }
      tri_ = TridiagonalLu(lower, diag, upper);
    } else {
      std::vector<Eigen::Triplet<double>> trips;
      trips.reserve(graph.faces.size() * 4);
      for (const auto& [a, b] : graph.faces) {
        const double k = face_kappa(kappa_nodes, a, b) * graph.inv_h2;
        const Index ia = graph.unknown_of_node[static_cast<std::size_t>(a)];
        const Index ib = graph.unknown_of_node[static_cast<std::size_t>(b)];
        if (ia >= 0) trips.emplace_back(ia, ia, k);
        if (ib >= 0) trips.emplace_back(ib, ib, k);
        if (ia >= 0 && ib >= 0) {
          trips.emplace_back(ia, ib, -k);
          trips.emplace_back(ib, ia, -k);
        }
      }
      Eigen::SparseMatrix<double> a(n, n);
      a.setFromTriplets(trips.begin(), trips.end());
      llt_.compute(a);
      if (llt_.info() != Eigen::Success) throw NumericalError("Darcy: sparse Cholesky failed");
    }
  }

  static double face_kappa(const Vector& kappa_nodes, Index a, Index b) { return 0.5 * (kappa_nodes[a] + kappa_nodes[b]); }

  Vector solve(const Vector& rhs) const {
    if (graph_->tridiagonal) return tri_.solve(rhs);
    Vector out = llt_.solve(rhs);
    return out;
  }

 private:
  const FluxGraph* graph_;
  TridiagonalLu tri_;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
};

/// Shared forward map u -> p(x_obs) with kappa = exp(B u) at the grid nodes.
class LogPermeabilityDarcy : public ForwardModel {
 public:
  Index input_dim() const override { return basis_.cols(); }
  Index output_dim() const override { return static_cast<Index>(obs_nodes_.size()); }

  const FluxGraph& graph() const { return graph_; }
  const Matrix& basis() const { return basis_; }
  const std::vector<Index>& obs_nodes() const { return obs_nodes_; }
  const Vector& source() const { return source_; }

  Vector log_permeability(const Vector& u) const {
    if (u.size() != input_dim()) throw std::invalid_argument("Darcy: parameter has wrong dimension");
    return basis_ * u;
  }

  /// exp of the log-permeability; a diverged parameter that over- or underflows is a numerical failure.
  Vector permeability(const Vector& u) const {
    const Vector kappa = log_permeability(u).array().exp().matrix();
    for (Index i = 0; i < kappa.size(); ++i)
      if (!(kappa[i] > 0.0) || !std::isfinite(kappa[i]))
        throw NumericalError("Darcy: permeability exp(u) is not representable at node " + std::to_string(i));
    return kappa;
  }

  /// Pressure at every node (boundary nodes are zero).
  Vector pressure_from_kappa(const Vector& kappa_nodes) const {
    const DarcySystem system(graph_, kappa_nodes);
    return scatter(system.solve(source_));
  }

  Vector pressure(const Vector& u) const { return pressure_from_kappa(permeability(u)); }

  Vector evaluate(const Vector& u) const override { return observe(pressure(u)); }

  bool has_jacobian() const override { return true; }

  /// Forward sensitivities: A q_j = -(dA/du_j) p, one factorization for all columns.
  Matrix jacobian(const Vector& u) const override {
    const Vector kappa = permeability(u);
    const DarcySystem system(graph_, kappa);
    const Vector p = scatter(system.solve(source_));
    const Index du = input_dim();
    Matrix rhs = Matrix::Zero(graph_.n_unknowns, du);
    for (const auto& [a, b] : graph_.faces) {
      const double flux = (p[a] - p[b]) * graph_.inv_h2;
      if (flux == 0.0) continue;
      const Eigen::RowVectorXd dk = 0.5 * (kappa[a] * basis_.row(a) + kappa[b] * basis_.row(b));
      const Index ia = graph_.unknown_of_node[static_cast<std::size_t>(a)];
      const Index ib = graph_.unknown_of_node[static_cast<std::size_t>(b)];
      if (ia >= 0) rhs.row(ia) += flux * dk;
      if (ib >= 0) rhs.row(ib) -= flux * dk;
    }
    Matrix jac(output_dim(), du);
    for (Index j = 0; j < du; ++j) {
      const Vector q = scatter(system.solve(-rhs.col(j)));
      jac.col(j) = observe(q);
    }
    return jac;
  }

  Vector observe(const Vector& nodal) const {
    Vector out(output_dim());
    for (std::size_t i = 0; i < obs_nodes_.size(); ++i) out[static_cast<Index>(i)] = nodal[obs_nodes_[i]];
    return out;
  }

 protected:
  Vector scatter(const Vector& interior) const {
    Vector out = Vector::Zero(graph_.n_nodes);
    for (Index node = 0; node < graph_.n_nodes; ++node) {
      const Index k = graph_.unknown_of_node[static_cast<std::size_t>(node)];
      if (k >= 0) out[node] = interior[k];
    }
    return out;
  }

  FluxGraph graph_;
  Matrix basis_;
  Vector source_;
  std::vector<Index> obs_nodes_;
};

struct Darcy1DOptions {
  /// Number of cells on [0, pi]; the default gives h close to 1/100.
  Index n_cells = 314;
  Index param_dim = 40;
  Index obs_count = 25;
  std::function<double(double)> source = [](double) { return 1.0; };
};

/// 1D Darcy on [0, pi]; u holds nodal log-permeability at param_dim equispaced
/// points, linearly interpolated onto the solver mesh.
class Darcy1DModel final : public LogPermeabilityDarcy {
 public:
  explicit Darcy1DModel(Darcy1DOptions opts = {}) : n_cells_(opts.n_cells) {
    if (opts.n_cells < 2) throw std::invalid_argument("Darcy1DModel: need at least 2 cells");
    if (opts.param_dim < 2) throw std::invalid_argument("Darcy1DModel: need at least 2 parameters");
    constexpr double length = std::numbers::pi;
    h_ = length / static_cast<double>(n_cells_);
    const Index nodes = n_cells_ + 1;
    graph_.n_nodes = nodes;
    graph_.unknown_of_node.assign(static_cast<std::size_t>(nodes), -1);
    for (Index i = 1; i < n_cells_; ++i) graph_.unknown_of_node[static_cast<std::size_t>(i)] = i - 1;
    graph_.n_unknowns = n_cells_ - 1;
    for (Index i = 0; i < n_cells_; ++i) graph_.faces.emplace_back(i, i + 1);
    graph_.inv_h2 = 1.0 / (h_ * h_);
    graph_.tridiagonal = true;

    param_nodes_.resize(opts.param_dim);
    for (Index k = 0; k < opts.param_dim; ++k)
      param_nodes_[k] = length * static_cast<double>(k) / static_cast<double>(opts.param_dim - 1);
    const double spacing = param_nodes_[1] - param_nodes_[0];
    basis_ = Matrix::Zero(nodes, opts.param_dim);
    for (Index i = 0; i < nodes; ++i) {
      const double x = node_x(i);
      Index left = std::min<Index>(static_cast<Index>(std::floor(x / spacing)), opts.param_dim - 2);
      left = std::max<Index>(left, 0);
      const double w = std::clamp((x - param_nodes_[left]) / spacing, 0.0, 1.0);
      basis_(i, left) += 1.0 - w;
      basis_(i, left + 1) += w;
    }

    source_.resize(graph_.n_unknowns);
    for (Index i = 1; i < n_cells_; ++i) source_[i - 1] = opts.source(node_x(i));

    for (Index j = 1; j <= opts.obs_count; ++j) {
      const double x = length * static_cast<double>(j) / static_cast<double>(opts.obs_count + 1);
      obs_nodes_.push_back(static_cast<Index>(std::lround(x / h_)));
    }
  }

  double mesh_h() const { return h_; }
  Index n_cells() const { return n_cells_; }
  double node_x(Index i) const { return h_ * static_cast<double>(i); }
  const Vector& param_nodes() const { return param_nodes_; }

 private:
  Index n_cells_;
  double h_ = 0.0;
  Vector param_nodes_;
};

struct Darcy2DOptions {
  /// Cells per side on [0,1]^2.
  Index n_cells = 50;
  /// 8 x 8 lattice of observations at (i/9, j/9).
  Index obs_per_side = 8;
  KlPrior prior{};
  std::function<double(double, double)> source = [](double, double) { return 100.0; };
};

/// 2D Darcy on [0,1]^2 with u the KL coefficients of the log-permeability.
class Darcy2DModel final : public LogPermeabilityDarcy {
 public:
  explicit Darcy2DModel(Darcy2DOptions opts = {}) : n_(opts.n_cells), prior_(opts.prior) {
    if (n_ < 2) throw std::invalid_argument("Darcy2DModel: need at least 2 cells per side");
    const Index side = n_ + 1;
    const double h = 1.0 / static_cast<double>(n_);
    graph_.n_nodes = side * side;
    graph_.unknown_of_node.assign(static_cast<std::size_t>(side * side), -1);
    Index next = 0;
    for (Index j = 1; j < n_; ++j)
      for (Index i = 1; i < n_; ++i) graph_.unknown_of_node[static_cast<std::size_t>(node(i, j))] = next++;
    graph_.n_unknowns = next;
    auto interior = [&](Index i, Index j) { return i > 0 && i < n_ && j > 0 && j < n_; };
    for (Index j = 0; j < side; ++j)
      for (Index i = 0; i < side; ++i) {
        if (i + 1 < side && (interior(i, j) || interior(i + 1, j))) graph_.faces.emplace_back(node(i, j), node(i + 1, j));
        if (j + 1 < side && (interior(i, j) || interior(i, j + 1))) graph_.faces.emplace_back(node(i, j), node(i, j + 1));
      }
    graph_.inv_h2 = 1.0 / (h * h);
    graph_.tridiagonal = false;

    basis_ = prior_.scaled_basis(n_);
    source_.resize(graph_.n_unknowns);
    for (Index j = 1; j < n_; ++j)
      for (Index i = 1; i < n_; ++i)
        source_[graph_.unknown_of_node[static_cast<std::size_t>(node(i, j))]] = opts.source(i * h, j * h);

    const Index m = opts.obs_per_side;
    for (Index j = 1; j <= m; ++j)
      for (Index i = 1; i <= m; ++i) {
        const auto snap = [&](Index k) {
          return static_cast<Index>(std::lround(static_cast<double>(n_ * k) / static_cast<double>(m + 1)));
        };
        obs_nodes_.push_back(node(snap(i), snap(j)));
      }
  }

  Index n_cells() const { return n_; }
  double mesh_h() const { return 1.0 / static_cast<double>(n_); }
  Index node(Index i, Index j) const { return j * (n_ + 1) + i; }
  const KlPrior& prior() const { return prior_; }

 private:
  Index n_;
  KlPrior prior_;
};

/// Nodal pressure for a nodal permeability on the 1D mesh.
inline Vector darcy1d_solve(const Darcy1DModel& model, const Vector& kappa_grid) {
  return model.pressure_from_kappa(kappa_grid);
}

inline Vector darcy2d_solve(const Darcy2DModel& model, const Vector& kappa_grid) {
  return model.pressure_from_kappa(kappa_grid);
}

}  // namespace teki
