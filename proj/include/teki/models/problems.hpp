#pragma once

// The bundled test problems with their priors, truths and initial ensembles.

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

#include "teki/ensemble.hpp"
#include "teki/models/darcy.hpp"
#include "teki/models/lorenz96.hpp"
#include "teki/random.hpp"

namespace teki {

enum class ModelKind { l96, darcy1d, darcy2d };

inline std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::l96: return "l96";
    case ModelKind::darcy1d: return "darcy1d";
    case ModelKind::darcy2d: return "darcy2d";
  }
  return "unknown";
}

inline ModelKind parse_model_kind(const std::string& name) {
  if (name == "l96") return ModelKind::l96;
  if (name == "darcy1d") return ModelKind::darcy1d;
  if (name == "darcy2d") return ModelKind::darcy2d;
  throw ConfigError("unknown model '" + name + "' (expected l96, darcy1d or darcy2d)");
}

/// Problem sizes. Desk values keep CI fast; full() gives the published sizes.
struct ProblemSize {
  Index l96_state = 10;
  Index darcy1d_params = 10;
  Index darcy2d_cells = 24;
  Index darcy2d_modes = 30;

  static ProblemSize desk() { return {}; }
  static ProblemSize full() { return {40, 40, 50, 150}; }
};

struct TestProblem {
  ModelKind kind;
  std::shared_ptr<const ForwardModel> model;
  /// Prior covariance Sigma of the Tikhonov term and of the truth draws.
  Matrix prior_cov;
  /// Mean of truth and ensemble draws (zero except for L96's climatology).
  Vector draw_mean;
  Index default_ensemble;
};

/// C(x, x') = 5 exp(-|x - x'| / 20) on the parameter nodes.
inline Matrix darcy1d_prior_covariance(const Vector& nodes) {
  const Index n = nodes.size();
  Matrix c(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) c(i, j) = 5.0 * std::exp(-std::abs(nodes[i] - nodes[j]) / 20.0);
  return c;
}

inline TestProblem make_test_problem(ModelKind kind, const ProblemSize& size = ProblemSize::desk(),
                                     std::uint64_t climatology_seed = 0) {
  switch (kind) {
    case ModelKind::l96: {
      auto model = std::make_shared<L96Model>(size.l96_state);
      const GaussianApprox eq = model->equilibrium_gaussian(climatology_seed);
      const Index k = size.l96_state >= 40 ? 50 : size.l96_state + 5;
      return {kind, model, eq.covariance, eq.mean, k};
    }
    case ModelKind::darcy1d: {
      Darcy1DOptions opts;
      opts.param_dim = size.darcy1d_params;
      auto model = std::make_shared<Darcy1DModel>(opts);
      const Index k = size.darcy1d_params >= 40 ? 50 : size.darcy1d_params + 5;
      return {kind, model, darcy1d_prior_covariance(model->param_nodes()), Vector::Zero(opts.param_dim), k};
    }
    case ModelKind::darcy2d: {
      Darcy2DOptions opts;
      opts.n_cells = size.darcy2d_cells;
      opts.prior.n_modes = size.darcy2d_modes;
      auto model = std::make_shared<Darcy2DModel>(opts);
      const Index d = size.darcy2d_modes;
      const Index k = d >= 150 ? 200 : d + 10;
      return {kind, model, Matrix::Identity(d, d), Vector::Zero(d), k};
    }
  }
  throw ConfigError("unknown model kind");
}

/// L96 / Darcy1D: i.i.d. prior draws. Darcy2D: KL basis vectors first, then N(0, I) draws.
inline Ensemble initial_ensemble(const TestProblem& problem, Index k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("initial_ensemble: need at least 2 members");
  const Index d = problem.model->input_dim();
  Rng rng(seed);
  Matrix members(d, k);
  Index first_draw = 0;
  if (problem.kind == ModelKind::darcy2d) {
    first_draw = std::min(k, d);
    members.leftCols(first_draw) = Matrix::Identity(d, first_draw);
  }
  const SpdFactor prior(problem.prior_cov, "initial_ensemble: prior covariance");
  const Matrix lower = prior.lower();
  for (Index i = first_draw; i < k; ++i) members.col(i) = rng.gaussian(problem.draw_mean, lower);
  return Ensemble(std::move(members));
}

struct TruthAndData {
  Vector truth;
  Vector y;
};

/// Truth from the model's prior, y = G(truth) + N(0, iota^2 I).
inline TruthAndData make_truth_and_data(const TestProblem& problem, double iota, std::uint64_t seed) {
  if (!(iota >= 0.0)) throw std::invalid_argument("make_truth_and_data: noise level must be nonnegative");
  Rng rng(seed);
  const SpdFactor prior(problem.prior_cov, "make_truth_and_data: prior covariance");
  TruthAndData out;
  out.truth = rng.gaussian(problem.draw_mean, prior.lower());
  out.y = problem.model->evaluate(out.truth);
  if (iota > 0.0) out.y += iota * rng.standard_normal(out.y.size());
  return out;
}

}  // namespace teki
