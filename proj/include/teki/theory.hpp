#pragma once

// Numerical checks of the convergence theory on small whitened toy problems
// (Sigma = Gamma = I, lambda = 1).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teki/eki.hpp"
#include "teki/random.hpp"

namespace teki {

namespace toys {

/// Fixed, well-conditioned 5 x 5 forward matrix.
inline Matrix affine_matrix() {
  Matrix a(5, 5);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) a(i, j) = (i == j ? 1.0 : 0.0) + 0.3 * std::sin(static_cast<double>(i + 2 * j + 1));
  return a;
}

/// Fixed 5 x 3 matrix with condition number below 10.
inline Matrix quadratic_matrix() {
  Matrix a(5, 3);
  a << 2.0, 0.3, -0.2,
       0.1, 1.5, 0.4,
       -0.3, 0.2, 1.0,
       0.5, -0.4, 0.3,
       0.2, 0.6, -0.5;
  return a;
}

inline Vector reference_truth(Index d) {
  static constexpr double kValues[] = {1.0, -0.5, 0.8, 0.3, -1.2, 0.6, -0.9, 0.4};
  Vector out(d);
  for (Index i = 0; i < d; ++i) out[i] = kValues[i % 8];
  return out;
}

inline AugmentedProblem whitened(std::shared_ptr<const ForwardModel> model, const Vector& y) {
  const Index du = model->input_dim();
  const Index dy = model->output_dim();
  return augment(std::move(model), y, Matrix::Identity(dy, dy), Matrix::Identity(du, du), 1.0);
}

/// G(u) = A u, data from the reference truth without noise.
inline AugmentedProblem affine_problem() {
  auto model = std::make_shared<AffineModel>(affine_matrix());
  const Vector y = model->evaluate(reference_truth(5));
  return whitened(model, y);
}

/// Componentwise G(u) = u + 0.1 sin(u).
inline std::shared_ptr<const ForwardModel> sine_model(Index d) {
  return std::make_shared<FunctionModel>(
      d, d, [](const Vector& u) -> Vector { return u + 0.1 * u.array().sin().matrix(); },
      [](const Vector& u) -> Matrix { return (1.0 + 0.1 * u.array().cos()).matrix().asDiagonal(); });
}

inline AugmentedProblem sine_problem(Index d = 5) {
  auto model = sine_model(d);
  const Vector y = model->evaluate(reference_truth(d));
  return whitened(model, y);
}

/// G(u) = A u with y = 0, so u* = 0 and the loss gap is l(m) itself.
inline AugmentedProblem quadratic_problem() {
  auto model = std::make_shared<AffineModel>(quadratic_matrix());
  return whitened(model, Vector::Zero(5));
}

/// Standard normal ensemble, K x d.
inline Ensemble gaussian_ensemble(Index d, Index k, std::uint64_t seed) {
  Rng rng(seed);
  Matrix members(d, k);
  for (Index i = 0; i < k; ++i) members.col(i) = rng.standard_normal(d);
  return Ensemble(std::move(members));
}

/// Lipschitz constant of H(u) = (A u, u): the spectral norm of [A; I].
inline double augmented_lipschitz(const Matrix& a) {
  Matrix stacked(a.rows() + a.cols(), a.cols());
  stacked.topRows(a.rows()) = a;
  stacked.bottomRows(a.cols()).setIdentity();
  return Eigen::JacobiSVD<Matrix>(stacked).singularValues()(0);
}

}  // namespace toys

struct CheckResult {
  std::string name;
  double value = 0.0;
  double target = 0.0;
  std::string relation;  // "<=", ">=", "in"
  double tolerance = 0.0;
  bool passed = false;
};

inline nlohmann::json to_json(const CheckResult& c) {
  return {{"name", c.name},     {"value", c.value},         {"target", c.target},
          {"relation", c.relation}, {"tolerance", c.tolerance}, {"passed", c.passed}};
}

/// Slope of log(field) vs log(n) over records with n in [lo, hi].
template <typename Field>
double record_slope(const std::vector<RunRecord>& records, int lo, int hi, Field field) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& r : records) {
    if (r.n < lo || r.n > hi) continue;
    xs.push_back(r.n);
    ys.push_back(field(r));
  }
  return loglog_slope(xs, ys);
}

struct RecursionCounts {
  int checked = 0;
  int omega_passed = 0;
  int c_passed = 0;
  double worst_omega_margin = std::numeric_limits<double>::infinity();
  double worst_c_margin = std::numeric_limits<double>::infinity();
};

/// Checks omega_{n+1} >= (omega_n + h)/(1 + a2 (omega_n + h)) and
/// c_{n+1} >= c_n / (M1^2 d_u h / omega_n + 1) + a2, with (h, a2) the values used by that step.
inline RecursionCounts check_recursions(const SpectralDiagnostics& initial, const std::vector<RunRecord>& records,
                                        double lipschitz, Index d_u, double tol = 1e-8) {
  RecursionCounts out;
  double omega = initial.omega;
  double c = initial.c;
  for (const auto& r : records) {
    const double h = r.h_n;
    const double a2 = r.alpha_sq_n;
    const double omega_bound = (omega + h) / (1.0 + a2 * (omega + h));
    const double c_bound = c / (lipschitz * lipschitz * static_cast<double>(d_u) * h / omega + 1.0) + a2;
    const double om = r.omega_n - omega_bound + tol;
    const double cm = r.c_n - c_bound + tol;
    ++out.checked;
    if (om >= 0.0) ++out.omega_passed;
    if (cm >= 0.0) ++out.c_passed;
    out.worst_omega_margin = std::min(out.worst_omega_margin, om);
    out.worst_c_margin = std::min(out.worst_c_margin, cm);
    omega = r.omega_n;
    c = r.c_n;
  }
  return out;
}

struct TheoryConfig {
  int rate_iterations = 2000;
  int gap_iterations = 1000;
  int convex_iterations = 1000;
  Index ensemble_size = 12;
  std::uint64_t seed = 7;
};

struct TheoryReport {
  std::vector<CheckResult> checks;
  nlohmann::json details;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  }
  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) arr.push_back(teki::to_json(c));
    return {{"checks", arr}, {"details", details}, {"all_passed", all_passed()}};
  }
};

/// Covariance collapse on the affine toy: slopes of log eig_min / eig_max vs log n.
struct CollapseRun {
  RunResult result;
  SpectralDiagnostics initial;
  double slope_min = 0.0;
  double slope_max = 0.0;
  double max_gap = 0.0;
  RecursionCounts recursions;
};

inline CollapseRun collapse_run(const TheoryConfig& cfg, double beta = 0.2, double gamma = 0.9) {
  const AugmentedProblem p = toys::affine_problem();
  const Schedule s = Schedule::custom(beta, gamma);
  const Ensemble e0 = toys::gaussian_ensemble(5, cfg.ensemble_size, cfg.seed);
  CollapseRun out{run(p, s, e0, cfg.rate_iterations), {}, 0, 0, 0, {}};
  out.initial = spectral_diagnostics(sample_covariance(e0), p.sigma_eff());
  const int lo = std::min(200, cfg.rate_iterations / 10);
  out.slope_min = record_slope(out.result.records, lo, cfg.rate_iterations, [](const RunRecord& r) { return r.eig_min_cuu; });
  out.slope_max = record_slope(out.result.records, lo, cfg.rate_iterations, [](const RunRecord& r) { return r.eig_max_cuu; });
  for (const auto& r : out.result.records) out.max_gap = std::max(out.max_gap, r.gn_gap);
  out.recursions = check_recursions(out.initial, out.result.records, toys::augmented_lipschitz(toys::affine_matrix()), 5);
  return out;
}

inline double gap_slope(const TheoryConfig& cfg, double beta = 0.2, double gamma = 0.9) {
  const AugmentedProblem p = toys::sine_problem(5);
  const Schedule s = Schedule::custom(beta, gamma);
  const Ensemble e0 = toys::gaussian_ensemble(5, cfg.ensemble_size, cfg.seed);
  const RunResult res = run(p, s, e0, cfg.gap_iterations);
  const int lo = std::min(100, cfg.gap_iterations / 10);
  return record_slope(res.records, lo, cfg.gap_iterations, [](const RunRecord& r) { return r.gn_gap; });
}

struct ConvexRate {
  double slope = 0.0;
  double target = 0.0;  // -0.9 (1/2 + beta/2 - gamma/2)
  std::vector<double> gaps;  // per iteration
  int fitted_points = 0;
};

/// Gap samples below (1e4 eps)^2 times the initial gap are treated as rounding noise.
inline constexpr double kConvexRoundingFloor = 1e8 * std::numeric_limits<double>::epsilon() *
                                               std::numeric_limits<double>::epsilon();

/// Fitted exponent of l(m_N) - l(u*) over N in [100, N_max] on the quadratic toy.
inline ConvexRate convex_rate(const TheoryConfig& cfg, double beta, double gamma) {
  const AugmentedProblem p = toys::quadratic_problem();
  const Matrix a = toys::quadratic_matrix();
  const Matrix hessian = a.transpose() * p.gamma_factor().solve(a) + p.sigma_eff_factor().solve(Matrix::Identity(3, 3));
  const Vector u_star = SpdFactor(hessian, "convex_rate").solve(a.transpose() * p.gamma_factor().solve(p.y()));
  const Schedule s = Schedule::custom(beta, gamma);
  const Ensemble e0 = toys::gaussian_ensemble(3, std::max<Index>(cfg.ensemble_size, 4), cfg.seed);
  ConvexRate out;
  out.target = -0.9 * (0.5 + 0.5 * beta - 0.5 * gamma);
  std::vector<double> xs;
  std::vector<double> ys;
  RunOptions opts;
  opts.diagnostics = false;
  const int lo = std::min(100, cfg.convex_iterations / 10);
  opts.observers.push_back([&](const RunRecord& r, const EkiState& st) {
    const Vector e = st.moments.mean - u_star;
    // exact for a quadratic loss
    const double gap = e.dot(hessian * e);
    out.gaps.push_back(gap);
    if (r.n >= lo) {
      xs.push_back(r.n);
      ys.push_back(gap);
    }
  });
  run(p, s, e0, cfg.convex_iterations, opts);
  // The decay is much faster than the algebraic bound and reaches rounding level inside the
  // window; those samples carry no rate information.
  const double floor = out.gaps.empty() ? 0.0 : out.gaps.front() * kConvexRoundingFloor;
  std::vector<double> fx;
  std::vector<double> fy;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (ys[i] > floor) {
      fx.push_back(xs[i]);
      fy.push_back(ys[i]);
    }
  out.fitted_points = static_cast<int>(fx.size());
  out.slope = fx.size() >= 2 ? loglog_slope(fx, fy) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

inline TheoryReport verify_theory(const TheoryConfig& cfg = {}) {
  TheoryReport rep;
  const double beta = 0.2;
  const double gamma = 0.9;

  const CollapseRun collapse = collapse_run(cfg, beta, gamma);
  const double collapse_target = gamma - beta - 1.0;
  auto in_band = [](double v, double t, double tol) { return std::abs(v - t) <= tol; };
  rep.checks.push_back({"collapse_slope_eig_min", collapse.slope_min, collapse_target, "in", 0.1,
                        in_band(collapse.slope_min, collapse_target, 0.1)});
  rep.checks.push_back({"collapse_slope_eig_max", collapse.slope_max, collapse_target, "in", 0.1,
                        in_band(collapse.slope_max, collapse_target, 0.1)});
  rep.checks.push_back({"affine_gn_gap_max", collapse.max_gap, 1e-10, "<=", 0.0, collapse.max_gap <= 1e-10});
  const auto& rc = collapse.recursions;
  rep.checks.push_back({"omega_recursion_pass_fraction", static_cast<double>(rc.omega_passed) / rc.checked, 1.0, ">=",
                        0.0, rc.omega_passed == rc.checked});
  rep.checks.push_back({"c_recursion_pass_fraction", static_cast<double>(rc.c_passed) / rc.checked, 1.0, ">=", 0.0,
                        rc.c_passed == rc.checked});
  rep.details["recursions"] = {{"checked", rc.checked},
                               {"omega_passed", rc.omega_passed},
                               {"c_passed", rc.c_passed},
                               {"worst_omega_margin", rc.worst_omega_margin},
                               {"worst_c_margin", rc.worst_c_margin}};

  const double gap_target = (3.0 * gamma - 3.0 - beta) / 2.0;
  const double gs = gap_slope(cfg, beta, gamma);
  rep.checks.push_back({"gn_gap_slope", gs, gap_target + 0.15, "<=", 0.0, gs <= gap_target + 0.15});

  for (const auto& [b, g] : {std::pair{0.8, 0.9}, std::pair{0.2, 0.9}}) {
    const ConvexRate cr = convex_rate(cfg, b, g);
    rep.checks.push_back({"convex_rate_beta" + std::to_string(b).substr(0, 3) + "_gamma" + std::to_string(g).substr(0, 3),
                          cr.slope, cr.target, "<=", 0.0, cr.fitted_points >= 2 && cr.slope <= cr.target});
    rep.details["convex_fitted_points"].push_back(cr.fitted_points);
  }

  // Approximate critical point: running minimum of |grad l| on the sine toy,
  // with D = eps^2 N^{min(2 gamma, beta + 1 - gamma)/2} implied at each N. Reported only.
  {
    const AugmentedProblem p = toys::sine_problem(5);
    const RunResult res = run(p, Schedule::custom(beta, gamma), toys::gaussian_ensemble(5, cfg.ensemble_size, cfg.seed),
                              cfg.gap_iterations);
    const double expo = std::min(2.0 * gamma, beta + 1.0 - gamma) / 2.0;
    nlohmann::json rows = nlohmann::json::array();
    double running = std::numeric_limits<double>::infinity();
    for (const auto& r : res.records) {
      running = std::min(running, r.grad_norm);
      if (r.n == 1 || r.n == 10 || r.n == 100 || r.n == cfg.gap_iterations)
        rows.push_back({{"N", r.n}, {"min_grad_norm", running}, {"implied_D", running * running * std::pow(r.n, expo)}});
    }
    rep.details["critical_point"] = rows;
  }
  return rep;
}

}  // namespace teki
