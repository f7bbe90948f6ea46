#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "teki/inverse_problem.hpp"
#include "teki/random.hpp"

using namespace teki;

namespace {

// G(u) = 2u, y = 3, Gamma = Sigma = 1
AugmentedProblem scalar_problem(double lambda = 1.0, std::optional<Mollifier> moll = std::nullopt) {
  auto g = std::make_shared<AffineModel>(Matrix::Constant(1, 1, 2.0));
  return augment(g, Vector::Constant(1, 3.0), Matrix::Identity(1, 1), Matrix::Identity(1, 1), lambda, moll);
}

Matrix random_spd(Index d, Rng& rng) {
  Matrix b(d, d);
  for (Index j = 0; j < d; ++j) b.col(j) = rng.standard_normal(d);
  return b * b.transpose() + 0.5 * Matrix::Identity(d, d);
}

// Smooth nonlinear map R^3 -> R^4.
std::shared_ptr<FunctionModel> smooth_model() {
  return std::make_shared<FunctionModel>(3, 4, [](const Vector& u) {
    Vector out(4);
    out << std::sin(u[0]) + u[1] * u[1], u[0] * u[2], std::exp(0.3 * u[1]), u[0] + u[1] + u[2] * u[2] * u[2];
    return out;
  });
}

Vector fd_gradient(const AugmentedProblem& p, const Vector& u, double step) {
  Vector g(u.size());
  Vector probe = u;
  for (Index j = 0; j < u.size(); ++j) {
    probe[j] = u[j] + step;
    const double plus = p.loss(probe);
    probe[j] = u[j] - step;
    const double minus = p.loss(probe);
    probe[j] = u[j];
    g[j] = (plus - minus) / (2.0 * step);
  }
  return g;
}

}  // namespace

TEST(Augment, ScalarConstruction) {
  const AugmentedProblem p = scalar_problem();
  EXPECT_EQ(p.z(), Vector(Eigen::Vector2d(3.0, 0.0)));
  EXPECT_EQ(p.gamma_plus(), Matrix::Identity(2, 2));
  EXPECT_LT((p.h(Vector::Constant(1, 0.5)) - Vector(Eigen::Vector2d(1.0, 0.5))).norm(), 1e-15);
}

TEST(Augment, LambdaScalesPriorBlock) {
  const AugmentedProblem p = scalar_problem(2.0);
  EXPECT_DOUBLE_EQ(p.gamma_plus()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p.gamma_plus()(1, 1), 0.5);
  EXPECT_DOUBLE_EQ(p.gamma_plus()(0, 1), 0.0);
}

TEST(Augment, HDimensionIsSum) {
  const AugmentedProblem p = augment(smooth_model(), Vector::Zero(4), Matrix::Identity(4, 4), Matrix::Identity(3, 3), 1.0);
  EXPECT_EQ(p.h(Vector::Ones(3)).size(), 7);
  EXPECT_EQ(p.d_aug(), 7);
}

TEST(Augment, RejectsBadInputs) {
  auto g = std::make_shared<AffineModel>(Matrix::Constant(1, 1, 2.0));
  const Matrix one = Matrix::Identity(1, 1);
  EXPECT_THROW(augment(g, Vector::Zero(1), -one, one, 1.0), NumericalError);
  EXPECT_THROW(augment(g, Vector::Zero(1), one, Matrix::Zero(1, 1), 1.0), NumericalError);
  EXPECT_THROW(augment(g, Vector::Zero(1), one, one, 0.0), std::invalid_argument);
  EXPECT_THROW(augment(g, Vector::Zero(2), one, one, 1.0), std::invalid_argument);
  EXPECT_THROW(augment(nullptr, Vector::Zero(1), one, one, 1.0), std::invalid_argument);
  EXPECT_THROW(augment(g, Vector::Zero(1), one, one, 1.0, Mollifier{-1.0, 1.0}), std::invalid_argument);
}

TEST(Loss, ScalarValues) {
  const AugmentedProblem p = scalar_problem();
  EXPECT_DOUBLE_EQ(loss(p, Vector::Constant(1, 0.0)), 9.0);
  EXPECT_DOUBLE_EQ(loss(p, Vector::Constant(1, 1.0)), 2.0);
  EXPECT_DOUBLE_EQ(misfit(p, Vector::Constant(1, 0.0)), 9.0);
  EXPECT_DOUBLE_EQ(misfit(p, Vector::Constant(1, 1.5)), 0.0);
}

TEST(Loss, DirectEqualsAugmentedForm) {
  Rng rng(17);
  const Matrix gamma = random_spd(4, rng);
  const Matrix sigma = random_spd(3, rng);
  const AugmentedProblem p = augment(smooth_model(), rng.standard_normal(4), gamma, sigma, 1.7);
  for (int t = 0; t < 20; ++t) {
    const Vector u = rng.standard_normal(3);
    // independent evaluation through explicit inverses
    const Vector r = p.g(u) - p.y();
    const double direct = r.dot(gamma.inverse() * r) + 1.7 * u.dot(sigma.inverse() * u);
    EXPECT_NEAR(p.loss(u), direct, 1e-10 * direct);
    EXPECT_NEAR(p.augmented_misfit(u), direct, 1e-10 * direct);
    EXPECT_LE(p.misfit(u), p.loss(u));
  }
}

TEST(LossGradient, ScalarHandValues) {
  const AugmentedProblem p = scalar_problem();
  const Matrix jac = Matrix::Constant(1, 1, 2.0);
  EXPECT_NEAR(loss_gradient(p, Vector::Constant(1, 1.2), jac)[0], 0.0, 1e-12);
  EXPECT_NEAR(loss_gradient(p, Vector::Constant(1, 0.0), jac)[0], -12.0, 1e-12);
}

TEST(LossGradient, MatchesFiniteDifferences) {
  Rng rng(3);
  const AugmentedProblem p =
      augment(smooth_model(), rng.standard_normal(4), random_spd(4, rng), random_spd(3, rng), 0.8);
  for (int t = 0; t < 10; ++t) {
    const Vector u = rng.standard_normal(3);
    const Vector g = p.loss_gradient(u, p.g_jacobian(u));
    const Vector fd = fd_gradient(p, u, 1e-5);
    EXPECT_LT((g - fd).norm(), 1e-6 * std::max(1.0, fd.norm()));
  }
}

TEST(LossGradient, RejectsWrongJacobianShape) {
  const AugmentedProblem p = scalar_problem();
  EXPECT_THROW(p.loss_gradient(Vector::Zero(1), Matrix::Zero(2, 1)), std::invalid_argument);
}

TEST(Mollifier, FactorValues) {
  const Mollifier m{1000.0, 2000.0};
  EXPECT_NEAR(m.factor(Vector::Zero(3)), 0.9980060, 1e-7);
  EXPECT_NEAR(m.factor(Vector::Zero(3)), std::exp(-2000.0 / 1002001.0), 1e-15);
  EXPECT_EQ(mollify(Vector::Ones(2), Vector::Constant(1, 1002.0), 1000.0, 2000.0), Vector::Zero(2));
  EXPECT_EQ(mollify(Vector::Ones(2), Vector::Constant(1, 1001.0), 1000.0, 2000.0), Vector::Zero(2));
  EXPECT_THROW(mollify(Vector::Ones(2), Vector::Zero(1), 0.0, 1.0), std::invalid_argument);
}

TEST(Mollifier, MonotoneDecreasingInRadius) {
  const Mollifier m{2.0, 1.5};
  double prev = m.factor(Vector::Zero(2));
  for (double r = 0.05; r < 3.0; r += 0.05) {
    const double f = m.factor(Vector(Eigen::Vector2d(r * 0.6, r * 0.8)));
    EXPECT_LE(f, prev);
    prev = f;
  }
}

TEST(Mollifier, MollifiedMapVanishesOutsideSupport) {
  const AugmentedProblem p = augment(smooth_model(), Vector::Zero(4), Matrix::Identity(4, 4), Matrix::Identity(3, 3),
                                     1.0, Mollifier{2.0, 1.0});
  EXPECT_EQ(p.g(Vector::Constant(3, 2.0)), Vector::Zero(4));
  EXPECT_EQ(p.g_jacobian(Vector::Constant(3, 2.0)), Matrix::Zero(4, 3));
  EXPECT_GT(p.g(Vector::Constant(3, 0.5)).norm(), 0.0);
}

TEST(Mollifier, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  const AugmentedProblem p = augment(smooth_model(), rng.standard_normal(4), Matrix::Identity(4, 4),
                                     Matrix::Identity(3, 3), 1.0, Mollifier{2.0, 1.0});
  int checked = 0;
  for (int t = 0; t < 30; ++t) {
    const Vector u = 0.8 * rng.standard_normal(3);
    if (p.mollifier()->factor(u) <= 1e-6) continue;
    const Vector g = p.loss_gradient(u, p.g_jacobian(u));
    const Vector fd = fd_gradient(p, u, 1e-6);
    EXPECT_LT((g - fd).norm(), 1e-6 * std::max(1.0, fd.norm()));
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(Schedule, StepSizes) {
  const Schedule s = Schedule::custom(0.2, 0.9);
  EXPECT_DOUBLE_EQ(step_size(s, 1), 0.5);
  EXPECT_NEAR(step_size(s, 10), 0.79245, 1e-5);
  EXPECT_NEAR(step_size(s, 10), 0.5 * std::pow(10.0, 0.2), 1e-15);
  const Schedule v = Schedule::vanilla_schedule();
  EXPECT_DOUBLE_EQ(step_size(v, 1), 0.5);
  EXPECT_DOUBLE_EQ(step_size(v, 1000), 0.5);
}

TEST(Schedule, Inflation) {
  const Schedule s = Schedule::custom(0.2, 0.9);
  EXPECT_NEAR(inflation(s, 1), 0.08, 1e-15);
  EXPECT_NEAR(inflation(s, 10), 0.031849, 1e-6);
  EXPECT_NEAR(inflation(s, 10), 0.08 * std::pow(10.0, -0.4), 1e-15);
  EXPECT_EQ(inflation(Schedule::vanilla_schedule(), 7), 0.0);
}

TEST(Schedule, RejectsZeroIndex) {
  const Schedule s = Schedule::custom(0.2, 0.9);
  EXPECT_THROW(step_size(s, 0), std::invalid_argument);
  EXPECT_THROW(inflation(s, 0), std::invalid_argument);
}

TEST(Schedule, ParameterConstraints) {
  EXPECT_THROW(Schedule::custom(0.95, 0.9), ConfigError);
  EXPECT_THROW(Schedule::custom(-0.9, 0.2), ConfigError);
  EXPECT_THROW(Schedule::custom(0.0, 1.0), ConfigError);
  EXPECT_THROW(Schedule::custom(0.0, 0.9, 0.0), ConfigError);
  EXPECT_NO_THROW(Schedule::custom(-0.8, 0.2));
  EXPECT_NO_THROW(Schedule::custom(0.9, 0.9));
  EXPECT_THROW(Schedule::table_setup(0), ConfigError);
  EXPECT_THROW(Schedule::table_setup(11), ConfigError);
}

TEST(Schedule, TableSetups) {
  const double beta[] = {0.0, 0.2, 0.4, 0.6, 0.8, 0.2, 0.2, 0.2, 0.2, 0.2};
  const double gamma[] = {0.9, 0.9, 0.9, 0.9, 0.9, 0.2, 0.3, 0.5, 0.7, 0.9};
  for (int k = 1; k <= 10; ++k) {
    const Schedule s = Schedule::table_setup(k);
    EXPECT_DOUBLE_EQ(s.beta, beta[k - 1]);
    EXPECT_DOUBLE_EQ(s.gamma_exp, gamma[k - 1]);
    EXPECT_DOUBLE_EQ(s.h0, 0.5);
    EXPECT_DOUBLE_EQ(s.alpha0, 0.2);
  }
}

TEST(Schedule, InflationTimesStepNonIncreasing) {
  for (int k = 1; k <= 10; ++k) {
    const Schedule s = Schedule::table_setup(k);
    double prev = inflation(s, 1) * step_size(s, 1);
    for (int n = 2; n <= 500; ++n) {
      const double cur = inflation(s, n) * step_size(s, n);
      EXPECT_NEAR(cur, 0.04 * std::pow(n, 2.0 * s.gamma_exp - 2.0), 1e-14);
      EXPECT_LE(cur, prev * (1.0 + 1e-14));
      prev = cur;
    }
  }
}
