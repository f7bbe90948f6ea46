#include <gtest/gtest.h>

#include <cmath>

#include "teki/ensemble.hpp"
#include "teki/random.hpp"

using namespace teki;

namespace {

Ensemble random_ensemble(Index d, Index k, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(d, k);
  for (Index i = 0; i < k; ++i) m.col(i) = rng.standard_normal(d);
  return Ensemble(m);
}

// Sample covariance by explicit double loop over members.
Matrix brute_covariance(const Matrix& x) {
  const Index d = x.rows();
  const Index k = x.cols();
  Vector mean = Vector::Zero(d);
  for (Index i = 0; i < k; ++i) mean += x.col(i);
  mean /= static_cast<double>(k);
  Matrix c = Matrix::Zero(d, d);
  for (Index i = 0; i < k; ++i)
    for (Index a = 0; a < d; ++a)
      for (Index b = 0; b < d; ++b) c(a, b) += (x(a, i) - mean[a]) * (x(b, i) - mean[b]);
  return c / static_cast<double>(k);
}

}  // namespace

TEST(Ensemble, RejectsSingleMember) {
  EXPECT_THROW(Ensemble(Matrix::Zero(3, 1)), std::invalid_argument);
  EXPECT_THROW(Ensemble::from_members({Vector::Zero(2), Vector::Zero(3)}), std::invalid_argument);
}

TEST(Moments, ScalarPairHandValues) {
  // members {1, -1}: mean 0, 1/K variance 1
  const Ensemble e = Ensemble::from_members({Vector::Constant(1, 1.0), Vector::Constant(1, -1.0)});
  EXPECT_DOUBLE_EQ(ensemble_mean(e)[0], 0.0);
  EXPECT_DOUBLE_EQ(sample_covariance(e)(0, 0), 1.0);
}

TEST(Moments, MatchBruteForce) {
  const Ensemble e = random_ensemble(4, 9, 11);
  Rng rng(5);
  const Matrix a = Matrix::Random(3, 4);
  Matrix hv(7, 9);
  for (Index i = 0; i < 9; ++i) {
    hv.col(i).head(3) = a * e.member(i) + Vector::Constant(3, 0.5);
    hv.col(i).tail(4) = e.member(i);
  }
  const MomentSet m = compute_moments(e, hv);
  Matrix joint(11, 9);
  joint.topRows(4) = e.members();
  joint.bottomRows(7) = hv;
  const Matrix brute = brute_covariance(joint);
  EXPECT_LT((m.cuu - brute.topLeftCorner(4, 4)).norm(), 1e-12);
  EXPECT_LT((m.cup - brute.topRightCorner(4, 7)).norm(), 1e-12);
  EXPECT_LT((m.cpp - brute.bottomRightCorner(7, 7)).norm(), 1e-12);
  EXPECT_TRUE(m.cpu() == m.cup.transpose());
}

TEST(Moments, IdenticalMembersGiveZeroCovariance) {
  const Matrix m = Vector::Constant(3, 2.5).replicate(1, 6);
  EXPECT_EQ(sample_covariance(Ensemble(m)).norm(), 0.0);
}

TEST(Moments, ShiftInvariance) {
  const Ensemble e = random_ensemble(3, 8, 2);
  const Ensemble shifted(e.members().colwise() + Vector::Constant(3, 100.0));
  EXPECT_LT((sample_covariance(e) - sample_covariance(shifted)).norm(), 1e-11);
}

TEST(SymPsdSqrt, SquaresBack) {
  Matrix b = Matrix::Random(5, 5);
  const Matrix a = b * b.transpose() + 0.1 * Matrix::Identity(5, 5);
  const Matrix r = sym_psd_sqrt(a);
  EXPECT_LT((r * r - a).norm() / a.norm(), 1e-12);
  EXPECT_LT((r - r.transpose()).norm(), 1e-14);
}

TEST(SymPsdSqrt, DiagonalAndRejection) {
  const Matrix d = Vector(Eigen::Vector3d(4.0, 9.0, 0.0)).asDiagonal();
  const Matrix r = sym_psd_sqrt(d);
  EXPECT_NEAR(r(0, 0), 2.0, 1e-14);
  EXPECT_NEAR(r(1, 1), 3.0, 1e-14);
  EXPECT_NEAR(r(2, 2), 0.0, 1e-14);
  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 1.0;
  EXPECT_THROW(sym_psd_sqrt(asym), std::invalid_argument);
}

TEST(TransformUpdate, HitsTargetMoments) {
  const Ensemble e = random_ensemble(4, 10, 3);
  Matrix b = Matrix::Random(4, 4);
  const Matrix target = b * b.transpose() + 0.2 * Matrix::Identity(4, 4);
  const Vector m_next = Vector::LinSpaced(4, -1.0, 2.0);
  const TransformResult r = transform_update(e, m_next, target);
  EXPECT_FALSE(r.rank_deficient);
  EXPECT_LT((ensemble_mean(r.ensemble) - m_next).norm(), 1e-12);
  EXPECT_LT((sample_covariance(r.ensemble) - target).norm() / target.norm(), 1e-10);
}

TEST(TransformUpdate, IdentityWhenTargetsEqualCurrent) {
  const Ensemble e = random_ensemble(3, 7, 8);
  const TransformResult r = transform_update(e, ensemble_mean(e), sample_covariance(e));
  EXPECT_LT((r.ensemble.members() - e.members()).norm(), 1e-10);
}

TEST(TransformUpdate, RankDeficientFallbackRebuildsSpread) {
  // identical members: cuu = 0, target must still be reached
  const Ensemble e(Vector::Constant(3, 1.0).replicate(1, 6));
  const Matrix target = 0.08 * Matrix::Identity(3, 3);
  const TransformResult r = transform_update(e, Vector::Zero(3), target);
  EXPECT_TRUE(r.rank_deficient);
  EXPECT_LT(ensemble_mean(r.ensemble).norm(), 1e-12);
  EXPECT_LT((sample_covariance(r.ensemble) - target).norm(), 1e-12);
}

TEST(TransformUpdate, RequiresMoreMembersThanDimension) {
  const Ensemble e = random_ensemble(4, 4, 1);
  EXPECT_THROW(transform_update(e, Vector::Zero(4), Matrix::Identity(4, 4)), std::invalid_argument);
}

TEST(CenteredRows, OrthonormalAndCentred) {
  const Ensemble e = random_ensemble(3, 8, 4);
  const Matrix rows = detail::centered_orthonormal_rows(e.members(), 3);
  EXPECT_LT((rows * rows.transpose() - Matrix::Identity(3, 3)).norm(), 1e-12);
  EXPECT_LT((rows * Vector::Ones(8)).norm(), 1e-12);
}

TEST(Random, SeedDeterminismAndStreams) {
  Rng a(42);
  Rng b(42);
  EXPECT_EQ(a.standard_normal(5), b.standard_normal(5));
  EXPECT_NE(derive_seed(1, 1), derive_seed(1, 2));
  EXPECT_NE(derive_seed(1, 1), derive_seed(2, 1));
}

TEST(Random, GaussianDrawMoments) {
  Rng rng(7);
  Matrix cov(2, 2);
  cov << 2.0, 0.6, 0.6, 1.0;
  const SpdFactor f(cov, "test");
  const int n = 20000;
  Matrix draws(2, n);
  for (int i = 0; i < n; ++i) draws.col(i) = rng.gaussian(Vector::Ones(2), f.lower());
  const Matrix c = brute_covariance(draws);
  EXPECT_NEAR(draws.rowwise().mean()[0], 1.0, 0.05);
  EXPECT_LT((c - cov).cwiseAbs().maxCoeff(), 0.06);
}

TEST(LinAlg, LoglogSlopeOfPowerLaw) {
  std::vector<double> x;
  std::vector<double> y;
  for (int n = 1; n <= 50; ++n) {
    x.push_back(n);
    y.push_back(3.0 * std::pow(n, -0.7));
  }
  EXPECT_NEAR(loglog_slope(x, y), -0.7, 1e-12);
}

TEST(LinAlg, SpdFactorRejectsIndefinite) {
  Matrix a = Matrix::Identity(2, 2);
  a(1, 1) = -1.0;
  EXPECT_THROW(SpdFactor(a, "indefinite"), NumericalError);
  const SpdFactor f(Matrix::Identity(2, 2) * 4.0, "ok");
  EXPECT_NEAR(f.mahalanobis_sq(Vector::Constant(2, 2.0)), 2.0, 1e-15);
}

TEST(Mean, HandExamples) {
  auto v2 = [](double a, double b) { return Vector(Eigen::Vector2d(a, b)); };
  EXPECT_EQ(ensemble_mean(Ensemble::from_members({v2(2, 3), v2(2, 3)})), v2(2, 3));
  EXPECT_EQ(ensemble_mean(Ensemble::from_members({v2(1, 0), v2(-1, 0)})), v2(0, 0));
  EXPECT_LT((ensemble_mean(Ensemble::from_members({v2(1, 2), v2(3, 4), v2(5, 0)})) - v2(3, 2)).norm(), 1e-15);
}

TEST(Moments, ScalarAugmentedHandValues) {
  // H(u) = (2u, u) on members {1, -1}
  const Ensemble e = Ensemble::from_members({Vector::Constant(1, 1.0), Vector::Constant(1, -1.0)});
  Matrix hv(2, 2);
  hv << 2.0, -2.0, 1.0, -1.0;
  const MomentSet m = compute_moments(e, hv);
  EXPECT_DOUBLE_EQ(m.cuu(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.cup(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(m.cup(0, 1), 1.0);
  Matrix cpp(2, 2);
  cpp << 4.0, 2.0, 2.0, 1.0;
  EXPECT_LT((m.cpp - cpp).norm(), 1e-14);
}

TEST(Moments, AffineMapExactRelations) {
  const Ensemble e = random_ensemble(3, 9, 21);
  Matrix a = Matrix::Random(4, 3);
  Matrix hv(4, 9);
  for (Index i = 0; i < 9; ++i) hv.col(i) = a * e.member(i) + Vector::Ones(4);
  const MomentSet m = compute_moments(e, hv);
  EXPECT_LT((m.cup - m.cuu * a.transpose()).norm(), 1e-12);
  EXPECT_LT((m.cpp - a * m.cuu * a.transpose()).norm(), 1e-12);
  // trace(cpp) <= M1^2 trace(cuu), M1 = |A|_2
  const double m1 = Eigen::JacobiSVD<Matrix>(a).singularValues()(0);
  EXPECT_LE(m.cpp.trace(), m1 * m1 * m.cuu.trace() * (1.0 + 1e-12));
}

TEST(Moments, PsdAndRejectsMismatch) {
  const Ensemble e = random_ensemble(5, 3, 4);
  const MomentSet m = compute_moments(e, e.members());
  EXPECT_GE(extreme_eigenvalues(m.cuu).min, -1e-10);
  EXPECT_GE(extreme_eigenvalues(m.cpp).min, -1e-10);
  EXPECT_THROW(compute_moments(e, Matrix::Zero(5, 4)), std::invalid_argument);
}

TEST(Spread, ScalarPairAndColumnSums) {
  const Ensemble e = Ensemble::from_members({Vector::Constant(1, 1.0), Vector::Constant(1, -1.0)});
  const Matrix s = spread_matrix(e);
  EXPECT_NEAR(s(0, 0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(s(0, 1), -1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR((s * s.transpose())(0, 0), 1.0, 1e-15);
  const Matrix r = spread_matrix(random_ensemble(4, 7, 9));
  EXPECT_LT(r.rowwise().sum().norm(), 1e-14);
  EXPECT_EQ(spread_matrix(Ensemble(Matrix::Ones(2, 3))).norm(), 0.0);
}

TEST(SymPsdSqrt, IdentityAndTwoByTwo) {
  EXPECT_LT((sym_psd_sqrt(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm(), 1e-15);
  Matrix a(2, 2);
  a << 2.0, 1.0, 1.0, 2.0;
  const Matrix r = sym_psd_sqrt(a);
  EXPECT_LT((r * r - a).norm(), 1e-10);
}

TEST(SymPsdSqrt, FloorClampsSmallEigenvalues) {
  const Matrix d = Vector(Eigen::Vector2d(1e-20, 4.0)).asDiagonal();
  const Matrix r = sym_psd_sqrt(d, 1e-4);
  EXPECT_NEAR(r(0, 0), 1e-2, 1e-15);
  EXPECT_NEAR(r(1, 1), 2.0, 1e-15);
}

TEST(TransformUpdate, ScalarHandExample) {
  // T = 0.5, members {1, -1} -> 5 + 0.5 * {1, -1}
  const Ensemble e = Ensemble::from_members({Vector::Constant(1, 1.0), Vector::Constant(1, -1.0)});
  const TransformResult r = transform_update(e, Vector::Constant(1, 5.0), Matrix::Constant(1, 1, 0.25));
  EXPECT_NEAR(r.ensemble.members()(0, 0), 5.5, 1e-14);
  EXPECT_NEAR(r.ensemble.members()(0, 1), 4.5, 1e-14);
}

TEST(TransformUpdate, RandomThreeByThreeRoundTrip) {
  const Ensemble e = random_ensemble(3, 8, 13);
  Matrix b = Matrix::Random(3, 3);
  const Matrix target = b * b.transpose() + 0.05 * Matrix::Identity(3, 3);
  const TransformResult r = transform_update(e, Vector::Zero(3), target);
  EXPECT_LT((sample_covariance(r.ensemble) - target).norm() / target.norm(), 1e-8);
  EXPECT_LT(ensemble_mean(r.ensemble).norm(), 1e-12);
}
