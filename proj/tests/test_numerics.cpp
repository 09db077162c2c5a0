#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mppidk/errors.hpp"
#include "mppidk/numerics.hpp"

namespace mppidk {
namespace {

using numerics::NoiseStreamKey;

Matrix random_matrix(int rows, int cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

TEST(Pinv, IdentityIsItsOwnInverse) {
  EXPECT_TRUE(numerics::pinv(Matrix::Identity(2, 2)).isApprox(Matrix::Identity(2, 2)));
}

TEST(Pinv, ProjectorIsReproduced) {
  Matrix p = Matrix::Zero(2, 2);
  p(0, 0) = 1.0;
  const Matrix q = numerics::pinv(p);
  EXPECT_NEAR((q - p).norm(), 0.0, 1e-15);
}

TEST(Pinv, RowVector) {
  Matrix r(1, 2);
  r << 1.0, 2.0;
  const Matrix q = numerics::pinv(r);
  ASSERT_EQ(q.rows(), 2);
  ASSERT_EQ(q.cols(), 1);
  EXPECT_NEAR(q(0, 0), 0.2, 1e-15);
  EXPECT_NEAR(q(1, 0), 0.4, 1e-15);
}

TEST(Pinv, PenroseConditionsOnRandomMatrices) {
  for (unsigned seed = 0; seed < 20; ++seed) {
    const Matrix a = random_matrix(5, 3, seed);
    const Matrix p = numerics::pinv(a, 1e-12);
    EXPECT_LE((a * p * a - a).norm(), 1e-9);
    EXPECT_LE((p * a * p - p).norm(), 1e-9);
    EXPECT_LE(((a * p).transpose() - a * p).norm(), 1e-9);
    EXPECT_LE(((p * a).transpose() - p * a).norm(), 1e-9);
  }
}

TEST(Pinv, ReportsTruncatedRank) {
  Matrix a = random_matrix(4, 2, 7);
  a.col(1) = 3.0 * a.col(0);
  const auto r = numerics::pinv_with_rank(a);
  EXPECT_EQ(r.rank, 1);
  EXPECT_TRUE(r.truncated());
}

TEST(Pinv, RejectsNonFinite) {
  Matrix a = Matrix::Identity(2, 2);
  a(0, 1) = std::nan("");
  EXPECT_THROW(numerics::pinv(a), InvalidInput);
}

TEST(GaussianSample, ZeroCovarianceGivesZero) {
  const Vector v = numerics::gaussian_sample({1, 2, 3}, 3, Matrix::Zero(3, 3));
  EXPECT_EQ(v, Vector::Zero(3));
}

TEST(GaussianSample, SameKeySameDraw) {
  const Matrix cov = Eigen::Vector3d(0.5, 1.0, 2.0).asDiagonal();
  const Vector a = numerics::gaussian_sample({42, 7, 9}, 3, cov);
  const Vector b = numerics::gaussian_sample({42, 7, 9}, 3, cov);
  EXPECT_EQ(a, b);
  const Vector c = numerics::gaussian_sample({42, 7, 10}, 3, cov);
  EXPECT_NE(a, c);
}

TEST(GaussianSample, StandardNormalMoments) {
  const Matrix cov = Matrix::Identity(1, 1);
  const int n = 100000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = numerics::gaussian_sample({3, 0, static_cast<std::uint64_t>(i)}, 1, cov)(0);
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_GE(var, 0.95);
  EXPECT_LE(var, 1.05);
}

TEST(GaussianSample, FullCovarianceIsReproduced) {
  Matrix cov(2, 2);
  cov << 2.0, 0.6, 0.6, 0.5;
  const numerics::GaussianSampler sampler(cov);
  const int n = 50000;
  Matrix acc = Matrix::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const Vector z = sampler.sample({11, 1, static_cast<std::uint64_t>(i)});
    acc += z * z.transpose();
  }
  EXPECT_LE((acc / n - cov).cwiseAbs().maxCoeff(), 0.05);
}

TEST(GaussianSample, RejectsNegativeVariance) {
  const Matrix cov = Eigen::Vector2d(1.0, -0.1).asDiagonal();
  EXPECT_THROW(numerics::GaussianSampler{cov}, InvalidInput);
}

TEST(CounterUniform, StaysInOpenInterval) {
  const std::uint64_t s = numerics::stream_id({5, 6, 7});
  for (std::uint64_t c = 0; c < 10000; ++c) {
    const double u = numerics::counter_uniform(s, c);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

Matrix row_sequence(const std::vector<double>& values) {
  Matrix m(1, static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = values[i];
  return m;
}

TEST(Savgol, ConstantSequenceUnchanged) {
  const Matrix c = Matrix::Constant(2, 12, 0.7);
  EXPECT_LE((numerics::savgol_smooth(c, 5, 2) - c).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Savgol, RampReproducedEverywhere) {
  std::vector<double> v;
  for (int t = 0; t < 15; ++t) v.push_back(0.3 * t - 1.0);
  const Matrix ramp = row_sequence(v);
  for (int order : {1, 2, 3}) {
    EXPECT_LE((numerics::savgol_smooth(ramp, 7, order) - ramp).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Savgol, QuadraticReproducedInInterior) {
  std::vector<double> v;
  for (int t = 0; t < 12; ++t) v.push_back(static_cast<double>(t * t));
  const Matrix q = row_sequence(v);
  const Matrix s = numerics::savgol_smooth(q, 5, 2);
  for (int t = 2; t < 10; ++t) EXPECT_NEAR(s(0, t), q(0, t), 1e-10);
}

TEST(Savgol, ClassicFivePointCoefficients) {
  const Vector c = numerics::savgol_coefficients(5, 2);
  const Vector expected = (Vector(5) << -3.0, 12.0, 17.0, 12.0, -3.0).finished() / 35.0;
  EXPECT_LE((c - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Savgol, IsLinear) {
  const Matrix x = random_matrix(2, 20, 1);
  const Matrix y = random_matrix(2, 20, 2);
  const double a = 1.7;
  const double b = -0.4;
  const Matrix lhs = numerics::savgol_smooth(a * x + b * y, 9, 3);
  const Matrix rhs = a * numerics::savgol_smooth(x, 9, 3) + b * numerics::savgol_smooth(y, 9, 3);
  EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Savgol, RejectsBadWindow) {
  const Matrix x = Matrix::Zero(1, 10);
  EXPECT_THROW(numerics::savgol_smooth(x, 4, 2), InvalidInput);
  EXPECT_THROW(numerics::savgol_smooth(x, 5, 5), InvalidInput);
  EXPECT_THROW(numerics::savgol_smooth(x, 11, 2), InvalidInput);
}

TEST(Savgol, WindowSelection) {
  EXPECT_EQ(numerics::savgol_window_for(9, 20, 3), 9);
  EXPECT_EQ(numerics::savgol_window_for(9, 6, 3), 5);
  EXPECT_EQ(numerics::savgol_window_for(9, 3, 3), 0);
}

TEST(Box, ClampAndContains) {
  const Box b{Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(1.0, 2.0)};
  EXPECT_TRUE(b.contains(Eigen::Vector2d(0.5, 2.0)));
  EXPECT_FALSE(b.contains(Eigen::Vector2d(1.5, 1.0)));
  EXPECT_EQ(b.clamp(Eigen::Vector2d(3.0, -1.0)), Eigen::Vector2d(1.0, 0.0));
}

}  // namespace
}  // namespace mppidk
