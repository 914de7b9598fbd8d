#include "perpetuity/riccati.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>
#include <unsupported/Eigen/KroneckerProduct>

#include <random>

using namespace perpetuity;

namespace {

// Stationary covariance from g S + S g' = s s' by a Kronecker solve.
Matrix lyapunov_oracle(const Matrix& g, const Matrix& s) {
  const int d = static_cast<int>(g.rows());
  const Matrix I = Matrix::Identity(d, d);
  const Matrix K = Eigen::kroneckerProduct(I, g) + Eigen::kroneckerProduct(g, I);
  const Matrix rhs = s * s.transpose();
  const Vector v = K.fullPivLu().solve(Eigen::Map<const Vector>(rhs.data(), d * d));
  return Eigen::Map<const Matrix>(v.data(), d, d);
}

bool spd(const Matrix& m) {
  return (m - m.transpose()).norm() <= 1e-10 * m.norm() &&
         Eigen::SelfAdjointEigenSolver<Matrix>(m).eigenvalues().minCoeff() > 0.0;
}

}  // namespace

TEST(Riccati, ScalarMultipleOfIdentity) {
  const double g0 = 1.7;
  const RiccatiSolution sol =
      riccati_stationary_ou(g0 * Matrix::Identity(3, 3), Vector::Zero(3), Matrix::Identity(3, 3));
  EXPECT_TRUE(sol.J.isApprox(2 * g0 * Matrix::Identity(3, 3), 1e-12));
  EXPECT_TRUE(sol.Sigma.isApprox(Matrix::Identity(3, 3) / (2 * g0), 1e-12));
}

TEST(Riccati, NonSymmetricGamma) {
  Matrix g(2, 2);
  g << 2, 1, 0, 3;
  const RiccatiSolution sol = riccati_stationary_ou(g, Vector::Zero(2), Matrix::Identity(2, 2));
  EXPECT_LT(riccati_residual(sol.J, g, Matrix::Identity(2, 2)), 1e-10);
  EXPECT_TRUE(spd(sol.J));
  EXPECT_TRUE(spd(sol.Sigma));
  EXPECT_LE((sol.Sigma - lyapunov_oracle(g, Matrix::Identity(2, 2))).norm(), 1e-10);
}

TEST(Riccati, UnstableGammaThrows) {
  EXPECT_THROW(riccati_stationary_ou(-Matrix::Identity(2, 2), Vector::Zero(2),
                                     Matrix::Identity(2, 2)),
               SpectrumError);
}

TEST(Riccati, RotationWithZeroRealPartThrows) {
  Matrix g(2, 2);
  g << 0, 1, -1, 0;
  EXPECT_THROW(riccati_stationary_ou(g, Vector::Zero(2), Matrix::Identity(2, 2)), SpectrumError);
}

TEST(Riccati, RandomStableModelsMatchLyapunov) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 2 + trial % 3;
    Matrix a(d, d), b(d, d);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a.data()[i] = n01(rng);
      b.data()[i] = n01(rng);
    }
    // Shift until every eigenvalue has real part >= 0.5.
    const double shift =
        0.5 - Eigen::EigenSolver<Matrix>(a).eigenvalues().real().minCoeff();
    const Matrix g = a + std::max(0.0, shift) * Matrix::Identity(d, d);
    const Matrix s = b * b.transpose() + Matrix::Identity(d, d);
    const RiccatiSolution sol = riccati_stationary_ou(g, Vector::Zero(d), s);
    EXPECT_LT(sol.residual, 1e-8);
    const Matrix oracle = lyapunov_oracle(g, s);
    EXPECT_LE((sol.Sigma - oracle).norm(), 1e-8 * oracle.norm()) << "trial " << trial;
  }
}

TEST(Riccati, ScalingGammaScalesJ) {
  Matrix g(2, 2);
  g << 2, 1, 0, 3;
  const Matrix s = Matrix::Identity(2, 2);
  const Matrix J1 = riccati_stationary_ou(g, Vector::Zero(2), s).J;
  const Matrix J3 = riccati_stationary_ou(3.0 * g, Vector::Zero(2), s).J;
  EXPECT_LE((J3 - 3.0 * J1).norm(), 1e-8 * J3.norm());
}

TEST(Riccati, MeanPassesThrough) {
  const Vector mean = (Vector(2) << 0.5, -1.0).finished();
  const RiccatiSolution sol =
      riccati_stationary_ou(Matrix::Identity(2, 2), mean, Matrix::Identity(2, 2));
  EXPECT_TRUE(sol.mean.isApprox(mean));
}

TEST(Sylvester, SolvesSmallSystem) {
  Matrix A(2, 2), B(2, 2), C(2, 2);
  A << 3, 1, 0, 2;
  B << 1, 0, 2, 4;
  C << 1, 2, 3, 4;
  const Matrix X = solve_sylvester(A, B, C);
  EXPECT_LE((A * X + X * B - C).norm(), 1e-12);
}
