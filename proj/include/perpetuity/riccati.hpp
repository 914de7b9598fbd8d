#pragma once

#include "perpetuity/types.hpp"

namespace perpetuity {

/// Stationary law of the OU factor dZ = -gamma (Z - mean) dt + sigma dW via
/// the quadratic matrix equation J J = M' J + J M, M = sigma^-1 gamma sigma.
struct RiccatiSolution {
  Matrix J;
  Matrix Sigma;  // sigma J^-1 sigma, the stationary covariance
  Vector mean;
  double residual = 0.0;  // Frobenius norm of J J - M' J - J M
  int iterations = 0;
};

/// Frobenius norm of the defect J J - M' J - J M.
double riccati_residual(const Matrix& J, const Matrix& gamma,
                        const Matrix& sigma);

/// Newton iteration from J0 = M + M'. Throws SpectrumError when some
/// eigenvalue of gamma has nonpositive real part and ConvergenceError when
/// the iteration stalls.
RiccatiSolution riccati_stationary_ou(const Matrix& gamma, const Vector& mean,
                                      const Matrix& sigma,
                                      int max_iterations = 100,
                                      double tolerance = 1e-10);

/// Solves A X + X B = C by vectorization (small dimensions only).
Matrix solve_sylvester(const Matrix& A, const Matrix& B, const Matrix& C);

}  // namespace perpetuity
