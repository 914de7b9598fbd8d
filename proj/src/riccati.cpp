#include "perpetuity/riccati.hpp"

#include "perpetuity/model.hpp"

#include <Eigen/Eigenvalues>

#include <sstream>

namespace perpetuity {

namespace {

Matrix similarity(const Matrix& gamma, const Matrix& sigma) {
  return sigma.partialPivLu().solve(gamma * sigma);
}

}  // namespace

Matrix solve_sylvester(const Matrix& A, const Matrix& B, const Matrix& C) {
  const Eigen::Index n = A.rows(), m = B.rows();
  // vec(A X) = (I kron A) vec X, vec(X B) = (B' kron I) vec X.
  Matrix K = Matrix::Zero(n * m, n * m);
  for (Eigen::Index j = 0; j < m; ++j) {
    K.block(j * n, j * n, n, n) += A;
    for (Eigen::Index l = 0; l < m; ++l)
      K.block(j * n, l * n, n, n) += B(l, j) * Matrix::Identity(n, n);
  }
  const Vector rhs = Eigen::Map<const Vector>(C.data(), n * m);
  Eigen::FullPivLU<Matrix> lu(K);
  if (!lu.isInvertible())
    throw NumericalError("solve_sylvester: singular Kronecker system");
  const Vector x = lu.solve(rhs);
  return Eigen::Map<const Matrix>(x.data(), n, m);
}

double riccati_residual(const Matrix& J, const Matrix& gamma,
                        const Matrix& sigma) {
  const Matrix M = similarity(gamma, sigma);
  return (J * J - M.transpose() * J - J * M).norm();
}

RiccatiSolution riccati_stationary_ou(const Matrix& gamma, const Vector& mean,
                                      const Matrix& sigma, int max_iterations,
                                      double tolerance) {
  const Eigen::Index d = gamma.rows();
  if (gamma.cols() != d || sigma.rows() != d || sigma.cols() != d ||
      mean.size() != d)
    throw ModelError("riccati: inconsistent dimensions");
  Eigen::EigenSolver<Matrix> eig(gamma, false);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(eig.eigenvalues()[i].real() > 0.0)) {
      std::ostringstream os;
      os << "riccati: eigenvalue " << eig.eigenvalues()[i]
         << " of gamma has nonpositive real part";
      throw SpectrumError(os.str());
    }
  }
  sigma_from_c(sigma);  // rejects non-SPD sigma

  const Matrix M = similarity(gamma, sigma);
  const Matrix Mt = M.transpose();
  Matrix J = M + Mt;
  RiccatiSolution sol;
  sol.mean = mean;
  double res = (J * J - Mt * J - J * M).norm();
  int it = 0;
  for (; it < max_iterations; ++it) {
    if (res <= tolerance * std::max(1.0, J.squaredNorm())) break;
    const Matrix F = J * J - Mt * J - J * M;
    const Matrix H = solve_sylvester(J - Mt, J - M, -F);
    J += H;
    J = 0.5 * (J + J.transpose());
    res = (J * J - Mt * J - J * M).norm();
    if (!std::isfinite(res)) break;
  }
  if (!(res <= tolerance * std::max(1.0, J.squaredNorm())))
    throw ConvergenceError("riccati: Newton iteration did not converge", res);

  Eigen::SelfAdjointEigenSolver<Matrix> es(J, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues().minCoeff() > 0.0))
    throw ConvergenceError(
        "riccati: Newton iteration converged to a non-positive-definite root",
        res);
  sol.J = J;
  sol.Sigma = sigma * J.llt().solve(sigma);
  sol.Sigma = 0.5 * (sol.Sigma + sol.Sigma.transpose());
  sol.residual = res;
  sol.iterations = it;
  return sol;
}

}  // namespace perpetuity
