#include "perpetuity/pde.hpp"

#include <boost/math/distributions/inverse_gamma.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace perpetuity;

namespace {

DiscountSpec discount(double a, double f, double theta, double eta) {
  DiscountSpec d;
  d.rate = constant_scalar(a);
  d.cashflow = constant_scalar(f);
  if (theta != 0.0) d.theta = constant_vector(Vector::Constant(1, theta));
  d.eta = constant_vector(Vector::Constant(1, eta));
  d.noise_dim = 1;
  return d;
}

// OU factor, a = 1, theta = 0, eta = 0.5, f = 1: X0 ~ inverse gamma(9, 8).
ModelSpec reference_model() { return make_ou_model_1d(2.0, 1.0, discount(1.0, 1.0, 0.0, 0.5)); }

PDEGrid small_grid() {
  PDEGrid g;
  g.z_lo = -1.0;
  g.z_hi = 1.0;
  g.x_lo = 0.25;
  g.x_hi = 4.0;
  g.nz = 21;
  g.nx = 81;
  return g;
}

double coeff(const DiscreteOperator& op, int row, int col) { return op.matrix.coeff(row, col); }

}  // namespace

TEST(Grid, Validation) {
  PDEGrid g = small_grid();
  g.nz = 0;
  EXPECT_THROW(g.check(), ModelError);
  g = small_grid();
  g.x_lo = 0.0;
  EXPECT_THROW(g.check(), ModelError);
  EXPECT_THROW(assemble_operator(reference_model(), g), ModelError);
}

TEST(Grid, GeometricXAndRefinement) {
  const PDEGrid g = small_grid();
  EXPECT_DOUBLE_EQ(g.x(0), 0.25);
  EXPECT_DOUBLE_EQ(g.x(g.nx - 1), 4.0);
  EXPECT_NEAR(g.x(40), 1.0, 1e-14);
  const PDEGrid r = g.refined();
  EXPECT_EQ(r.nx, 161);
  for (int j = 0; j < g.nx; ++j) EXPECT_NEAR(r.x(2 * j), g.x(j), 1e-14);
  for (int i = 0; i < g.nz; ++i) EXPECT_NEAR(r.z(2 * i), g.z(i), 1e-14);
}

TEST(Assemble, ConstantCoefficientStencil) {
  // m = 0, c = 1, a = 1, theta = 0, eta = 1, f = 1:
  // L = 1/2 d_zz + 1/2 x^2 d_xx + (2x - 1) d_x.
  const ModelSpec spec = make_constant_model(StateDomain::full_space(1), Vector::Zero(1),
                                             Matrix::Identity(1, 1), discount(1.0, 1.0, 0.0, 1.0));
  const PDEGrid g = small_grid();
  const DiscreteOperator op = assemble_operator(spec, g);
  const int i = 10, j = 60;
  const double x = g.x(j), hm = x - g.x(j - 1), hp = g.x(j + 1) - x;
  const double hz = 0.1, b = 2 * x - 1;
  ASSERT_GT(b, 0.0);
  const int row = op.index(i, j);
  const double kx = x * x / (hp + hm);
  EXPECT_NEAR(coeff(op, row, op.index(i - 1, j)), 0.5 / (hz * hz), 1e-9);
  EXPECT_NEAR(coeff(op, row, op.index(i + 1, j)), 0.5 / (hz * hz), 1e-9);
  EXPECT_NEAR(coeff(op, row, op.index(i, j - 1)), kx / hm, 1e-9);
  EXPECT_NEAR(coeff(op, row, op.index(i, j + 1)), kx / hp + b / hp, 1e-9);
  EXPECT_NEAR(coeff(op, row, row), -1.0 / (hz * hz) - kx / hp - kx / hm - b / hp, 1e-9);
  EXPECT_EQ(op.matrix.row(row).nonZeros(), 5);
}

TEST(Assemble, UpwindsNegativeDrift) {
  const ModelSpec spec = make_constant_model(StateDomain::full_space(1), Vector::Zero(1),
                                             Matrix::Identity(1, 1), discount(1.0, 1.0, 0.0, 1.0));
  const PDEGrid g = small_grid();
  const DiscreteOperator op = assemble_operator(spec, g);
  const int i = 5, j = 3;
  const double x = g.x(j), hm = x - g.x(j - 1), hp = g.x(j + 1) - x, b = 2 * x - 1;
  ASSERT_LT(b, 0.0);
  const double kx = x * x / (hp + hm);
  EXPECT_NEAR(coeff(op, op.index(i, j), op.index(i, j - 1)), kx / hm - b / hm, 1e-9);
  EXPECT_NEAR(coeff(op, op.index(i, j), op.index(i, j + 1)), kx / hp, 1e-9);
}

TEST(Assemble, CrossTermOnlyWithTheta) {
  const PDEGrid g = small_grid();
  const DiscreteOperator flat = assemble_operator(reference_model(), g);
  const int row = flat.index(10, 40);
  EXPECT_EQ(coeff(flat, row, flat.index(11, 41)), 0.0);
  const DiscreteOperator tilted =
      assemble_operator(make_ou_model_1d(2.0, 1.0, discount(1.0, 1.0, 0.4, 0.5)), g);
  // 1/2 (A12 + A21) d_zx with A12 = x c theta over a (2 hz) x (hm + hp) box.
  const double x = g.x(40), hm = x - g.x(39), hp = g.x(41) - x;
  EXPECT_NEAR(coeff(tilted, row, tilted.index(11, 41)), x * 0.4 / (2 * 0.1 * (hm + hp)), 1e-9);
}

TEST(Assemble, BoundaryRows) {
  const PDEGrid g = small_grid();
  const DiscreteOperator op = assemble_operator(reference_model(), g);
  EXPECT_EQ(op.rhs[op.index(4, 0)], 0.0);
  EXPECT_EQ(op.rhs[op.index(4, g.nx - 1)], 1.0);
  const int row = op.index(0, 7);
  EXPECT_EQ(coeff(op, row, row), 1.0);
  EXPECT_EQ(coeff(op, row, op.index(1, 7)), -2.0);
  EXPECT_EQ(coeff(op, row, op.index(2, 7)), 1.0);
}

TEST(Assemble, VanishingEtaIsDegenerate) {
  DiscountSpec d;
  d.rate = constant_scalar(1.0);
  d.cashflow = constant_scalar(1.0);
  // eta(z) = z vanishes at the grid node z = 0.
  d.eta = [](const Vector& z) { return z; };
  d.noise_dim = 1;
  EXPECT_THROW(assemble_operator(make_ou_model_1d(2.0, 1.0, d), small_grid()), DegeneracyError);
  DiscountSpec none;
  none.rate = constant_scalar(1.0);
  none.cashflow = constant_scalar(1.0);
  EXPECT_THROW(solve_cdf(make_ou_model_1d(2.0, 1.0, none), small_grid()), DegeneracyError);
}

TEST(SolveCdf, MonotoneAndBounded) {
  const PDESolution sol = solve_cdf(reference_model(), small_grid());
  EXPECT_LE(sol.residual_norm, 1e-10);
  for (int i = 0; i < sol.grid.nz; ++i)
    for (int j = 0; j < sol.grid.nx; ++j) {
      EXPECT_GE(sol.g(i, j), -1e-6);
      EXPECT_LE(sol.g(i, j), 1.0 + 1e-6);
      if (j > 0) EXPECT_GE(sol.g(i, j) - sol.g(i, j - 1), -1e-8);
    }
  EXPECT_FALSE(sol.lateral_condition.empty());
}

TEST(SolveCdf, MatchesInverseGammaLaw) {
  PDEGrid g = small_grid();
  g.nx = 161;
  const PDESolution sol = solve_cdf(reference_model(), g);
  const boost::math::inverse_gamma_distribution<double> ig(9.0, 8.0);
  double gap = 0.0;
  for (int i = 0; i < g.nz; ++i)
    for (int j = 0; j < g.nx; ++j) gap = std::max(gap, std::abs(sol.g(i, j) - boost::math::cdf(ig, g.x(j))));
  EXPECT_LE(gap, 0.02);
}

TEST(Verify, ExactSolutionHasTinyResidual) {
  const ModelSpec spec = reference_model();
  const DiscreteOperator op = assemble_operator(spec, small_grid());
  const PDESolution sol = solve_cdf(spec, small_grid());
  EXPECT_LE(verify_solution(op, sol), 1e-10);
}

TEST(Verify, PerturbationIsDetected) {
  const ModelSpec spec = reference_model();
  const DiscreteOperator op = assemble_operator(spec, small_grid());
  PDESolution sol = solve_cdf(spec, small_grid());
  sol.g(10, 40) += 0.1;
  EXPECT_GE(verify_solution(op, sol), 0.1 * min_interior_diagonal(op));
}

TEST(Verify, ConstantFunctionLeavesDriftResidual) {
  // Constant g kills every derivative, so interior rows are exactly zero; the
  // Dirichlet row at x_lo is what a constant 1 violates.
  const ModelSpec spec = reference_model();
  const DiscreteOperator op = assemble_operator(spec, small_grid());
  PDESolution sol = solve_cdf(spec, small_grid());
  sol.g.setConstant(1.0);
  EXPECT_LE(verify_solution(op, sol), 1e-9);
  const Vector flat = Vector::Ones(op.matrix.rows());
  EXPECT_GT((op.matrix * flat - op.rhs).cwiseAbs().maxCoeff(), 0.5);
}

TEST(Pilot, QuantileBounds) {
  std::vector<double> x(10'000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 1.0 + static_cast<double>(i) / 1000.0;
  const PDEGrid g = grid_from_pilot(x, -1.0, 1.0, 21, 41);
  // Order statistics floor(p (n - 1)): samples 9 and 9989.
  EXPECT_NEAR(g.x_lo, 0.5 * 1.009, 1e-12);
  EXPECT_NEAR(g.x_hi, 2.0 * 10.989, 1e-12);
  EXPECT_THROW(grid_from_pilot({1.0, 2.0}, -1.0, 1.0, 21, 41), ModelError);
}

TEST(Refinement, ChangesShrink) {
  PDEGrid g = small_grid();
  g.nz = 17;
  g.nx = 33;
  const RefinementStudy st = grid_refinement(reference_model(), g, 3);
  ASSERT_EQ(st.changes.size(), 2u);
  EXPECT_LT(st.changes[1], st.changes[0]);
  // First-order convergence: the ratio sits near 2.
  EXPECT_NEAR(st.changes[0] / st.changes[1], 2.0, 0.3);
}

TEST(ConditionalCdf, ExactSamplesAgree) {
  // Z independent of X ~ inverse gamma(9, 8), so every z-bin sees the same law.
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nz(0.0, 0.5);
  std::gamma_distribution<double> gam(9.0, 1.0 / 8.0);
  const std::size_t n = 40'000;
  Matrix f(1, static_cast<Eigen::Index>(n));
  std::vector<double> x(n);
  for (std::size_t s = 0; s < n; ++s) {
    f(0, static_cast<Eigen::Index>(s)) = nz(rng);
    x[s] = 1.0 / gam(rng);
  }
  const EmpiricalJointMeasure m(MeasureKind::IID, f, x, static_cast<double>(n));
  PDEGrid g = small_grid();
  g.nx = 161;
  const PDESolution sol = solve_cdf(reference_model(), g);
  const ConditionalCdfCheck c = compare_conditional_cdf(sol, m, 20, 500);
  EXPECT_EQ(c.bins_used, 20);
  EXPECT_GE(c.min_bin_count, 500u);
  EXPECT_LE(c.sup_gap, 0.05);
}
