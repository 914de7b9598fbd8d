#pragma once

#include "perpetuity/estimators.hpp"
#include "perpetuity/model.hpp"

#include <Eigen/SparseCore>

#include <string>
#include <vector>

namespace perpetuity {

/// Truncated state space [z_lo, z_hi] x [x_lo, x_hi]. z nodes are uniform,
/// x nodes geometric.
struct PDEGrid {
  double z_lo = -1.0;
  double z_hi = 1.0;
  double x_lo = 0.1;
  double x_hi = 10.0;
  int nz = 41;
  int nx = 161;

  void check() const;
  double z(int i) const;
  double x(int j) const;
  /// Same box with spacing halved (2n - 1 nodes); old nodes stay nodes.
  PDEGrid refined() const;
};

/// Sparse system M g = rhs over the nodes, row index i * nx + j.
struct DiscreteOperator {
  PDEGrid grid;
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;
  Vector rhs;

  int index(int i, int j) const { return i * grid.nx + j; }
  bool interior(int i, int j) const {
    return i > 0 && i + 1 < grid.nz && j > 0 && j + 1 < grid.nx;
  }
};

struct PDESolution {
  PDEGrid grid;
  Matrix g;  // nz x nx
  double residual_norm = 0.0;
  int iterations = 0;  // refinement sweeps after the direct solve
  std::string lateral_condition = "zero second z-derivative (numerical device)";
  std::vector<std::string> notes;

  double at(int i, int j) const { return g(i, j); }
  /// Linear interpolation in z at a fixed x node.
  double interpolate_z(double z, int j) const;
};

/// Discretizes L = 1/2 A^{ij} d_ij + b^i d_i for a 1-D factor: central
/// second differences (cross term included), first-order upwinding of b,
/// Dirichlet rows at x_lo (g = 0) and x_hi (g = 1) and g_0 - 2 g_1 + g_2 = 0
/// rows on the z edges. Throws DegeneracyError if eta vanishes at a grid z.
DiscreteOperator assemble_operator(const ModelSpec& spec, const PDEGrid& grid);

/// Direct sparse solve of the assembled system. Throws ConvergenceError if
/// the residual stays above 1e-10 and ValidityError if g leaves [0, 1] by
/// more than 1e-6.
PDESolution solve_cdf(const ModelSpec& spec, const PDEGrid& grid);

/// Max interior-node residual |(M g - rhs)_n|.
double verify_solution(const DiscreteOperator& op, const PDESolution& sol);

/// Smallest |diagonal| over interior rows.
double min_interior_diagonal(const DiscreteOperator& op);

/// Grid with x between half the 1e-3 sample quantile and twice the
/// (1 - 1e-3) quantile of pilot X0 samples.
PDEGrid grid_from_pilot(std::vector<double> x_samples, double z_lo, double z_hi,
                        int nz, int nx);

struct RefinementStudy {
  std::vector<PDEGrid> grids;
  std::vector<double> changes;  // max |g_h - g_{h/2}| on common nodes
  bool passed = false;          // every change shrinks by a factor >= 2
};

RefinementStudy grid_refinement(const ModelSpec& spec, const PDEGrid& coarse,
                                int levels = 3);

struct ConditionalCdfCheck {
  double sup_gap = 0.0;
  int bins_used = 0;
  std::size_t min_bin_count = 0;
  double worst_z = 0.0;
  double worst_x = 0.0;
};

/// Compares g with the conditional empirical CDF of X given Z: samples are
/// split into `z_bins` equal-count bins of Z inside [z_lo, z_hi]; each bin
/// with at least `min_per_bin` samples is compared at its median z over the
/// interior x nodes.
ConditionalCdfCheck compare_conditional_cdf(const PDESolution& sol,
                                            const EmpiricalJointMeasure& measure,
                                            int z_bins = 20,
                                            std::size_t min_per_bin = 500);

}  // namespace perpetuity
