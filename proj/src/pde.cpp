#include "perpetuity/pde.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace perpetuity {

void PDEGrid::check() const {
  if (!(z_lo < z_hi)) throw ModelError("PDE grid: need z_lo < z_hi");
  if (!(x_lo > 0.0 && x_lo < x_hi)) throw ModelError("PDE grid: need 0 < x_lo < x_hi");
  if (nz < 16 || nx < 16) throw ModelError("PDE grid: at least 16 nodes per axis");
}

double PDEGrid::z(int i) const {
  return z_lo + (z_hi - z_lo) * static_cast<double>(i) / static_cast<double>(nz - 1);
}

double PDEGrid::x(int j) const {
  if (j == nx - 1) return x_hi;
  return x_lo * std::pow(x_hi / x_lo, static_cast<double>(j) / static_cast<double>(nx - 1));
}

PDEGrid PDEGrid::refined() const {
  PDEGrid g = *this;
  g.nz = 2 * nz - 1;
  g.nx = 2 * nx - 1;
  return g;
}

double PDESolution::interpolate_z(double z, int j) const {
  const double s = (z - grid.z_lo) / (grid.z_hi - grid.z_lo) * (grid.nz - 1);
  const int i = std::clamp(static_cast<int>(std::floor(s)), 0, grid.nz - 2);
  const double w = std::clamp(s - i, 0.0, 1.0);
  return (1.0 - w) * g(i, j) + w * g(i + 1, j);
}

DiscreteOperator assemble_operator(const ModelSpec& spec, const PDEGrid& grid) {
  grid.check();
  if (spec.dim() != 1) throw ModelError("PDE validator supports one-dimensional factors only");
  const int nz = grid.nz, nx = grid.nx;
  std::vector<double> xs(static_cast<std::size_t>(nx));
  for (int j = 0; j < nx; ++j) xs[static_cast<std::size_t>(j)] = grid.x(j);
  const double hz = (grid.z_hi - grid.z_lo) / (nz - 1);

  DiscreteOperator op;
  op.grid = grid;
  op.rhs = Vector::Zero(nz * nx);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(nz) * nx * 9);

  for (int i = 0; i < nz; ++i) {
    Vector z(1);
    z[0] = grid.z(i);
    if (!spec.domain.contains(z)) {
      std::ostringstream os;
      os << "PDE grid node z = " << z[0] << " lies outside the state domain";
      throw ModelError(os.str());
    }
    const double eta2 = spec.has_eta() ? spec.eta_at(z).squaredNorm() : 0.0;
    if (!(eta2 > 0.0)) {
      std::ostringstream os;
      os << "eta vanishes at z = " << z[0] << ": the law of X0 may have an atom";
      throw DegeneracyError(os.str());
    }
    const double c = spec.c(z)(0, 0);
    const double m = spec.m(z)[0];
    const double th = spec.theta_at(z)[0];
    const double q = th * c * th + eta2;
    const double a = spec.a(z);
    const double f = spec.f(z);

    for (int j = 0; j < nx; ++j) {
      const int row = op.index(i, j);
      if (j == 0 || j == nx - 1) {
        trip.emplace_back(row, row, 1.0);
        op.rhs[row] = j == 0 ? 0.0 : 1.0;
        continue;
      }
      if (i == 0 || i == nz - 1) {
        const int s = i == 0 ? 1 : -1;
        trip.emplace_back(row, row, 1.0);
        trip.emplace_back(row, op.index(i + s, j), -2.0);
        trip.emplace_back(row, op.index(i + 2 * s, j), 1.0);
        continue;
      }
      const double x = xs[static_cast<std::size_t>(j)];
      const double hm = x - xs[static_cast<std::size_t>(j - 1)];
      const double hp = xs[static_cast<std::size_t>(j + 1)] - x;
      const double a11 = c, a12 = x * c * th, a22 = x * x * q;
      const double b1 = m, b2 = -f + x * (a + q);

      double diag = 0.0;
      auto add = [&](int ii, int jj, double v) {
        if (ii == i && jj == j) diag += v;
        else if (v != 0.0) trip.emplace_back(row, op.index(ii, jj), v);
      };
      const double kz = 0.5 * a11 / (hz * hz);
      add(i - 1, j, kz);
      add(i + 1, j, kz);
      add(i, j, -2.0 * kz);
      const double kx = a22 / (hp + hm);
      add(i, j + 1, kx / hp);
      add(i, j - 1, kx / hm);
      add(i, j, -kx / hp - kx / hm);
      if (a12 != 0.0) {
        const double kc = a12 / (2.0 * hz * (hp + hm));
        add(i + 1, j + 1, kc);
        add(i - 1, j - 1, kc);
        add(i + 1, j - 1, -kc);
        add(i - 1, j + 1, -kc);
      }
      if (b1 > 0.0) {
        add(i + 1, j, b1 / hz);
        add(i, j, -b1 / hz);
      } else {
        add(i, j, b1 / hz);
        add(i - 1, j, -b1 / hz);
      }
      if (b2 > 0.0) {
        add(i, j + 1, b2 / hp);
        add(i, j, -b2 / hp);
      } else {
        add(i, j, b2 / hm);
        add(i, j - 1, -b2 / hm);
      }
      trip.emplace_back(row, row, diag);
    }
  }
  op.matrix.resize(nz * nx, nz * nx);
  op.matrix.setFromTriplets(trip.begin(), trip.end());
  op.matrix.makeCompressed();
  return op;
}

namespace {

PDESolution solve_operator(const DiscreteOperator& op) {
  const int nz = op.grid.nz, nx = op.grid.nx;
  Eigen::SparseMatrix<double> M = op.matrix;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(M);
  lu.factorize(M);
  if (lu.info() != Eigen::Success)
    throw ConvergenceError("PDE solve: sparse LU factorization failed", 0.0);
  Vector g = lu.solve(op.rhs);
  Vector r = op.rhs - op.matrix * g;
  double res = r.lpNorm<Eigen::Infinity>();
  std::vector<double> history{res};
  int sweeps = 0;
  while (res > 1e-12 && sweeps < 3) {
    g += lu.solve(r);
    r = op.rhs - op.matrix * g;
    res = r.lpNorm<Eigen::Infinity>();
    history.push_back(res);
    ++sweeps;
  }
  if (!std::isfinite(res) || res > 1e-10) {
    std::ostringstream os;
    os << "PDE solve did not converge; residual history:";
    for (double h : history) os << ' ' << h;
    throw ConvergenceError(os.str(), res);
  }
  PDESolution sol;
  sol.grid = op.grid;
  sol.g.resize(nz, nx);
  for (int i = 0; i < nz; ++i)
    for (int j = 0; j < nx; ++j) sol.g(i, j) = g[op.index(i, j)];
  sol.residual_norm = res;
  sol.iterations = sweeps;

  const double lo = sol.g.minCoeff(), hi = sol.g.maxCoeff();
  if (lo < -1e-6 || hi > 1.0 + 1e-6) {
    std::ostringstream os;
    os << "PDE solution leaves [0, 1] (range " << lo << " .. " << hi
       << "); widen the x truncation";
    throw ValidityError(os.str());
  }
  double worst = 0.0;
  for (int i = 0; i < nz; ++i)
    for (int j = 1; j < nx; ++j) worst = std::min(worst, sol.g(i, j) - sol.g(i, j - 1));
  if (worst < -1e-8) {
    std::ostringstream os;
    os << "g decreases in x by up to " << -worst;
    sol.notes.push_back(os.str());
  }
  return sol;
}

}  // namespace

PDESolution solve_cdf(const ModelSpec& spec, const PDEGrid& grid) {
  return solve_operator(assemble_operator(spec, grid));
}

double verify_solution(const DiscreteOperator& op, const PDESolution& sol) {
  const int nz = op.grid.nz, nx = op.grid.nx;
  if (sol.g.rows() != nz || sol.g.cols() != nx)
    throw ModelError("verify_solution: solution and operator shapes differ");
  Vector g(nz * nx);
  for (int i = 0; i < nz; ++i)
    for (int j = 0; j < nx; ++j) g[op.index(i, j)] = sol.g(i, j);
  const Vector r = op.matrix * g - op.rhs;
  double worst = 0.0;
  for (int i = 1; i + 1 < nz; ++i)
    for (int j = 1; j + 1 < nx; ++j) worst = std::max(worst, std::abs(r[op.index(i, j)]));
  return worst;
}

double min_interior_diagonal(const DiscreteOperator& op) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 1; i + 1 < op.grid.nz; ++i)
    for (int j = 1; j + 1 < op.grid.nx; ++j) {
      const int n = op.index(i, j);
      best = std::min(best, std::abs(op.matrix.coeff(n, n)));
    }
  return best;
}

PDEGrid grid_from_pilot(std::vector<double> x_samples, double z_lo, double z_hi,
                        int nz, int nx) {
  std::erase_if(x_samples, [](double v) { return !(v > 0.0) || !std::isfinite(v); });
  if (x_samples.size() < 1000)
    throw ModelError("grid_from_pilot: need at least 1000 positive pilot samples");
  std::sort(x_samples.begin(), x_samples.end());
  auto q = [&](double u) {
    return x_samples[static_cast<std::size_t>(u * static_cast<double>(x_samples.size() - 1))];
  };
  PDEGrid g;
  g.z_lo = z_lo;
  g.z_hi = z_hi;
  g.x_lo = 0.5 * q(1e-3);
  g.x_hi = 2.0 * q(1.0 - 1e-3);
  g.nz = nz;
  g.nx = nx;
  g.check();
  return g;
}

RefinementStudy grid_refinement(const ModelSpec& spec, const PDEGrid& coarse, int levels) {
  if (levels < 3) throw ModelError("grid_refinement: need at least three levels");
  RefinementStudy st;
  std::vector<PDESolution> sols;
  PDEGrid g = coarse;
  for (int k = 0; k < levels; ++k) {
    st.grids.push_back(g);
    sols.push_back(solve_cdf(spec, g));
    g = g.refined();
  }
  for (int k = 0; k + 1 < levels; ++k) {
    double change = 0.0;
    const auto& a = sols[static_cast<std::size_t>(k)];
    const auto& b = sols[static_cast<std::size_t>(k + 1)];
    for (int i = 0; i < a.grid.nz; ++i)
      for (int j = 0; j < a.grid.nx; ++j)
        change = std::max(change, std::abs(a.g(i, j) - b.g(2 * i, 2 * j)));
    st.changes.push_back(change);
  }
  st.passed = true;
  for (std::size_t k = 0; k + 1 < st.changes.size(); ++k)
    if (!(st.changes[k] >= 2.0 * st.changes[k + 1])) st.passed = false;
  return st;
}

ConditionalCdfCheck compare_conditional_cdf(const PDESolution& sol,
                                            const EmpiricalJointMeasure& measure,
                                            int z_bins, std::size_t min_per_bin) {
  if (measure.dim() != 1) throw ModelError("compare_conditional_cdf: 1-D factor expected");
  if (z_bins < 1) throw ModelError("compare_conditional_cdf: need at least one bin");
  std::vector<std::pair<double, double>> pts;
  const auto& xs = measure.perpetuity();
  for (std::size_t s = 0; s < measure.size(); ++s) {
    const double z = measure.factors()(0, static_cast<Eigen::Index>(s));
    if (z >= sol.grid.z_lo && z <= sol.grid.z_hi) pts.emplace_back(z, xs[s]);
  }
  std::sort(pts.begin(), pts.end());
  ConditionalCdfCheck out;
  out.min_bin_count = std::numeric_limits<std::size_t>::max();
  const std::size_t n = pts.size();
  for (int b = 0; b < z_bins; ++b) {
    const std::size_t lo = n * static_cast<std::size_t>(b) / static_cast<std::size_t>(z_bins);
    const std::size_t hi = n * static_cast<std::size_t>(b + 1) / static_cast<std::size_t>(z_bins);
    const std::size_t count = hi - lo;
    if (count < min_per_bin || count == 0) continue;
    ++out.bins_used;
    out.min_bin_count = std::min(out.min_bin_count, count);
    const double zmed = pts[lo + count / 2].first;
    std::vector<double> x;
    x.reserve(count);
    for (std::size_t s = lo; s < hi; ++s) x.push_back(pts[s].second);
    std::sort(x.begin(), x.end());
    for (int j = 1; j + 1 < sol.grid.nx; ++j) {
      const double xj = sol.grid.x(j);
      const double F = static_cast<double>(std::upper_bound(x.begin(), x.end(), xj) - x.begin()) /
                       static_cast<double>(count);
      const double gap = std::abs(F - sol.interpolate_z(zmed, j));
      if (gap > out.sup_gap) {
        out.sup_gap = gap;
        out.worst_z = zmed;
        out.worst_x = xj;
      }
    }
  }
  if (out.bins_used == 0) {
    out.min_bin_count = 0;
    throw ModelError("compare_conditional_cdf: no z-bin has enough samples");
  }
  return out;
}

}  // namespace perpetuity
