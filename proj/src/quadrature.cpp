#include "perpetuity/quadrature.hpp"

#include "perpetuity/types.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace perpetuity {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double signed_gl(const std::function<double(double)>& f, double a, double b) {
  if (a == b) return 0.0;
  if (a < b) return gauss_legendre(f, a, b);
  return -gauss_legendre(f, b, a);
}


struct GaussRule {
  std::vector<double> x;  // on [0, 1]
  std::vector<double> w;
};

GaussRule make_rule(int n) {
  Matrix jacobi = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
  GaussRule r;
  for (int i = 0; i < n; ++i) {
    r.x.push_back(0.5 * (es.eigenvalues()[i] + 1.0));
    const double v = es.eigenvectors()(0, i);
    r.w.push_back(v * v);  // sums to 1
  }
  return r;
}

const GaussRule& outer_rule() {
  static const GaussRule r = make_rule(20);
  return r;
}

const GaussRule& inner_rule() {
  static const GaussRule r = make_rule(12);
  return r;
}

struct CellResult {
  double log_mass = kNegInf;
  double max_log = kNegInf;
};

// log int_p^q exp(g(z, A(z))) dz (p < q or p > q) with A(p) = a_p, using a
// 20-point rule whose antiderivative values come from a 12-point rule.
CellResult cell_rule(const std::function<double(double)>& rate,
                     const std::function<double(double, double)>& g, double p,
                     double q, double a_p) {
  const GaussRule& o = outer_rule();
  const GaussRule& in = inner_rule();
  const double len = q - p;
  double vals[20];
  CellResult r;
  for (std::size_t i = 0; i < o.x.size(); ++i) {
    const double z = p + len * o.x[i];
    double a = a_p;
    const double sub = z - p;
    for (std::size_t k = 0; k < in.x.size(); ++k) a += sub * in.w[k] * rate(p + sub * in.x[k]);
    vals[i] = g(z, a);
    if (std::isnan(vals[i])) vals[i] = kNegInf;
    r.max_log = std::max(r.max_log, vals[i]);
  }
  if (r.max_log == kNegInf) return r;
  if (!std::isfinite(r.max_log)) {
    r.log_mass = r.max_log;
    return r;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < o.x.size(); ++i) acc += o.w[i] * std::exp(vals[i] - r.max_log);
  r.log_mass = acc > 0.0 ? std::log(acc * std::abs(len)) + r.max_log : kNegInf;
  return r;
}

// Adaptive bisection of cell_rule until halves agree to 1e-11 (relative);
// cells far below `floor` are accepted as they are.
CellResult integrate_cell(const std::function<double(double)>& rate,
                          const std::function<double(double, double)>& g, double p,
                          double q, double a_p, double floor, int depth) {
  const CellResult whole = cell_rule(rate, g, p, q, a_p);
  if (whole.max_log == kNegInf || !std::isfinite(whole.max_log)) return whole;
  const double mid = 0.5 * (p + q);
  const double a_mid = a_p + signed_gl(rate, p, mid);
  const CellResult left = cell_rule(rate, g, p, mid, a_p);
  const CellResult right = cell_rule(rate, g, mid, q, a_mid);
  CellResult both;
  both.log_mass = log_add(left.log_mass, right.log_mass);
  both.max_log = std::max(left.max_log, right.max_log);
  if (!std::isfinite(both.max_log)) return both;
  if (depth >= 14 || both.max_log < floor || std::abs(both.log_mass - whole.log_mass) < 1e-11)
    return both;
  const CellResult l = integrate_cell(rate, g, p, mid, a_p, floor, depth + 1);
  const CellResult rr = integrate_cell(rate, g, mid, q, a_mid, floor, depth + 1);
  return {log_add(l.log_mass, rr.log_mass), std::max(l.max_log, rr.max_log)};
}
}  // namespace

double gauss_legendre(const std::function<double(double)>& f, double a,
                      double b) {
  return boost::math::quadrature::gauss<double, 20>::integrate(
      [&f](double x) { return f(x); }, a, b);
}

double adaptive_integral(const std::function<double(double)>& f, double a,
                         double b, double rel_tol) {
  return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      [&f](double x) { return f(x); }, a, b, 15, rel_tol);
}

HermiteRule gauss_hermite(int n) {
  if (n < 1) throw NumericalError("gauss_hermite: n must be >= 1");
  Matrix jacobi = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
    jacobi(k - 1, k) = jacobi(k, k - 1);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
  HermiteRule rule;
  for (int i = 0; i < n; ++i) {
    rule.nodes.push_back(es.eigenvalues()[i]);
    const double v = es.eigenvectors()(0, i);
    rule.weights.push_back(v * v);
  }
  return rule;
}

std::string to_string(IntegralStatus s) {
  switch (s) {
    case IntegralStatus::Converged:
      return "converged";
    case IntegralStatus::Diverged:
      return "diverged";
    case IntegralStatus::Inconclusive:
      return "inconclusive";
  }
  return "unknown";
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

RayResult integrate_ray(
    double z0, double boundary, const std::function<double(double)>& rate,
    const std::function<double(double, double)>& log_integrand,
    const RayOptions& options) {
  RayResult result;
  const double dir = boundary > z0 ? 1.0 : -1.0;
  const bool finite = std::isfinite(boundary);
  const double dist = finite ? std::abs(boundary - z0) : 0.0;

  // Length scale: first doubling step over which log-integrand moves by 1.
  const double g0 = log_integrand(z0, 0.0);
  double scale = 0.0;
  {
    double h = 1e-6 * (1.0 + std::abs(z0));
    double z_prev = z0, a_prev = 0.0;
    for (int j = 0; j < 90; ++j) {
      if (finite && h >= 0.5 * dist) {
        scale = 0.5 * dist;
        break;
      }
      const double z = z0 + dir * h;
      const double a = a_prev + signed_gl(rate, z_prev, z);
      const double gz = log_integrand(z, a);
      if (!std::isfinite(gz) || std::abs(gz - g0) >= 1.0) {
        scale = h;
        break;
      }
      z_prev = z;
      a_prev = a;
      h *= 2.0;
    }
    if (scale == 0.0) {
      result.status = IntegralStatus::Diverged;
      result.log_value = std::numeric_limits<double>::infinity();
      result.diagnostic = "integrand does not decay along the ray";
      return result;
    }
  }

  auto band_edge = [&](int k) -> double {
    // Doubling from z0 until half the distance to a finite boundary, then
    // halving towards it.
    if (k == 0) return z0;
    if (!finite) return z0 + dir * scale * std::ldexp(1.0, k - 1);
    const double grow = scale * std::ldexp(1.0, k - 1);
    if (grow < 0.5 * dist) return z0 + dir * grow;
    int doublings = 0;
    while (scale * std::ldexp(1.0, doublings) < 0.5 * dist) ++doublings;
    const int halvings = k - doublings;  // >= 1
    return boundary - dir * dist * std::ldexp(1.0, -halvings);
  };

  double total = kNegInf;
  double a_start = 0.0;
  int growth = 0, small = 0;
  const double log_growth = std::log(options.growth_factor);
  const double log_tol = std::log(options.rel_tol);

  for (int level = 0; level < options.max_levels; ++level) {
    const double u = band_edge(level);
    const double v = band_edge(level + 1);
    if (std::abs(v - u) <= 4.0 * std::numeric_limits<double>::epsilon() *
                               std::max(1.0, std::abs(v)) ||
        std::abs(v) > 1e150) {
      result.status = small > 0 ? IntegralStatus::Converged
                                : IntegralStatus::Inconclusive;
      result.diagnostic = "reached numerical resolution of the ray";
      break;
    }

    RayBand band;
    band.start = u;
    band.end = v;
    band.log_mass = kNegInf;
    band.max_log_integrand = kNegInf;
    double a_cell = a_start;
    const int m = options.subcells;
    bool overflow = false;
    const double floor = total == kNegInf ? kNegInf : total + log_tol - 10.0;
    for (int s = 0; s < m && !overflow; ++s) {
      const double p = u + (v - u) * s / m;
      const double q = (s + 1 == m) ? v : u + (v - u) * (s + 1) / m;
      const CellResult cell = integrate_cell(rate, log_integrand, p, q, a_cell, floor, 0);
      if (!std::isfinite(cell.log_mass) && cell.log_mass > 0) overflow = true;
      band.log_mass = log_add(band.log_mass, cell.log_mass);
      band.max_log_integrand = std::max(band.max_log_integrand, cell.max_log);
      a_cell += signed_gl(rate, p, q);
    }
    band.antiderivative_end = a_cell;
    result.bands.push_back(band);
    if (overflow) {
      result.status = IntegralStatus::Diverged;
      result.log_value = std::numeric_limits<double>::infinity();
      result.diagnostic = "integrand overflow";
      return result;
    }

    const double updated = log_add(total, band.log_mass);
    if (total != kNegInf) {
      growth = (updated - total > log_growth) ? growth + 1 : 0;
      if (growth >= options.growth_run) {
        result.status = IntegralStatus::Diverged;
        result.log_value = updated;
        result.diagnostic = "partial integrals kept growing by more than " +
                            std::to_string(options.growth_factor);
        return result;
      }
    }
    const bool negligible =
        band.log_mass == kNegInf ||
        (updated != kNegInf && band.log_mass - updated < log_tol);
    small = negligible && total != kNegInf ? small + 1 : 0;
    total = updated;
    a_start = a_cell;
    if (small >= 2) {
      result.status = IntegralStatus::Converged;
      break;
    }
    if (level + 1 == options.max_levels) {
      result.status = IntegralStatus::Inconclusive;
      result.diagnostic = "maximum number of truncation levels reached";
    }
  }
  result.log_value = total;
  return result;
}

}  // namespace perpetuity
