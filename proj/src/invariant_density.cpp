#include "perpetuity/invariant_density.hpp"

#include "perpetuity/quadrature.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <limits>
#include <sstream>

namespace perpetuity {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kTableNodes = 8193;
constexpr int kQuantileLevels = 10001;
constexpr double kCoreLogDrop = 60.0;
constexpr double kBulkTail = 1e-8;

Vector scalar_state(double z) { return Vector::Constant(1, z); }

double gl7(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss<double, 7>::integrate(
      [&f](double x) { return f(x); }, a, b);
}

void require_interior(const ModelSpec& spec, const Vector& z,
                      const std::string& what) {
  if (!spec.domain.contains(z)) {
    std::ostringstream os;
    os << what << ": point (" << z.transpose() << ") is not interior to the domain";
    throw ModelError(os.str());
  }
}

// Fills cdf (normalized to end at 1) and quantile tables from log_p nodes
// and a function giving log p anywhere inside the table range.
void finish_table(DensityTable1D& t, const std::function<double(double)>& lp,
                  double log_K) {
  const std::size_t n = t.nodes.size();
  t.cdf.assign(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double mass = gl7(
        [&](double z) { return std::exp(lp(z) - log_K); }, t.nodes[i],
        t.nodes[i + 1]);
    t.cdf[i + 1] = t.cdf[i] + mass;
  }
  const double total = t.cdf.back();
  if (!(total > 0.0) || !std::isfinite(total))
    throw NumericalError("density table carries no mass");
  for (double& v : t.cdf) v /= total;
  t.quantiles.resize(kQuantileLevels);
  for (int j = 0; j < kQuantileLevels; ++j)
    t.quantiles[j] = t.quantile_at(static_cast<double>(j) / (kQuantileLevels - 1));
}

struct RayPair {
  RayResult left, right;
};

// 1-D density exp(A(z) + offset(z)) with A' = rate, A(z0) = 0.
InvariantDensity build_1d(const ModelSpec& spec, double z0,
                          std::function<double(double)> rate,
                          std::function<double(double)> offset,
                          DensityProvenance provenance) {
  auto g = [&](double z, double A) { return A + offset(z); };
  RayPair rays{integrate_ray(z0, spec.domain.lower[0], rate, g),
               integrate_ray(z0, spec.domain.upper[0], rate, g)};
  for (const RayResult* r : {&rays.left, &rays.right}) {
    if (r->status == IntegralStatus::Diverged)
      throw NotPositiveRecurrentError(
          "invariant density is not normalizable (" + r->diagnostic + ")");
    if (r->status == IntegralStatus::Inconclusive)
      throw NumericalError("normalization integral inconclusive: " +
                           r->diagnostic);
  }
  const double log_K = log_add(rays.left.log_value, rays.right.log_value);

  double peak = g(z0, 0.0);
  for (const RayResult* r : {&rays.left, &rays.right})
    for (const auto& b : r->bands) peak = std::max(peak, b.max_log_integrand);
  double lo = z0, hi = z0;
  for (const auto& b : rays.right.bands)
    if (b.max_log_integrand >= peak - kCoreLogDrop) hi = std::max(hi, b.end);
  for (const auto& b : rays.left.bands)
    if (b.max_log_integrand >= peak - kCoreLogDrop) lo = std::min(lo, b.end);
  if (!(lo < hi)) throw NumericalError("density core range is empty");

  auto table = std::make_shared<DensityTable1D>();
  const double dz = (hi - lo) / (kTableNodes - 1);
  table->nodes.resize(kTableNodes);
  for (int i = 0; i < kTableNodes; ++i) table->nodes[i] = lo + dz * i;
  table->nodes.back() = hi;
  std::vector<double> A(kTableNodes);
  const int k0 = std::clamp(static_cast<int>(std::lround((z0 - lo) / dz)), 0,
                            kTableNodes - 1);
  A[k0] = z0 == table->nodes[k0]
              ? 0.0
              : (z0 < table->nodes[k0]
                     ? adaptive_integral(rate, z0, table->nodes[k0], 1e-14)
                     : -adaptive_integral(rate, table->nodes[k0], z0, 1e-14));
  for (int i = k0 + 1; i < kTableNodes; ++i)
    A[i] = A[i - 1] + gauss_legendre(rate, table->nodes[i - 1], table->nodes[i]);
  for (int i = k0 - 1; i >= 0; --i)
    A[i] = A[i + 1] - gauss_legendre(rate, table->nodes[i], table->nodes[i + 1]);
  table->log_p.resize(kTableNodes);
  for (int i = 0; i < kTableNodes; ++i)
    table->log_p[i] = A[i] + offset(table->nodes[i]);

  auto nodes = std::make_shared<std::vector<double>>(table->nodes);
  auto anti = std::make_shared<std::vector<double>>(std::move(A));
  auto log_p_scalar = [nodes, anti, rate, offset, lo, hi, dz](double z) {
    double Az;
    if (z >= lo && z <= hi) {
      const int i = std::min(static_cast<int>((z - lo) / dz),
                             static_cast<int>(nodes->size()) - 2);
      const double zi = (*nodes)[i];
      Az = (*anti)[i] + (z > zi ? gauss_legendre(rate, zi, z)
                                : -gauss_legendre(rate, z, zi));
    } else if (z > hi) {
      Az = anti->back() + adaptive_integral(rate, hi, z, 1e-14);
    } else {
      Az = anti->front() - adaptive_integral(rate, z, lo, 1e-14);
    }
    return Az + offset(z);
  };
  finish_table(*table, log_p_scalar, log_K);

  InvariantDensity out;
  out.dim = 1;
  out.provenance = provenance;
  out.log_K = log_K;
  out.log_p = [log_p_scalar](const Vector& z) { return log_p_scalar(z[0]); };
  out.bulk_lower = {table->quantile_at(kBulkTail)};
  out.bulk_upper = {table->quantile_at(1.0 - kBulkTail)};
  out.table = std::move(table);
  if (spec.ou) {
    const double gam = spec.ou->gamma(0, 0);
    const double s = spec.ou->sigma(0, 0);
    out.gaussian = GaussianLaw{spec.ou->mean, Matrix::Constant(1, 1, s * s / (2.0 * gam))};
  }
  return out;
}

Vector reversing_field(const ModelSpec& spec, const Vector& z) {
  const Vector rhs = 2.0 * spec.m(z) - spec.div_c(z);
  if (spec.dim() == 1) return rhs / spec.c(z)(0, 0);
  return spec.c(z).ldlt().solve(rhs);
}

double boundary_distance(const StateDomain& dom, const Vector& z) {
  double dist = kInf;
  for (int i = 0; i < dom.dim; ++i) {
    dist = std::min(dist, z[i] - dom.lower[i]);
    dist = std::min(dist, dom.upper[i] - z[i]);
  }
  return dist;
}

// Box for a 2-D potential: walk each axis from the base point until H has
// dropped by `drop`, then widen.
std::pair<Vector, Vector> potential_box(const StateDomain& dom,
                                        const ScalarField& H, const Vector& b,
                                        double drop, double margin) {
  const int d = dom.dim;
  Vector lo(d), hi(d);
  const double h0 = H(b);
  for (int i = 0; i < d; ++i) {
    for (int dir : {-1, 1}) {
      const double bound = dir < 0 ? dom.lower[i] : dom.upper[i];
      double step = 0.1 * (1.0 + std::abs(b[i]));
      double reach = 0.0;
      bool hit_bound = false;
      for (int k = 0; k < 60; ++k) {
        Vector z = b;
        z[i] = b[i] + dir * step;
        if (std::isfinite(bound) && dir * (bound - z[i]) <= 0.0) {
          hit_bound = true;
          break;
        }
        reach = step;
        if (H(z) < h0 - drop) break;
        step *= 2.0;
      }
      double edge = b[i] + dir * margin * reach;
      if (hit_bound || (std::isfinite(bound) && dir * (bound - edge) <= 0.0))
        edge = bound - dir * 1e-10 * (1.0 + std::abs(bound));
      (dir < 0 ? lo : hi)[i] = edge;
    }
  }
  return {lo, hi};
}

}  // namespace

std::string to_string(DensityProvenance p) {
  switch (p) {
    case DensityProvenance::ClosedForm1D:
      return "ClosedForm1D";
    case DensityProvenance::ReversingPotential:
      return "ReversingPotential";
    case DensityProvenance::OURiccati:
      return "OURiccati";
    case DensityProvenance::UserSupplied:
      return "UserSupplied";
  }
  return "UserSupplied";
}

DensityProvenance provenance_from_string(const std::string& s) {
  for (auto p : {DensityProvenance::ClosedForm1D,
                 DensityProvenance::ReversingPotential,
                 DensityProvenance::OURiccati, DensityProvenance::UserSupplied})
    if (to_string(p) == s) return p;
  throw ModelError("unknown density provenance '" + s + "'");
}

std::string to_string(Recurrence r) {
  switch (r) {
    case Recurrence::PositiveRecurrent:
      return "PositiveRecurrent";
    case Recurrence::NullRecurrentOrTransient:
      return "NullRecurrentOrTransient";
    case Recurrence::Inconclusive:
      return "Inconclusive";
  }
  return "Inconclusive";
}

double DensityTable1D::cdf_at(double z) const {
  if (z <= nodes.front()) return 0.0;
  if (z >= nodes.back()) return 1.0;
  const auto it = std::upper_bound(nodes.begin(), nodes.end(), z);
  const std::size_t i = static_cast<std::size_t>(it - nodes.begin()) - 1;
  const double w = (z - nodes[i]) / (nodes[i + 1] - nodes[i]);
  return cdf[i] + w * (cdf[i + 1] - cdf[i]);
}

double DensityTable1D::quantile_at(double u) const {
  if (u <= 0.0) return nodes.front();
  if (u >= 1.0) return nodes.back();
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
  const std::size_t i = static_cast<std::size_t>(it - cdf.begin());
  if (i == 0) return nodes.front();
  const double span = cdf[i] - cdf[i - 1];
  const double w = span > 0.0 ? (u - cdf[i - 1]) / span : 0.0;
  return nodes[i - 1] + w * (nodes[i] - nodes[i - 1]);
}

double InvariantDensity::cdf(double z, int coord) const {
  if (gaussian) {
    const double sd = std::sqrt(gaussian->cov(coord, coord));
    return 0.5 * std::erfc(-(z - gaussian->mean[coord]) / (sd * std::sqrt(2.0)));
  }
  if (table && dim == 1) return table->cdf_at(z);
  throw UnsupportedDensityError("marginal CDF unavailable for this density");
}

bool InvariantDensity::sampleable() const {
  return gaussian.has_value() || (table && dim == 1);
}

Vector reference_point(const ModelSpec& spec) {
  if (spec.ou) return spec.ou->mean;
  const auto& dom = spec.domain;
  Vector z(dom.dim);
  for (int i = 0; i < dom.dim; ++i) {
    const bool lo = dom.bounded_below(i), hi = dom.bounded_above(i);
    if (lo && hi)
      z[i] = 0.5 * (dom.lower[i] + dom.upper[i]);
    else if (lo)
      z[i] = dom.lower[i] + 1.0;
    else if (hi)
      z[i] = dom.upper[i] - 1.0;
    else
      z[i] = 0.0;
  }
  return z;
}

InvariantDensity density_1d(const ModelSpec& spec, double z0) {
  if (spec.dim() != 1) throw ModelError("density_1d requires a 1-D factor");
  require_interior(spec, scalar_state(z0), "density_1d");
  auto m = spec.drift;
  auto c = spec.diffusion;
  auto rate = [m, c](double z) {
    const Vector s = scalar_state(z);
    return 2.0 * m(s)[0] / c(s)(0, 0);
  };
  auto offset = [c](double z) { return -std::log(c(scalar_state(z))(0, 0)); };
  InvariantDensity owned =
      build_1d(spec, z0, rate, offset, DensityProvenance::ClosedForm1D);
  ModelSpec captured = spec;
  owned.score = [captured](const Vector& z) -> Vector {
    return reversing_field(captured, z);
  };
  return owned;
}

InvariantDensity gaussian_density(const GaussianLaw& law,
                                  DensityProvenance provenance) {
  const int d = static_cast<int>(law.mean.size());
  if (law.cov.rows() != d || law.cov.cols() != d)
    throw ModelError("gaussian density: inconsistent dimensions");
  Eigen::SelfAdjointEigenSolver<Matrix> es(law.cov, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  if (!(es.eigenvalues().minCoeff() > kSpdRelativeTolerance * lmax) ||
      !(lmax > 0.0))
    throw UnsupportedDensityError(
        "gaussian density: covariance is singular (point mass); use Method B");
  const Eigen::LLT<Matrix> llt(law.cov);
  const Matrix prec = llt.solve(Matrix::Identity(d, d));
  const Vector mean = law.mean;
  InvariantDensity out;
  out.dim = d;
  out.provenance = provenance;
  out.gaussian = law;
  out.log_p = [prec, mean](const Vector& z) {
    const Vector r = z - mean;
    return -0.5 * r.dot(prec * r);
  };
  out.score = [prec, mean](const Vector& z) -> Vector { return -prec * (z - mean); };
  const Matrix L = llt.matrixL();
  out.log_K = 0.5 * d * std::log(2.0 * M_PI) + L.diagonal().array().log().sum();
  const double zq = -boost::math::quantile(boost::math::normal(), kBulkTail);
  for (int i = 0; i < d; ++i) {
    const double sd = std::sqrt(law.cov(i, i));
    out.bulk_lower.push_back(mean[i] - zq * sd);
    out.bulk_upper.push_back(mean[i] + zq * sd);
  }
  return out;
}

InvariantDensity ou_density(const ModelSpec& spec) {
  if (!spec.ou) throw ModelError("ou_density requires an OU factor");
  const RiccatiSolution sol =
      riccati_stationary_ou(spec.ou->gamma, spec.ou->mean, spec.ou->sigma);
  return gaussian_density(GaussianLaw{sol.mean, sol.Sigma},
                          DensityProvenance::OURiccati);
}

RecurrenceReport check_recurrence_1d(const ModelSpec& spec, double z0) {
  if (spec.dim() != 1)
    throw ModelError("check_recurrence_1d requires a 1-D factor");
  require_interior(spec, scalar_state(z0), "check_recurrence_1d");
  auto rate = [&spec](double z) {
    const Vector s = scalar_state(z);
    return 2.0 * spec.m(s)[0] / spec.c(s)(0, 0);
  };
  auto scale = [](double, double A) { return -A; };
  auto speed = [&spec](double z, double A) {
    return A - std::log(spec.c(scalar_state(z))(0, 0));
  };
  const RayResult s_lo = integrate_ray(z0, spec.domain.lower[0], rate, scale);
  const RayResult s_hi = integrate_ray(z0, spec.domain.upper[0], rate, scale);
  const RayResult m_lo = integrate_ray(z0, spec.domain.lower[0], rate, speed);
  const RayResult m_hi = integrate_ray(z0, spec.domain.upper[0], rate, speed);

  RecurrenceReport rep;
  rep.lower_scale = to_string(s_lo.status);
  rep.upper_scale = to_string(s_hi.status);
  auto combine = [](IntegralStatus a, IntegralStatus b) {
    if (a == IntegralStatus::Diverged || b == IntegralStatus::Diverged)
      return IntegralStatus::Diverged;
    if (a == IntegralStatus::Inconclusive || b == IntegralStatus::Inconclusive)
      return IntegralStatus::Inconclusive;
    return IntegralStatus::Converged;
  };
  const IntegralStatus sp = combine(m_lo.status, m_hi.status);
  rep.speed = to_string(sp);
  std::vector<std::string> notes;
  for (const RayResult* r : {&s_lo, &s_hi, &m_lo, &m_hi})
    if (!r->diagnostic.empty()) notes.push_back(r->diagnostic);
  for (const auto& n : notes) rep.diagnostic += (rep.diagnostic.empty() ? "" : "; ") + n;

  const bool scale_diverges = s_lo.status == IntegralStatus::Diverged &&
                              s_hi.status == IntegralStatus::Diverged;
  const bool any_scale_converges = s_lo.status == IntegralStatus::Converged ||
                                   s_hi.status == IntegralStatus::Converged;
  if (scale_diverges && sp == IntegralStatus::Converged)
    rep.classification = Recurrence::PositiveRecurrent;
  else if (any_scale_converges || sp == IntegralStatus::Diverged)
    rep.classification = Recurrence::NullRecurrentOrTransient;
  else
    rep.classification = Recurrence::Inconclusive;
  return rep;
}

std::optional<PotentialReport> reversing_check(
    const ModelSpec& spec, std::span<const Vector> probe_points) {
  const int d = spec.dim();
  ModelSpec captured = spec;
  PotentialReport rep;
  rep.v = [captured](const Vector& z) -> Vector {
    return reversing_field(captured, z);
  };
  rep.base_point = reference_point(spec);

  if (d > 1) {
    for (const Vector& z : probe_points) {
      require_interior(spec, z, "reversing_check");
      Matrix J(d, d);
      for (int j = 0; j < d; ++j) {
        const double h = fd_step(z[j]);
        Vector zp = z, zm = z;
        zp[j] += h;
        zm[j] -= h;
        J.col(j) = (rep.v(zp) - rep.v(zm)) / (2.0 * h);
      }
      const double scale = std::max(J.cwiseAbs().maxCoeff(), 1e-300);
      const double defect = (J - J.transpose()).cwiseAbs().maxCoeff() / scale;
      rep.max_curl_defect = std::max(rep.max_curl_defect, defect);
    }
    if (rep.max_curl_defect > 1e-4) return std::nullopt;
  }
  rep.reversing = true;

  const Vector base = rep.base_point;
  const VectorField v = rep.v;
  rep.H = [v, base](const Vector& z) {
    const Vector dz = z - base;
    if (dz.squaredNorm() == 0.0) return 0.0;
    return gauss_legendre(
        [&](double t) { return v(base + t * dz).dot(dz); }, 0.0, 1.0);
  };

  if (d == 1) {
    try {
      auto rate = [v](double z) { return v(scalar_state(z))[0]; };
      InvariantDensity dens =
          build_1d(spec, base[0], rate, [](double) { return 0.0; },
                   DensityProvenance::ReversingPotential);
      dens.score = v;
      rep.density = std::move(dens);
    } catch (const NotPositiveRecurrentError& e) {
      rep.notice = std::string("potential is not normalizable: ") + e.what();
    }
    return rep;
  }

  if (d == 2) {
    auto [lo, hi] = potential_box(spec.domain, rep.H, base, 40.0, 3.0);
    const ScalarField H = rep.H;
    double shift = -kInf;
    for (int attempt = 0; attempt < 6; ++attempt) {
      shift = -kInf;
      for (int i = 0; i <= 40; ++i)
        for (int j = 0; j <= 40; ++j) {
          Vector z(2);
          z << lo[0] + (hi[0] - lo[0]) * i / 40.0, lo[1] + (hi[1] - lo[1]) * j / 40.0;
          shift = std::max(shift, H(z));
        }
      double edge_max = -kInf;
      for (int i = 0; i <= 50; ++i) {
        const double t = i / 50.0;
        for (const Vector& z :
             {Vector(Eigen::Vector2d(lo[0] + t * (hi[0] - lo[0]), lo[1])),
              Vector(Eigen::Vector2d(lo[0] + t * (hi[0] - lo[0]), hi[1])),
              Vector(Eigen::Vector2d(lo[0], lo[1] + t * (hi[1] - lo[1]))),
              Vector(Eigen::Vector2d(hi[0], lo[1] + t * (hi[1] - lo[1])))})
          edge_max = std::max(edge_max, H(z));
      }
      if (edge_max < shift - 35.0) break;
      const Vector mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
      Vector nlo = mid - 2.0 * half, nhi = mid + 2.0 * half;
      for (int i = 0; i < 2; ++i) {
        const double eps_lo = 1e-10 * (1.0 + std::abs(spec.domain.lower[i]));
        const double eps_hi = 1e-10 * (1.0 + std::abs(spec.domain.upper[i]));
        nlo[i] = std::max(nlo[i], spec.domain.lower[i] + eps_lo);
        nhi[i] = std::min(nhi[i], spec.domain.upper[i] - eps_hi);
      }
      if (nlo == lo && nhi == hi) break;
      lo = nlo;
      hi = nhi;
    }
    const double mass = adaptive_integral(
        [&](double x) {
          return adaptive_integral(
              [&](double y) {
                Vector z(2);
                z << x, y;
                return std::exp(H(z) - shift);
              },
              lo[1], hi[1], 1e-11);
        },
        lo[0], hi[0], 1e-11);
    InvariantDensity dens;
    dens.dim = 2;
    dens.provenance = DensityProvenance::ReversingPotential;
    dens.log_p = H;
    dens.score = v;
    dens.log_K = std::log(mass) + shift;
    dens.bulk_lower = {lo[0], lo[1]};
    dens.bulk_upper = {hi[0], hi[1]};
    if (spec.ou) {
      const RiccatiSolution sol =
          riccati_stationary_ou(spec.ou->gamma, spec.ou->mean, spec.ou->sigma);
      dens.gaussian = GaussianLaw{sol.mean, sol.Sigma};
    }
    rep.density = std::move(dens);
    return rep;
  }

  if (spec.ou) {
    const RiccatiSolution sol =
        riccati_stationary_ou(spec.ou->gamma, spec.ou->mean, spec.ou->sigma);
    rep.density = gaussian_density(GaussianLaw{sol.mean, sol.Sigma},
                                   DensityProvenance::ReversingPotential);
  } else {
    rep.notice = "normalization of the potential is only computed for d <= 2";
  }
  return rep;
}

double adjoint_residual(const ModelSpec& spec, const InvariantDensity& density,
                        std::span<const Vector> grid) {
  const int d = spec.dim();
  if (density.dim != d)
    throw ModelError("adjoint_residual: density and model dimensions differ");
  static constexpr double w1[4] = {1.0, -8.0, 8.0, -1.0};  // offsets -2,-1,1,2
  static constexpr int off1[4] = {-2, -1, 1, 2};
  static constexpr double w2[5] = {-1.0, 16.0, -30.0, 16.0, -1.0};

  auto P = [&](const Vector& y) { return std::exp(density.log_p(y) - density.log_K); };
  double max_res = 0.0, max_p = 0.0;
  for (const Vector& z : grid) {
    if (z.size() != d || !spec.domain.contains(z)) {
      std::ostringstream os;
      os << "adjoint_residual: grid node (" << z.transpose()
         << ") outside the domain";
      throw ModelError(os.str());
    }
    const double h = std::min(1e-3, boundary_distance(spec.domain, z) / 4.0);
    max_p = std::max(max_p, P(z));
    auto shifted = [&](int i, int a, int j, int b) {
      Vector y = z;
      y[i] += a * h;
      y[j] += b * h;
      return y;
    };
    double val = 0.0;
    for (int i = 0; i < d; ++i) {
      // - d_i (m_i p)
      double dmi = 0.0;
      for (int k = 0; k < 4; ++k) {
        const Vector y = shifted(i, off1[k], i, 0);
        dmi += w1[k] * spec.m(y)[i] * P(y);
      }
      val -= dmi / (12.0 * h);
      // 1/2 d_ii (c_ii p)
      double dii = 0.0;
      for (int k = 0; k < 5; ++k) {
        const Vector y = shifted(i, k - 2, i, 0);
        dii += w2[k] * spec.c(y)(i, i) * P(y);
      }
      val += 0.5 * dii / (12.0 * h * h);
      // off-diagonal pairs appear twice in the double sum
      for (int j = i + 1; j < d; ++j) {
        double dij = 0.0;
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) {
            const Vector y = shifted(i, off1[a], j, off1[b]);
            dij += w1[a] * w1[b] * spec.c(y)(i, j) * P(y);
          }
        val += dij / (144.0 * h * h);
      }
    }
    max_res = std::max(max_res, std::abs(val));
  }
  if (!(max_p > 0.0)) throw NumericalError("adjoint_residual: density vanishes on grid");
  return max_res / max_p;
}

std::vector<Vector> standard_grid(const InvariantDensity& density) {
  const int d = density.dim;
  if (d > 2) throw UnsupportedDensityError("standard grid defined for d <= 2");
  const int n = d == 1 ? 201 : 41;
  std::vector<Vector> grid;
  if (d == 1) {
    for (int i = 0; i < n; ++i)
      grid.push_back(scalar_state(density.bulk_lower[0] +
                                  (density.bulk_upper[0] - density.bulk_lower[0]) * i / (n - 1)));
    return grid;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Vector z(2);
      z << density.bulk_lower[0] + (density.bulk_upper[0] - density.bulk_lower[0]) * i / (n - 1),
          density.bulk_lower[1] + (density.bulk_upper[1] - density.bulk_lower[1]) * j / (n - 1);
      grid.push_back(z);
    }
  return grid;
}

double expectation(const InvariantDensity& density, const ScalarField& g) {
  const int d = density.dim;
  if (d == 1) {
    double lo, hi;
    if (density.table) {
      lo = density.table->nodes.front();
      hi = density.table->nodes.back();
    } else if (density.gaussian) {
      const double sd = std::sqrt(density.gaussian->cov(0, 0));
      lo = density.gaussian->mean[0] - 14.0 * sd;
      hi = density.gaussian->mean[0] + 14.0 * sd;
    } else {
      lo = density.bulk_lower[0];
      hi = density.bulk_upper[0];
    }
    constexpr int pieces = 512;
    double acc = 0.0;
    for (int k = 0; k < pieces; ++k) {
      const double a = lo + (hi - lo) * k / pieces;
      const double b = lo + (hi - lo) * (k + 1) / pieces;
      acc += gauss_legendre(
          [&](double z) {
            const Vector s = scalar_state(z);
            return g(s) * density.pdf(s);
          },
          a, b);
    }
    return acc;
  }
  if (density.gaussian && d <= 3) {
    const HermiteRule rule = gauss_hermite(d == 2 ? 32 : 20);
    const Matrix L = density.gaussian->cov.llt().matrixL();
    const int n = static_cast<int>(rule.nodes.size());
    std::vector<int> idx(d, 0);
    double acc = 0.0;
    while (true) {
      Vector xi(d);
      double w = 1.0;
      for (int i = 0; i < d; ++i) {
        xi[i] = rule.nodes[idx[i]];
        w *= rule.weights[idx[i]];
      }
      acc += w * g(density.gaussian->mean + L * xi);
      int pos = 0;
      while (pos < d && ++idx[pos] == n) idx[pos++] = 0;
      if (pos == d) break;
    }
    return acc;
  }
  if (d == 2) {
    const double x0 = density.bulk_lower[0], x1 = density.bulk_upper[0];
    const double y0 = density.bulk_lower[1], y1 = density.bulk_upper[1];
    return adaptive_integral(
        [&](double x) {
          return adaptive_integral(
              [&](double y) {
                Vector z(2);
                z << x, y;
                return g(z) * density.pdf(z);
              },
              y0, y1, 1e-10);
        },
        x0, x1, 1e-10);
  }
  throw UnsupportedDensityError("expectation: unsupported density dimension");
}

InvariantDensity default_density(const ModelSpec& spec) {
  if (spec.dim() == 1) return density_1d(spec, reference_point(spec)[0]);
  if (spec.ou) return ou_density(spec);
  const auto probes = default_probe_points(spec.domain, 5);
  const auto rep = reversing_check(spec, probes);
  if (rep && rep->density) return *rep->density;
  throw UnsupportedDensityError(
      "no constructive invariant density for this model; use Method B");
}

InvariantDensity density_from_table(const ModelSpec& spec,
                                    std::vector<double> nodes,
                                    std::vector<double> log_p,
                                    double screen_tolerance) {
  if (spec.dim() != 1)
    throw UnsupportedDensityError("tabulated densities are one-dimensional");
  const std::size_t n = nodes.size();
  if (n < 8 || log_p.size() != n)
    throw ModelError("density table needs >= 8 nodes and matching log_p values");
  const double h = (nodes.back() - nodes.front()) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(nodes[i] - (nodes.front() + h * i)) > 1e-9 * (1.0 + std::abs(nodes[i])))
      throw ModelError("density table nodes must be uniformly spaced");
    if (!std::isfinite(log_p[i])) throw ModelError("density table has non-finite log_p");
  }
  auto spline = std::make_shared<boost::math::interpolators::cardinal_cubic_b_spline<double>>(
      log_p.begin(), log_p.end(), nodes.front(), h);
  const double lo = nodes.front(), hi = nodes.back();
  const double slope_lo = spline->prime(lo), slope_hi = spline->prime(hi);
  const double val_lo = (*spline)(lo), val_hi = (*spline)(hi);
  auto lp = [spline, lo, hi, slope_lo, slope_hi, val_lo, val_hi](double z) {
    if (z < lo) return val_lo + slope_lo * (z - lo);
    if (z > hi) return val_hi + slope_hi * (z - hi);
    return (*spline)(z);
  };
  const double shift = *std::max_element(log_p.begin(), log_p.end());
  double mass = adaptive_integral([&](double z) { return std::exp(lp(z) - shift); },
                                  lo, hi, 1e-12);
  if (std::isinf(spec.domain.lower[0])) {
    if (!(slope_lo > 0.0))
      throw ValidityError("tabulated density does not decay below the table");
    mass += std::exp(val_lo - shift) / slope_lo;
  }
  if (std::isinf(spec.domain.upper[0])) {
    if (!(slope_hi < 0.0))
      throw ValidityError("tabulated density does not decay above the table");
    mass += std::exp(val_hi - shift) / -slope_hi;
  }

  auto table = std::make_shared<DensityTable1D>();
  table->nodes = nodes;
  table->log_p = log_p;
  InvariantDensity out;
  out.dim = 1;
  out.provenance = DensityProvenance::UserSupplied;
  out.log_K = std::log(mass) + shift;
  finish_table(*table, lp, out.log_K);
  out.log_p = [lp](const Vector& z) { return lp(z[0]); };
  out.score = [spline, lo, hi, slope_lo, slope_hi](const Vector& z) -> Vector {
    const double x = z[0];
    if (x < lo) return scalar_state(slope_lo);
    if (x > hi) return scalar_state(slope_hi);
    return scalar_state(spline->prime(x));
  };
  out.bulk_lower = {table->quantile_at(kBulkTail)};
  out.bulk_upper = {table->quantile_at(1.0 - kBulkTail)};
  out.table = std::move(table);

  std::vector<Vector> screen;
  const std::size_t stride = std::max<std::size_t>(1, (n - 8) / 200);
  for (std::size_t i = 4; i + 4 < n; i += stride) {
    const Vector z = scalar_state(nodes[i]);
    if (spec.domain.contains(z)) screen.push_back(z);
  }
  const double res = adjoint_residual(spec, out, screen);
  if (!(res <= screen_tolerance)) {
    std::ostringstream os;
    os << "tabulated density fails the adjoint-residual screen (residual " << res
       << " > " << screen_tolerance << ")";
    throw ValidityError(os.str());
  }
  return out;
}

}  // namespace perpetuity
