#include "perpetuity/model.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>

namespace perpetuity {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_point(const Vector& z) {
  std::ostringstream os;
  os.precision(17);
  os << "(";
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (i) os << ", ";
    os << z[i];
  }
  os << ")";
  return os.str();
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

// ---------------------------------------------------------------------------
// StateDomain
// ---------------------------------------------------------------------------

StateDomain StateDomain::full_space(int dim) {
  StateDomain d;
  d.dim = dim;
  d.lower.assign(dim, -kInf);
  d.upper.assign(dim, kInf);
  d.label = dim == 1 ? "R" : "R^" + std::to_string(dim);
  return d;
}

StateDomain StateDomain::box(std::vector<double> lower,
                             std::vector<double> upper, std::string label) {
  StateDomain d;
  d.dim = static_cast<int>(lower.size());
  d.lower = std::move(lower);
  d.upper = std::move(upper);
  d.label = std::move(label);
  d.check();
  return d;
}

void StateDomain::check() const {
  if (dim < 1) throw ModelError("domain dimension must be >= 1");
  if (static_cast<int>(lower.size()) != dim ||
      static_cast<int>(upper.size()) != dim)
    throw ModelError("domain bounds do not match the dimension");
  for (int i = 0; i < dim; ++i) {
    if (std::isnan(lower[i]) || std::isnan(upper[i]) || !(lower[i] < upper[i]))
      throw ModelError("domain requires lower < upper in coordinate " +
                       std::to_string(i));
  }
}

bool StateDomain::contains(const Vector& z) const {
  if (z.size() != dim) return false;
  for (int i = 0; i < dim; ++i)
    if (!(z[i] > lower[i] && z[i] < upper[i])) return false;
  return true;
}

bool StateDomain::bounded_below(int i) const { return std::isfinite(lower[i]); }
bool StateDomain::bounded_above(int i) const { return std::isfinite(upper[i]); }

// ---------------------------------------------------------------------------
// ModelSpec helpers
// ---------------------------------------------------------------------------

double fd_step(double z) { return 1e-5 * (1.0 + std::abs(z)); }

Vector ModelSpec::theta_at(const Vector& z) const {
  return has_theta() ? theta(z) : Vector::Zero(dim());
}

Vector ModelSpec::eta_at(const Vector& z) const {
  return has_eta() ? eta(z) : Vector::Zero(noise_dim);
}

Matrix ModelSpec::sigma(const Vector& z) const {
  if (diffusion_sqrt) return diffusion_sqrt(z);
  if (dim() == 1) {
    Matrix s(1, 1);
    s(0, 0) = std::sqrt(diffusion(z)(0, 0));
    return s;
  }
  return sigma_from_c(diffusion(z));
}

Vector ModelSpec::div_c(const Vector& z) const {
  if (diffusion_divergence) return diffusion_divergence(z);
  const int d = dim();
  Vector out = Vector::Zero(d);
  if (constant_diffusion) return out;
  Vector zp = z, zm = z;
  for (int j = 0; j < d; ++j) {
    const double h = fd_step(z[j]);
    zp[j] = z[j] + h;
    zm[j] = z[j] - h;
    const Matrix cp = diffusion(zp);
    const Matrix cm = diffusion(zm);
    out += (cp.col(j) - cm.col(j)) / (2.0 * h);
    zp[j] = z[j];
    zm[j] = z[j];
  }
  return out;
}

double ModelSpec::noise_intensity(const Vector& z) const {
  double q = 0.0;
  if (has_theta()) {
    const Vector th = theta(z);
    q += th.dot(diffusion(z) * th);
  }
  if (has_eta()) q += eta(z).squaredNorm();
  return q;
}

double ModelSpec::div_c_theta(const Vector& z) const {
  if (!has_theta()) return 0.0;
  const int d = dim();
  double out = 0.0;
  Vector zp = z, zm = z;
  for (int i = 0; i < d; ++i) {
    const double h = fd_step(z[i]);
    zp[i] = z[i] + h;
    zm[i] = z[i] - h;
    const double up = (diffusion(zp) * theta(zp))[i];
    const double dn = (diffusion(zm) * theta(zm))[i];
    out += (up - dn) / (2.0 * h);
    zp[i] = z[i];
    zm[i] = z[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

Matrix sigma_from_c(const Matrix& cval) {
  if (cval.rows() != cval.cols() || cval.rows() == 0)
    throw ModelError("sigma_from_c: matrix must be square and non-empty");
  if (!cval.isApprox(cval.transpose(), 1e-12) &&
      (cval - cval.transpose()).norm() > 1e-14)
    throw ModelError("sigma_from_c: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (cval + cval.transpose()));
  if (es.info() != Eigen::Success)
    throw NumericalError("sigma_from_c: eigen-decomposition failed");
  const Vector& ev = es.eigenvalues();
  const double lmax = ev.maxCoeff();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (!(ev[i] > 0.0) || !(ev[i] > kSpdRelativeTolerance * lmax)) {
      std::ostringstream os;
      os.precision(17);
      os << "sigma_from_c: matrix is not positive definite (eigenvalue " << i
         << " = " << ev[i] << ")";
      throw ModelError(os.str());
    }
  }
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

std::vector<Vector> default_probe_points(const StateDomain& domain,
                                         int per_axis) {
  domain.check();
  const int d = domain.dim;
  std::vector<std::vector<double>> axes(d);
  for (int i = 0; i < d; ++i) {
    double lo = domain.lower[i], hi = domain.upper[i];
    if (!std::isfinite(lo) && !std::isfinite(hi)) {
      lo = -3.0;
      hi = 3.0;
    } else if (!std::isfinite(lo)) {
      lo = hi - 6.0;
    } else if (!std::isfinite(hi)) {
      hi = lo + 6.0;
    }
    for (int k = 0; k < per_axis; ++k)
      axes[i].push_back(lo + (hi - lo) * (k + 1.0) / (per_axis + 1.0));
  }
  std::vector<Vector> out;
  std::vector<int> idx(d, 0);
  while (true) {
    Vector z(d);
    for (int i = 0; i < d; ++i) z[i] = axes[i][idx[i]];
    out.push_back(z);
    int i = 0;
    while (i < d && ++idx[i] == per_axis) idx[i++] = 0;
    if (i == d) break;
  }
  return out;
}

ValidationReport validate_model(const ModelSpec& spec,
                                std::span<const Vector> probe_points) {
  spec.domain.check();
  if (!spec.drift || !spec.diffusion || !spec.rate || !spec.cashflow)
    throw ModelError("model is missing one of m, c, a, f");
  const int d = spec.dim();

  bool spd_ok = true, sym_ok = true, f_ok = true, finite_ok = true;
  std::string spd_detail, f_detail;
  double min_f = std::numeric_limits<double>::infinity();

  for (const Vector& z : probe_points) {
    if (!spec.domain.contains(z))
      throw ModelError("probe point " + format_point(z) +
                       " lies outside the domain");
    const Vector m = spec.m(z);
    const Matrix c = spec.c(z);
    const double a = spec.a(z);
    const double f = spec.f(z);
    const Vector th = spec.theta_at(z);
    const Vector et = spec.eta_at(z);
    if (m.size() != d || c.rows() != d || c.cols() != d || th.size() != d ||
        et.size() != spec.noise_dim)
      throw ModelError("coefficient dimension mismatch at " + format_point(z));
    if (!all_finite(m) || !all_finite(c) || !std::isfinite(a) ||
        !std::isfinite(f) || !all_finite(th) || !all_finite(et)) {
      finite_ok = false;
      throw ModelError("non-finite coefficient value at " + format_point(z));
    }
    if ((c - c.transpose()).norm() > 1e-12 * std::max(1.0, c.norm())) {
      sym_ok = false;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (c + c.transpose()),
                                             Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    if (!(lmax > 0.0) || !(lmin > kSpdRelativeTolerance * lmax)) {
      if (spd_ok) {
        std::ostringstream os;
        os << "c not positive definite at " << format_point(z)
           << " (smallest eigenvalue " << lmin << ", largest " << lmax << ")";
        spd_detail = os.str();
      }
      spd_ok = false;
    }
    if (f < 0.0 && f < min_f) {
      min_f = f;
      f_detail = "f(" + format_point(z) + ") = " + std::to_string(f) + " < 0";
    }
  }

  ValidationReport report;
  report.checks.push_back({"c_symmetric", sym_ok, sym_ok ? "" : "c(z) is not symmetric"});
  report.checks.push_back({"c_spd", spd_ok && sym_ok, spd_detail});
  if (std::isfinite(min_f)) {
    f_ok = spec.signed_cashflow;
    if (spec.signed_cashflow)
      report.notices.push_back("signed cash flow: " + f_detail +
                               " (accepted, signed_cashflow flag set)");
  }
  report.checks.push_back({"f_nonnegative", f_ok, f_ok ? "" : f_detail});
  report.checks.push_back({"coefficients_finite", finite_ok, ""});
  report.passed = true;
  for (const auto& c : report.checks) report.passed = report.passed && c.passed;
  return report;
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

ScalarField constant_scalar(double v) {
  return [v](const Vector&) { return v; };
}

VectorField constant_vector(Vector v) {
  return [v = std::move(v)](const Vector&) { return v; };
}

ScalarField polynomial_scalar(std::vector<double> coeffs, int coord) {
  return [coeffs = std::move(coeffs), coord](const Vector& z) {
    double acc = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it)
      acc = acc * z[coord] + *it;
    return acc;
  };
}

namespace {

void attach_discount(ModelSpec& spec, DiscountSpec discount) {
  spec.rate = discount.rate ? std::move(discount.rate) : constant_scalar(0.0);
  spec.theta = std::move(discount.theta);
  spec.eta = std::move(discount.eta);
  spec.noise_dim = spec.eta ? discount.noise_dim : 0;
  spec.cashflow =
      discount.cashflow ? std::move(discount.cashflow) : constant_scalar(1.0);
  spec.signed_cashflow = discount.signed_cashflow;
}

double poly_eval(const std::vector<double>& c, double x) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
  return acc;
}

}  // namespace

ModelSpec make_ou_model(const Matrix& gamma, const Vector& mean,
                        const Matrix& sigma, DiscountSpec discount) {
  const int d = static_cast<int>(gamma.rows());
  if (gamma.cols() != d || mean.size() != d || sigma.rows() != d ||
      sigma.cols() != d)
    throw ModelError("OU model: inconsistent dimensions");
  ModelSpec spec;
  spec.kind = "ou";
  spec.domain = StateDomain::full_space(d);
  spec.drift = [gamma, mean](const Vector& z) -> Vector {
    return -gamma * (z - mean);
  };
  const Matrix c = sigma * sigma.transpose();
  const Matrix s = sigma_from_c(c);
  spec.diffusion = [c](const Vector&) { return c; };
  spec.diffusion_sqrt = [s](const Vector&) { return s; };
  spec.diffusion_divergence = [d](const Vector&) -> Vector {
    return Vector::Zero(d);
  };
  spec.constant_diffusion = true;
  spec.ou = OrnsteinUhlenbeckFactor{gamma, mean, s};
  attach_discount(spec, std::move(discount));
  return spec;
}

ModelSpec make_ou_model_1d(double gamma, double sigma, DiscountSpec discount) {
  Matrix g(1, 1), s(1, 1);
  g(0, 0) = gamma;
  s(0, 0) = sigma;
  return make_ou_model(g, Vector::Zero(1), s, std::move(discount));
}

ModelSpec make_cir_model(double kappa, double mean, double xi,
                         DiscountSpec discount) {
  if (!(kappa > 0.0) || !(mean > 0.0) || !(xi > 0.0))
    throw ModelError("CIR model requires kappa, mean, xi > 0");
  ModelSpec spec;
  spec.kind = "cir";
  spec.domain = StateDomain::box({0.0}, {kInf}, "(0,inf)");
  spec.drift = [kappa, mean](const Vector& z) -> Vector {
    return Vector::Constant(1, kappa * (mean - z[0]));
  };
  spec.diffusion = [xi](const Vector& z) -> Matrix {
    return Matrix::Constant(1, 1, xi * xi * z[0]);
  };
  spec.diffusion_sqrt = [xi](const Vector& z) -> Matrix {
    return Matrix::Constant(1, 1, xi * std::sqrt(std::max(z[0], 0.0)));
  };
  spec.diffusion_divergence = [xi](const Vector&) -> Vector {
    return Vector::Constant(1, xi * xi);
  };
  attach_discount(spec, std::move(discount));
  return spec;
}

ModelSpec make_constant_model(StateDomain domain, const Vector& drift,
                              const Matrix& diffusion, DiscountSpec discount) {
  domain.check();
  const int d = domain.dim;
  if (drift.size() != d || diffusion.rows() != d || diffusion.cols() != d)
    throw ModelError("constant model: inconsistent dimensions");
  ModelSpec spec;
  spec.kind = "constant";
  spec.domain = std::move(domain);
  spec.drift = constant_vector(drift);
  spec.diffusion = [diffusion](const Vector&) { return diffusion; };
  spec.diffusion_divergence = [d](const Vector&) -> Vector {
    return Vector::Zero(d);
  };
  spec.constant_diffusion = true;
  Eigen::SelfAdjointEigenSolver<Matrix> es(diffusion, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() > 0.0) {
    const Matrix s = sigma_from_c(diffusion);
    spec.diffusion_sqrt = [s](const Vector&) { return s; };
  } else {
    spec.diffusion_sqrt = [d](const Vector&) -> Matrix {
      return Matrix::Zero(d, d);
    };
  }
  attach_discount(spec, std::move(discount));
  return spec;
}

ModelSpec make_polynomial_model(StateDomain domain,
                                std::vector<double> drift_coeffs,
                                std::vector<double> diffusion_coeffs,
                                DiscountSpec discount) {
  domain.check();
  if (domain.dim != 1)
    throw ModelError("polynomial model is one-dimensional");
  std::vector<double> dc;
  for (std::size_t k = 1; k < diffusion_coeffs.size(); ++k)
    dc.push_back(static_cast<double>(k) * diffusion_coeffs[k]);
  ModelSpec spec;
  spec.kind = "polynomial";
  spec.domain = std::move(domain);
  spec.drift = [m = std::move(drift_coeffs)](const Vector& z) -> Vector {
    return Vector::Constant(1, poly_eval(m, z[0]));
  };
  spec.diffusion = [diffusion_coeffs](const Vector& z) -> Matrix {
    return Matrix::Constant(1, 1, poly_eval(diffusion_coeffs, z[0]));
  };
  spec.diffusion_divergence = [dc = std::move(dc)](const Vector& z) -> Vector {
    return Vector::Constant(1, poly_eval(dc, z[0]));
  };
  spec.constant_diffusion = diffusion_coeffs.size() <= 1;
  attach_discount(spec, std::move(discount));
  return spec;
}

ModelSpec make_ou_perpetuity_example(double gamma, double a) {
  DiscountSpec discount;
  discount.rate = constant_scalar(a);
  discount.cashflow = polynomial_scalar({0.0, 1.0});
  discount.signed_cashflow = true;
  return make_ou_model_1d(gamma, 1.0, std::move(discount));
}

}  // namespace perpetuity
