#pragma once

#include "perpetuity/types.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace perpetuity {

/// Open box E = (lower_1, upper_1) x ... x (lower_d, upper_d); infinite bounds
/// are allowed.
struct StateDomain {
  int dim = 1;
  std::vector<double> lower;
  std::vector<double> upper;
  std::string label;

  static StateDomain full_space(int dim);
  static StateDomain box(std::vector<double> lower, std::vector<double> upper,
                         std::string label = {});

  /// Throws ModelError when the box is malformed.
  void check() const;
  bool contains(const Vector& z) const;
  bool bounded_below(int i) const;
  bool bounded_above(int i) const;
};

/// Linear-Gaussian factor dZ = -gamma (Z - Theta) dt + sigma dW.
struct OrnsteinUhlenbeckFactor {
  Matrix gamma;
  Vector mean;
  Matrix sigma;
};

/// Coefficient bundle (m, c, a, theta, eta, f). theta and eta may be left
/// empty, meaning identically zero.
struct ModelSpec {
  std::string kind;
  StateDomain domain;
  int noise_dim = 0;  // k, dimension of the discount noise B

  VectorField drift;      // m
  MatrixField diffusion;  // c = sigma sigma
  ScalarField rate;       // a
  VectorField theta;
  VectorField eta;
  ScalarField cashflow;   // f

  // Optional analytic pieces; numerical fallbacks are used when absent.
  MatrixField diffusion_sqrt;
  VectorField diffusion_divergence;
  bool constant_diffusion = false;

  std::optional<OrnsteinUhlenbeckFactor> ou;
  bool signed_cashflow = false;

  int dim() const { return domain.dim; }
  bool has_theta() const { return static_cast<bool>(theta); }
  bool has_eta() const { return static_cast<bool>(eta) && noise_dim > 0; }
  bool degenerate() const { return !has_theta() && !has_eta(); }

  Vector m(const Vector& z) const { return drift(z); }
  Matrix c(const Vector& z) const { return diffusion(z); }
  double a(const Vector& z) const { return rate(z); }
  double f(const Vector& z) const { return cashflow(z); }
  Vector theta_at(const Vector& z) const;
  Vector eta_at(const Vector& z) const;

  /// sigma(z) = sqrt(c(z)).
  Matrix sigma(const Vector& z) const;
  /// Matrix divergence (div c)^i = d_j c^{ij}.
  Vector div_c(const Vector& z) const;
  /// theta' c theta + eta' eta.
  double noise_intensity(const Vector& z) const;
  /// Scalar divergence of the vector field z -> c(z) theta(z).
  double div_c_theta(const Vector& z) const;
};

/// Central-difference step used for numerical derivatives of coefficients.
double fd_step(double z);

struct ValidationCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  std::vector<std::string> notices;
  bool passed = false;
};

/// Probes the model at the given states: c SPD, f sign, a/theta/eta finite.
/// Throws ModelError for probes outside the domain or non-finite coefficient
/// values (naming the point).
ValidationReport validate_model(const ModelSpec& spec,
                                std::span<const Vector> probe_points);

/// Default probe set: a tensor grid inside the domain (finite sides inset,
/// infinite sides truncated to [-3, 3] around 0 or the finite bound).
std::vector<Vector> default_probe_points(const StateDomain& domain,
                                         int per_axis = 9);

/// Unique symmetric positive definite square root of an SPD matrix.
Matrix sigma_from_c(const Matrix& cval);

/// Smallest eigenvalue must exceed this fraction of the largest.
inline constexpr double kSpdRelativeTolerance = 1e-10;

// ---------------------------------------------------------------------------
// Coefficient catalog
// ---------------------------------------------------------------------------

/// Discount and cash-flow part of a model: (a, theta, eta, f) with k = eta size.
struct DiscountSpec {
  ScalarField rate;
  VectorField theta;
  VectorField eta;
  int noise_dim = 0;
  ScalarField cashflow;
  bool signed_cashflow = false;
};

ScalarField constant_scalar(double v);
VectorField constant_vector(Vector v);
/// z -> sum_k coeffs[k] * z[coord]^k.
ScalarField polynomial_scalar(std::vector<double> coeffs, int coord = 0);

/// Multi-dimensional OU factor dZ = -gamma (Z - mean) dt + sigma dW on R^d.
ModelSpec make_ou_model(const Matrix& gamma, const Vector& mean,
                        const Matrix& sigma, DiscountSpec discount);
/// One-dimensional OU factor dZ = -gamma Z dt + sigma dW.
ModelSpec make_ou_model_1d(double gamma, double sigma, DiscountSpec discount);
/// CIR-style factor m = kappa (mean - z), c = xi^2 z on (0, inf).
ModelSpec make_cir_model(double kappa, double mean, double xi,
                         DiscountSpec discount);
/// Constant drift and diffusion on the given domain.
ModelSpec make_constant_model(StateDomain domain, const Vector& drift,
                              const Matrix& diffusion, DiscountSpec discount);
/// One-dimensional polynomial drift and diffusion.
ModelSpec make_polynomial_model(StateDomain domain,
                                std::vector<double> drift_coeffs,
                                std::vector<double> diffusion_coeffs,
                                DiscountSpec discount);

/// The OU example of the numerical section: m = -gamma z, c = 1,
/// a constant, theta = eta = 0, f(z) = z (signed cash flow).
ModelSpec make_ou_perpetuity_example(double gamma, double a);

}  // namespace perpetuity
