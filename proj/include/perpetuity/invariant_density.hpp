#pragma once

#include "perpetuity/model.hpp"
#include "perpetuity/riccati.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace perpetuity {

enum class DensityProvenance {
  ClosedForm1D,
  ReversingPotential,
  OURiccati,
  UserSupplied
};

std::string to_string(DensityProvenance p);
DensityProvenance provenance_from_string(const std::string& s);

struct GaussianLaw {
  Vector mean;
  Matrix cov;
};

/// Cached one-dimensional tables: log_p on a uniform grid over the core of
/// the law, the CDF at the grid nodes and a quantile grid.
struct DensityTable1D {
  std::vector<double> nodes;
  std::vector<double> log_p;  // unnormalized, same constant as InvariantDensity
  std::vector<double> cdf;
  std::vector<double> quantiles;  // at levels j / (quantiles.size() - 1)

  double cdf_at(double z) const;
  double quantile_at(double u) const;
};

/// Invariant density p = exp(log_p) / K of the factor.
struct InvariantDensity {
  int dim = 1;
  ScalarField log_p;
  VectorField score;  // grad p / p
  double log_K = 0.0;
  DensityProvenance provenance = DensityProvenance::UserSupplied;
  std::optional<GaussianLaw> gaussian;
  std::shared_ptr<const DensityTable1D> table;
  // Box holding all but ~1e-8 of the mass in each coordinate.
  std::vector<double> bulk_lower;
  std::vector<double> bulk_upper;

  double K() const { return std::exp(log_K); }
  double pdf(const Vector& z) const { return std::exp(log_p(z) - log_K); }
  /// Marginal CDF (1-D densities and Gaussian laws).
  double cdf(double z, int coord = 0) const;
  bool sampleable() const;
};

/// Closed-form 1-D density p = c^-1 exp(2 int_{z0}^z m/c) / K.
/// Throws NotPositiveRecurrentError when the normalization diverges and
/// NumericalError when the divergence test is inconclusive.
InvariantDensity density_1d(const ModelSpec& spec, double z0);

/// Gaussian density of an OU factor from the Riccati solution.
InvariantDensity ou_density(const ModelSpec& spec);

/// Gaussian density with the given mean and covariance.
InvariantDensity gaussian_density(const GaussianLaw& law,
                                  DensityProvenance provenance);

enum class Recurrence { PositiveRecurrent, NullRecurrentOrTransient, Inconclusive };

std::string to_string(Recurrence r);

struct RecurrenceReport {
  Recurrence classification = Recurrence::Inconclusive;
  std::string lower_scale;  // status of each improper integral
  std::string upper_scale;
  std::string speed;
  std::string diagnostic;
};

RecurrenceReport check_recurrence_1d(const ModelSpec& spec, double z0);

struct PotentialReport {
  bool reversing = false;
  double max_curl_defect = 0.0;  // relative asymmetry of the Jacobian of v
  Vector base_point;
  ScalarField H;   // potential, H(base_point) = 0
  VectorField v;   // c^-1 (2 m - div c)
  std::optional<InvariantDensity> density;  // normalized when d <= 2
  std::string notice;
};

/// Tests whether c^-1 (2m - div c) is a gradient field at the probe points.
/// Returns std::nullopt when the curl test fails (the factor is not
/// reversing); otherwise the potential and p = e^H / K.
std::optional<PotentialReport> reversing_check(
    const ModelSpec& spec, std::span<const Vector> probe_points);

/// max |L* p| over the grid, divided by max p on the grid, where L* is the
/// formal adjoint of the factor generator. Derivatives by fourth-order
/// central differences.
double adjoint_residual(const ModelSpec& spec, const InvariantDensity& density,
                        std::span<const Vector> grid);

/// Uniform grid over the density's bulk box (201 nodes in 1-D, 41^2 in 2-D).
std::vector<Vector> standard_grid(const InvariantDensity& density);

/// E_p[g(Z)].
double expectation(const InvariantDensity& density, const ScalarField& g);

/// Picks the constructive route for the model: 1-D closed form, the Riccati
/// route for OU factors, else a reversing potential.
InvariantDensity default_density(const ModelSpec& spec);

/// Default interior starting point for integrals (mean for OU, midpoint or
/// offset from a finite bound otherwise).
Vector reference_point(const ModelSpec& spec);

/// Density from tabulated log_p on a uniform 1-D grid (cubic B-spline).
/// The result is screened with adjoint_residual against the model and
/// rejected with ValidityError above `screen_tolerance`.
InvariantDensity density_from_table(const ModelSpec& spec,
                                    std::vector<double> nodes,
                                    std::vector<double> log_p,
                                    double screen_tolerance = 1e-4);

}  // namespace perpetuity
