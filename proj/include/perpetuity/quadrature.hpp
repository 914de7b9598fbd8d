#pragma once

#include <functional>
#include <string>
#include <vector>

namespace perpetuity {

/// 20-point Gauss-Legendre rule on [a, b].
double gauss_legendre(const std::function<double(double)>& f, double a,
                      double b);

/// Adaptive Gauss-Kronrod (15 point) on a finite interval.
double adaptive_integral(const std::function<double(double)>& f, double a,
                         double b, double rel_tol = 1e-13);

/// Nodes and weights of the probabilists' Gauss-Hermite rule:
/// sum_i w_i g(x_i) ~ E[g(N(0, 1))].
struct HermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
HermiteRule gauss_hermite(int n);

enum class IntegralStatus { Converged, Diverged, Inconclusive };

std::string to_string(IntegralStatus s);

/// One band of a ray integral. Bands are geometric truncations of the ray.
struct RayBand {
  double start = 0.0;
  double end = 0.0;
  double antiderivative_end = 0.0;  // A(end)
  double log_mass = 0.0;            // log of the band integral
  double max_log_integrand = 0.0;
};

struct RayResult {
  IntegralStatus status = IntegralStatus::Inconclusive;
  double log_value = 0.0;  // log of the (partial) integral
  std::vector<RayBand> bands;
  std::string diagnostic;
};

struct RayOptions {
  int subcells = 32;
  int max_levels = 120;
  double rel_tol = 1e-14;
  double growth_factor = 1.5;
  int growth_run = 3;
};

/// Integrates exp(g(z, A(z))) from z0 towards `boundary` (possibly
/// infinite), where A(z) = int_{z0}^{z} rate(s) ds. The ray is cut at
/// geometrically growing truncations; the integral is declared divergent
/// when successive partial integrals grow by more than `growth_factor`
/// `growth_run` times in a row, convergent when band contributions become
/// negligible, and inconclusive otherwise. Sums are carried in log space.
RayResult integrate_ray(double z0, double boundary,
                        const std::function<double(double)>& rate,
                        const std::function<double(double, double)>& log_integrand,
                        const RayOptions& options = {});

/// log(exp(a) + exp(b)) without overflow.
double log_add(double a, double b);

}  // namespace perpetuity
