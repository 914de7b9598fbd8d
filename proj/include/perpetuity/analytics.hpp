#pragma once

#include "perpetuity/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace perpetuity {

struct KSReport {
  double distance = 0.0;
  double argmax_point = 0.0;
  std::size_t n_samples = 0;
};

enum class LawKind { GaussianJoint, Gaussian1D, InverseGamma, Empirical };

std::string to_string(LawKind k);

/// Record of the brute-force Monte Carlo check a reference law passed.
struct OracleValidation {
  std::size_t n_paths = 0;
  double horizon = 0.0;
  double delta = 0.0;
  std::uint64_t seed = 0;
  double ks = 0.0;
  double threshold = 0.0;
};

struct DufresneOptions {
  std::size_t n_paths = 100'000;
  double delta = 1.0 / 50.0;
  std::optional<double> horizon;  // default: dufresne_horizon(nu, sigma)
  std::uint64_t seed = 20240601;
  unsigned threads = 1;
  double threshold = 0.02;
};

class ReferenceLaw;

/// Inverse-gamma law of int_0^inf exp(-sigma B_t - nu t) dt with shape
/// 2 nu / sigma^2 and scale 2 / sigma^2, handed out only after the
/// brute-force samples agree with it (KS <= options.threshold). Throws
/// OracleValidationError otherwise and ModelError when 2 nu / sigma^2 <= 0.
ReferenceLaw dufresne_oracle(double nu, double sigma,
                             const DufresneOptions& options = {});

class ReferenceLaw {
 public:
  static ReferenceLaw gaussian_1d(double mean, double variance);
  /// Joint Gaussian; cdf() refers to coordinate `marginal`.
  static ReferenceLaw gaussian_joint(Vector mean, Matrix cov, int marginal);
  static ReferenceLaw empirical(std::vector<double> samples);

  LawKind kind() const { return kind_; }
  double cdf(double x) const;
  /// Marginal CDF of coordinate i (Gaussian laws).
  double marginal_cdf(int i, double x) const;
  double quantile(double u) const;

  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  double shape() const { return shape_; }
  double scale() const { return scale_; }
  const std::optional<OracleValidation>& validation() const { return validation_; }

 private:
  friend ReferenceLaw dufresne_oracle(double, double, const DufresneOptions&);
  ReferenceLaw() = default;

  LawKind kind_ = LawKind::Gaussian1D;
  Vector mean_;
  Matrix cov_;
  int marginal_ = 0;
  double shape_ = 0.0;
  double scale_ = 0.0;
  std::vector<double> samples_;
  std::optional<OracleValidation> validation_;
};

/// Exact one-sample KS distance of sorted samples against a CDF.
KSReport ks_distance(std::span<const double> sorted_samples,
                     const std::function<double(double)>& cdf);
KSReport ks_distance(std::span<const double> sorted_samples,
                     const ReferenceLaw& reference);

/// Joint law of (Z0, X0) for dZ = -gamma Z dt + dW, a constant, f(z) = z.
ReferenceLaw ou_reference_law(double gamma, double a);

/// Horizon T with nu T - 5 sigma sqrt(T) = 20, past which the discount
/// factor exp(-sigma B_T - nu T) is below e^-20 except on a 5-sigma event.
double dufresne_horizon(double nu, double sigma);

/// Brute-force samples of int_0^T exp(-sigma B_t - nu t) dt (trapezoid).
std::vector<double> dufresne_monte_carlo(double nu, double sigma,
                                         const DufresneOptions& options);

struct SummaryTable {
  std::string method;
  std::size_t n = 0;
  double median_ks = 0.0;
  double std_ks = 0.0;
  double p99 = 0.0;
  double p01 = 0.0;
  double median_seconds = 0.0;
};

/// Percentile with linear interpolation at rank p (n - 1).
double percentile(std::vector<double> values, double p);

SummaryTable summary_stats(const std::vector<KSReport>& distances,
                           const std::vector<double>& seconds,
                           const std::string& method = {});

nlohmann::json to_json(const SummaryTable& table);

}  // namespace perpetuity
