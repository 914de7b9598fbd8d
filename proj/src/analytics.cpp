#include "perpetuity/analytics.hpp"

#include "perpetuity/paths.hpp"

#include <boost/math/distributions/inverse_gamma.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace perpetuity {

namespace {

double normal_cdf(double x, double mean, double var) {
  return 0.5 * std::erfc(-(x - mean) / std::sqrt(2.0 * var));
}

}  // namespace

std::string to_string(LawKind k) {
  switch (k) {
    case LawKind::GaussianJoint:
      return "GaussianJoint";
    case LawKind::Gaussian1D:
      return "Gaussian1D";
    case LawKind::InverseGamma:
      return "InverseGamma";
    case LawKind::Empirical:
      return "Empirical";
  }
  return "Empirical";
}

ReferenceLaw ReferenceLaw::gaussian_1d(double mean, double variance) {
  if (!(variance > 0.0)) throw ModelError("gaussian law: variance must be positive");
  ReferenceLaw law;
  law.kind_ = LawKind::Gaussian1D;
  law.mean_ = Vector::Constant(1, mean);
  law.cov_ = Matrix::Constant(1, 1, variance);
  return law;
}

ReferenceLaw ReferenceLaw::gaussian_joint(Vector mean, Matrix cov, int marginal) {
  const Eigen::Index d = mean.size();
  if (cov.rows() != d || cov.cols() != d || marginal < 0 || marginal >= d)
    throw ModelError("gaussian joint law: inconsistent dimensions");
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success)
    throw ModelError("gaussian joint law: covariance is not positive definite");
  ReferenceLaw law;
  law.kind_ = LawKind::GaussianJoint;
  law.mean_ = std::move(mean);
  law.cov_ = std::move(cov);
  law.marginal_ = marginal;
  return law;
}

ReferenceLaw ReferenceLaw::empirical(std::vector<double> samples) {
  if (samples.empty()) throw ModelError("empirical law needs samples");
  std::sort(samples.begin(), samples.end());
  ReferenceLaw law;
  law.kind_ = LawKind::Empirical;
  law.samples_ = std::move(samples);
  return law;
}

double ReferenceLaw::marginal_cdf(int i, double x) const {
  if (kind_ != LawKind::GaussianJoint && kind_ != LawKind::Gaussian1D)
    throw ModelError("marginal_cdf: not a Gaussian law");
  return normal_cdf(x, mean_[i], cov_(i, i));
}

double ReferenceLaw::cdf(double x) const {
  switch (kind_) {
    case LawKind::Gaussian1D:
      return normal_cdf(x, mean_[0], cov_(0, 0));
    case LawKind::GaussianJoint:
      return normal_cdf(x, mean_[marginal_], cov_(marginal_, marginal_));
    case LawKind::InverseGamma:
      if (!(x > 0.0)) return 0.0;
      return boost::math::cdf(boost::math::inverse_gamma_distribution<double>(shape_, scale_), x);
    case LawKind::Empirical: {
      const auto it = std::upper_bound(samples_.begin(), samples_.end(), x);
      return static_cast<double>(it - samples_.begin()) / static_cast<double>(samples_.size());
    }
  }
  return 0.0;
}

double ReferenceLaw::quantile(double u) const {
  if (!(u > 0.0 && u < 1.0)) throw ModelError("quantile level must lie in (0, 1)");
  switch (kind_) {
    case LawKind::Gaussian1D:
    case LawKind::GaussianJoint: {
      const int i = kind_ == LawKind::Gaussian1D ? 0 : marginal_;
      return boost::math::quantile(
          boost::math::normal_distribution<double>(mean_[i], std::sqrt(cov_(i, i))), u);
    }
    case LawKind::InverseGamma:
      return boost::math::quantile(
          boost::math::inverse_gamma_distribution<double>(shape_, scale_), u);
    case LawKind::Empirical: {
      const double pos = u * static_cast<double>(samples_.size() - 1);
      const auto i = static_cast<std::size_t>(pos);
      const double w = pos - static_cast<double>(i);
      return i + 1 < samples_.size() ? (1 - w) * samples_[i] + w * samples_[i + 1]
                                     : samples_.back();
    }
  }
  return 0.0;
}

KSReport ks_distance(std::span<const double> sorted_samples,
                     const std::function<double(double)>& cdf) {
  const std::size_t n = sorted_samples.size();
  if (n == 0) throw ModelError("ks_distance: no samples");
  KSReport rep;
  rep.n_samples = n;
  const double nn = static_cast<double>(n);
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double s = sorted_samples[i];
    if (!std::isfinite(s)) throw NumericalError("ks_distance: non-finite sample");
    if (s < prev) throw ModelError("ks_distance: samples must be sorted");
    prev = s;
    const double F = cdf(s);
    const double gap = std::max(static_cast<double>(i + 1) / nn - F,
                                F - static_cast<double>(i) / nn);
    if (gap > rep.distance) {
      rep.distance = gap;
      rep.argmax_point = s;
    }
  }
  rep.distance = std::clamp(rep.distance, 0.0, 1.0);
  return rep;
}

KSReport ks_distance(std::span<const double> sorted_samples,
                     const ReferenceLaw& reference) {
  return ks_distance(sorted_samples, [&](double x) { return reference.cdf(x); });
}

ReferenceLaw ou_reference_law(double gamma, double a) {
  if (!(gamma > 0.0) || !(a > 0.0))
    throw ModelError("ou_reference_law: gamma and a must be positive");
  Matrix cov(2, 2);
  cov(0, 0) = 1.0 / (2.0 * gamma);
  cov(0, 1) = cov(1, 0) = 1.0 / (2.0 * gamma * (a + gamma));
  cov(1, 1) = 1.0 / (2.0 * gamma * a * (a + gamma));
  return ReferenceLaw::gaussian_joint(Vector::Zero(2), cov, 1);
}

double dufresne_horizon(double nu, double sigma) {
  if (!(nu > 0.0)) throw ModelError("dufresne_horizon: nu must be positive");
  const double b = 5.0 * sigma;
  const double root = (b + std::sqrt(b * b + 4.0 * nu * 20.0)) / (2.0 * nu);
  return root * root;
}

std::vector<double> dufresne_monte_carlo(double nu, double sigma,
                                         const DufresneOptions& options) {
  const double T = options.horizon ? *options.horizon : dufresne_horizon(nu, sigma);
  const auto steps = static_cast<std::size_t>(std::ceil(T / options.delta));
  const double dt = T / static_cast<double>(steps);
  const double sq = std::sqrt(dt);
  std::vector<double> out(options.n_paths);
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      RandomStream rng(options.seed, p, 7);
      double B = 0.0, prev = 1.0, acc = 0.0;
      for (std::size_t i = 1; i <= steps; ++i) {
        B += sq * rng.normal();
        const double next = std::exp(-sigma * B - nu * dt * static_cast<double>(i));
        acc += 0.5 * dt * (prev + next);
        prev = next;
      }
      out[p] = acc;
    }
  };
  const unsigned threads =
      std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(options.n_paths)));
  if (threads == 1) {
    run(0, options.n_paths);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (options.n_paths + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back(run, t * chunk, std::min(options.n_paths, (t + 1) * chunk));
    for (auto& th : pool) th.join();
  }
  return out;
}

ReferenceLaw dufresne_oracle(double nu, double sigma, const DufresneOptions& options) {
  if (!(sigma > 0.0)) throw ModelError("dufresne_oracle: sigma must be positive");
  if (!(2.0 * nu / (sigma * sigma) > 0.0))
    throw ModelError("dufresne_oracle: 2 nu / sigma^2 <= 0, X0 is infinite");
  ReferenceLaw law;
  law.kind_ = LawKind::InverseGamma;
  law.shape_ = 2.0 * nu / (sigma * sigma);
  law.scale_ = 2.0 / (sigma * sigma);

  std::vector<double> samples = dufresne_monte_carlo(nu, sigma, options);
  std::sort(samples.begin(), samples.end());
  const KSReport ks = ks_distance(samples, law);
  OracleValidation v;
  v.n_paths = options.n_paths;
  v.horizon = options.horizon ? *options.horizon : dufresne_horizon(nu, sigma);
  v.delta = options.delta;
  v.seed = options.seed;
  v.ks = ks.distance;
  v.threshold = options.threshold;
  if (!(ks.distance <= options.threshold)) {
    std::ostringstream os;
    os << "dufresne_oracle: brute-force KS " << ks.distance << " exceeds "
       << options.threshold << " for inverse gamma(" << law.shape_ << ", "
       << law.scale_ << ")";
    throw OracleValidationError(os.str());
  }
  law.validation_ = v;
  return law;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw ModelError("percentile of an empty list");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double w = pos - static_cast<double>(i);
  if (i + 1 >= values.size()) return values.back();
  return (1.0 - w) * values[i] + w * values[i + 1];
}

SummaryTable summary_stats(const std::vector<KSReport>& distances,
                           const std::vector<double>& seconds,
                           const std::string& method) {
  if (distances.empty()) throw ModelError("summary_stats: no trials");
  std::vector<double> d;
  for (const auto& r : distances) d.push_back(r.distance);
  SummaryTable t;
  t.method = method;
  t.n = d.size();
  t.median_ks = percentile(d, 0.5);
  t.p01 = percentile(d, 0.01);
  t.p99 = percentile(d, 0.99);
  if (d.size() > 1) {
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(d.size());
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    t.std_ks = std::sqrt(ss / static_cast<double>(d.size() - 1));
  }
  t.median_seconds = seconds.empty() ? 0.0 : percentile(seconds, 0.5);
  return t;
}

nlohmann::json to_json(const SummaryTable& table) {
  return nlohmann::json{{"schema_version", 1},
                        {"method", table.method},
                        {"n_trials", table.n},
                        {"median_ks", table.median_ks},
                        {"std", table.std_ks},
                        {"p99", table.p99},
                        {"p01", table.p01},
                        {"median_seconds", table.median_seconds}};
}

}  // namespace perpetuity
