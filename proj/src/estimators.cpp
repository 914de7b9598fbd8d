#include "perpetuity/estimators.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <thread>

namespace perpetuity {

std::string to_string(MeasureKind k) {
  return k == MeasureKind::TimeAverage ? "TimeAverage" : "IID";
}

EmpiricalJointMeasure::EmpiricalJointMeasure(MeasureKind kind, Matrix factors,
                                             std::vector<double> perpetuity,
                                             double total)
    : kind_(kind),
      factors_(std::move(factors)),
      perpetuity_(std::move(perpetuity)),
      total_(total),
      cache_(std::make_shared<Cache>()) {
  if (perpetuity_.empty()) throw ModelError("empirical measure needs at least one sample");
  if (static_cast<std::size_t>(factors_.cols()) != perpetuity_.size())
    throw ModelError("empirical measure: factor and perpetuity sample counts differ");
  cache_->sorted.resize(static_cast<std::size_t>(factors_.rows()) + 1);
}

const std::vector<double>& EmpiricalJointMeasure::sorted(Marginal which) const {
  const std::size_t slot =
      which.perpetuity ? 0 : static_cast<std::size_t>(which.coord) + 1;
  if (!which.perpetuity && (which.coord < 0 || which.coord >= dim()))
    throw ModelError("marginal index out of range");
  std::lock_guard<std::mutex> lock(cache_->mutex);
  auto& entry = cache_->sorted[slot];
  if (!entry) {
    std::vector<double> v;
    if (which.perpetuity) {
      v = perpetuity_;
    } else {
      const auto row = factors_.row(which.coord);
      v.assign(row.begin(), row.end());
    }
    std::sort(v.begin(), v.end());
    entry = std::make_unique<std::vector<double>>(std::move(v));
  }
  return *entry;
}

void EmpiricalJointMeasure::merge(const EmpiricalJointMeasure& other) {
  if (kind_ != MeasureKind::IID || other.kind_ != MeasureKind::IID)
    throw ModelError("only IID measures can be merged");
  if (other.dim() != dim()) throw ModelError("merge: dimension mismatch");
  Matrix f(dim(), factors_.cols() + other.factors_.cols());
  f << factors_, other.factors_;
  factors_ = std::move(f);
  perpetuity_.insert(perpetuity_.end(), other.perpetuity_.begin(),
                     other.perpetuity_.end());
  total_ += other.total_;
  cache_ = std::make_shared<Cache>();
  cache_->sorted.resize(static_cast<std::size_t>(dim()) + 1);
}

Histogram2D EmpiricalJointMeasure::histogram(int z_bins, int x_bins, int coord) const {
  if (z_bins < 1 || x_bins < 1) throw ModelError("histogram needs at least one bin");
  const auto& zs = sorted(Marginal::Factor(coord));
  const auto& xs = sorted(Marginal::Perpetuity());
  Histogram2D h;
  auto edges = [](double lo, double hi, int n) {
    if (!(hi > lo)) hi = lo + 1.0;
    std::vector<double> e(n + 1);
    for (int i = 0; i <= n; ++i) e[i] = lo + (hi - lo) * i / n;
    return e;
  };
  h.z_edges = edges(zs.front(), zs.back(), z_bins);
  h.x_edges = edges(xs.front(), xs.back(), x_bins);
  h.mass = Matrix::Zero(z_bins, x_bins);
  auto bin = [](const std::vector<double>& e, double v) {
    const int n = static_cast<int>(e.size()) - 1;
    const int i = static_cast<int>((v - e.front()) / (e.back() - e.front()) * n);
    return std::clamp(i, 0, n - 1);
  };
  const double w = weight();
  for (std::size_t s = 0; s < size(); ++s)
    h.mass(bin(h.z_edges, factors_(coord, static_cast<Eigen::Index>(s))),
           bin(h.x_edges, perpetuity_[s])) += w;
  return h;
}

std::pair<Vector, Matrix> EmpiricalJointMeasure::moments() const {
  const int d = dim();
  const std::size_t n = size();
  Vector mean = Vector::Zero(d + 1);
  for (std::size_t s = 0; s < n; ++s) {
    mean.head(d) += factors_.col(static_cast<Eigen::Index>(s));
    mean[d] += perpetuity_[s];
  }
  mean /= static_cast<double>(n);
  Matrix cov = Matrix::Zero(d + 1, d + 1);
  Vector u(d + 1);
  for (std::size_t s = 0; s < n; ++s) {
    u.head(d) = factors_.col(static_cast<Eigen::Index>(s)) - mean.head(d);
    u[d] = perpetuity_[s] - mean[d];
    cov += u * u.transpose();
  }
  cov /= static_cast<double>(n);
  return {mean, cov};
}

std::vector<double> ecdf_eval(const EmpiricalJointMeasure& measure,
                              Marginal which, std::span<const double> points) {
  if (!std::is_sorted(points.begin(), points.end()))
    throw ModelError("ecdf_eval: evaluation points must be sorted ascending");
  const auto& s = measure.sorted(which);
  std::vector<double> out(points.size());
  const double n = static_cast<double>(s.size());
  auto it = s.begin();
  for (std::size_t i = 0; i < points.size(); ++i) {
    it = std::upper_bound(it, s.end(), points[i]);
    out[i] = static_cast<double>(it - s.begin()) / n;
  }
  return out;
}

EmpiricalJointMeasure measure_from_path(const ReversedPath& path,
                                        std::size_t x_index) {
  if (x_index >= path.x_values.size())
    throw ModelError("measure_from_path: no chi array for that start value");
  const std::size_t n = path.steps;
  if (n == 0) throw ModelError("measure_from_path: empty path");
  const std::size_t stride = (n + kMaxMeasureSamples - 1) / kMaxMeasureSamples;
  const std::size_t count = (n + stride - 1) / stride;
  Matrix f(path.zeta.rows(), static_cast<Eigen::Index>(count));
  std::vector<double> x(count);
  // t in (0, T]: grid indices n, n - stride, ... keep the end point.
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t i = n - j * stride;
    f.col(static_cast<Eigen::Index>(count - 1 - j)) = path.zeta.col(static_cast<Eigen::Index>(i));
    x[count - 1 - j] = path.chi[x_index][i];
  }
  EmpiricalJointMeasure m(MeasureKind::TimeAverage, std::move(f), std::move(x),
                          static_cast<double>(n) * path.delta);
  if (stride > 1)
    m.notes.push_back("thinned by stride " + std::to_string(stride));
  for (const auto& w : path.warnings) m.notes.push_back(w);
  return m;
}

EmpiricalJointMeasure estimate_reversal(const ModelSpec& spec,
                                        const PathConfig& config, double x,
                                        const ReversalRequest& request) {
  if (!(x > 0.0)) throw ModelError("estimate_reversal: x must be positive");
  std::vector<std::string> warnings;
  std::optional<FinitenessVerdict> computed;
  const FinitenessVerdict* verdict = request.verdict;
  if (!verdict && request.density) {
    computed = check_finiteness(spec, *request.density);
    verdict = &*computed;
  }
  if (verdict) {
    if (verdict->verdict == Finiteness::AlmostSurelyInfinite)
      throw ModelError("estimate_reversal: X0 is almost surely infinite for this model");
    if (verdict->verdict == Finiteness::Inconclusive)
      warnings.push_back("finiteness of X0 is not established: " + verdict->diagnostic);
  }
  ReversedPath path;
  if (request.method == ReversalMethod::A) {
    if (!request.density) throw ModelError("Method A requires an invariant density");
    path = simulate_reversed(spec, *request.density, config, {x});
  } else {
    const Vector z0 = request.z0 ? *request.z0 : reference_point(spec);
    path = reverse_from_forward(spec, config, z0, {x});
  }
  path.warnings.insert(path.warnings.end(), warnings.begin(), warnings.end());
  if (path.reflections > 0)
    path.warnings.push_back("reflections: " + std::to_string(path.reflections));
  return measure_from_path(path, 0);
}

double naive_truncation_horizon(std::optional<double> kappa) {
  if (kappa && *kappa > 0.0) return std::max(100.0, 20.0 / *kappa);
  return 100.0;
}

EmpiricalJointMeasure estimate_naive(const ModelSpec& spec,
                                     const InvariantDensity& density,
                                     const PathConfig& config,
                                     std::size_t n_paths, unsigned threads,
                                     std::size_t first_path) {
  if (n_paths == 0) throw ModelError("estimate_naive: need at least one path");
  const int d = spec.dim();
  Matrix factors(d, static_cast<Eigen::Index>(n_paths));
  std::vector<double> values(n_paths);
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      PathConfig cfg = config;
      cfg.stream_id = (config.stream_id << 32) + first_path + i;
      const ForwardPath p = simulate_forward(spec, cfg, std::nullopt, &density, false);
      factors.col(static_cast<Eigen::Index>(i)) = p.Z0;
      values[i] = p.X0_truncated;
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n_paths)));
  if (threads == 1) {
    run(0, n_paths);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (n_paths + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(n_paths, b + chunk);
      pool.emplace_back([&, t, b, e] {
        try {
          run(b, e);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  EmpiricalJointMeasure m(MeasureKind::IID, std::move(factors), std::move(values),
                          static_cast<double>(n_paths));
  return m;
}

void write_ecdf_csv(const EmpiricalJointMeasure& measure, Marginal which,
                    const std::filesystem::path& file) {
  std::FILE* out = std::fopen(file.string().c_str(), "w");
  if (!out) throw Error("cannot write " + file.string());
  std::fprintf(out, "point,F\n");
  const auto& s = measure.sorted(which);
  const double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 1 < s.size() && s[i + 1] == s[i]) continue;
    std::fprintf(out, "%.17g,%.17g\n", s[i], static_cast<double>(i + 1) / n);
  }
  std::fclose(out);
}

void write_hist2d_csv(const Histogram2D& hist, const std::filesystem::path& file) {
  std::FILE* out = std::fopen(file.string().c_str(), "w");
  if (!out) throw Error("cannot write " + file.string());
  std::fprintf(out, "z_bin_lo,x_bin_lo,mass\n");
  for (Eigen::Index i = 0; i < hist.mass.rows(); ++i)
    for (Eigen::Index j = 0; j < hist.mass.cols(); ++j)
      std::fprintf(out, "%.17g,%.17g,%.17g\n", hist.z_edges[static_cast<std::size_t>(i)],
                   hist.x_edges[static_cast<std::size_t>(j)], hist.mass(i, j));
  std::fclose(out);
}

}  // namespace perpetuity
