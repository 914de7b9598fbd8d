#include "perpetuity/paths.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace perpetuity {

namespace {

std::uint32_t lo32(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
std::uint32_t hi32(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

// Reflects z back into the domain shrunk by `inset`; returns the number of
// coordinates reflected.
int reflect_into(const StateDomain& dom, double inset, Vector& z) {
  int count = 0;
  for (int i = 0; i < dom.dim; ++i) {
    const double lo = dom.lower[i] + inset, hi = dom.upper[i] - inset;
    if (z[i] < lo) {
      z[i] = 2.0 * lo - z[i];
      ++count;
    } else if (z[i] > hi) {
      z[i] = 2.0 * hi - z[i];
      ++count;
    }
    z[i] = std::clamp(z[i], lo, hi);
  }
  return count;
}

void keep_inside(const ModelSpec& spec, const PathConfig& cfg, Vector& z,
                 double t, std::size_t& reflections) {
  if (!cfg.reflect) {
    if (spec.domain.contains(z)) return;
    std::ostringstream os;
    os << "state (" << z.transpose() << ") left the domain at t = " << t;
    throw DomainExitError(os.str(), t);
  }
  reflections += static_cast<std::size_t>(
      reflect_into(spec.domain, cfg.reflection_inset, z));
}

template <typename T>
void put(std::ofstream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

}  // namespace

std::size_t PathConfig::steps() const {
  if (!(horizon_T > 0.0) || !(step_delta > 0.0) || !std::isfinite(horizon_T))
    throw ModelError("path config: horizon and step must be positive");
  if (step_delta > horizon_T)
    throw ModelError("path config: step larger than horizon");
  const double n = std::round(horizon_T / step_delta);
  if (n > 1e12) throw ModelError("path config: too many steps");
  return static_cast<std::size_t>(n);
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id,
                           std::uint64_t substream)
    : normal_(0.0, 1.0), uniform_(0.0, 1.0) {
  std::seed_seq seq{lo32(seed),      hi32(seed),     lo32(stream_id),
                    hi32(stream_id), lo32(substream), hi32(substream)};
  engine_.seed(seq);
}

std::string to_string(ReversalMethod m) { return m == ReversalMethod::A ? "A" : "B"; }

Vector sample_initial(const InvariantDensity& density, RandomStream& rng) {
  if (density.gaussian) {
    const auto& g = *density.gaussian;
    const Eigen::LLT<Matrix> llt(g.cov);
    const Matrix L = llt.matrixL();
    if (llt.info() != Eigen::Success || !(L.diagonal().minCoeff() > 0.0))
      throw UnsupportedDensityError(
          "sample_initial: degenerate Gaussian law (point mass); use Method B");
    Vector xi(g.mean.size());
    rng.fill_normal(xi);
    return g.mean + L * xi;
  }
  if (density.table && density.dim == 1) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    return Vector::Constant(1, density.table->quantile_at(u));
  }
  throw UnsupportedDensityError(
      "sample_initial: density cannot be sampled directly; use Method B");
}

ForwardPath simulate_forward(const ModelSpec& spec, const PathConfig& config,
                             const std::optional<Vector>& z0,
                             const InvariantDensity* density, bool store_path) {
  const std::size_t n = config.steps();
  const int d = spec.dim(), k = spec.noise_dim;
  RandomStream rng(config.seed, config.stream_id, 0);
  ForwardPath path;
  path.delta = config.step_delta;
  path.steps = n;
  if (z0) {
    path.Z0 = *z0;
  } else {
    if (!density) throw ModelError("simulate_forward: need z0 or a density");
    path.Z0 = sample_initial(*density, rng);
  }
  if (path.Z0.size() != d || !spec.domain.contains(path.Z0))
    throw ModelError("simulate_forward: starting state outside the domain");
  if (store_path) {
    path.Z.resize(d, static_cast<Eigen::Index>(n + 1));
    path.Z.col(0) = path.Z0;
    path.R.assign(n + 1, 0.0);
  }
  const double dt = config.step_delta, sq = std::sqrt(dt);
  Vector z = path.Z0, dW(d), dB(k);
  double R = 0.0;
  double prev = spec.f(z);  // e^{-R} f(Z) at the left node
  double X = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rng.fill_normal(dW);
    dW *= sq;
    if (k > 0) {
      rng.fill_normal(dB);
      dB *= sq;
    }
    const Vector m = spec.m(z);
    const Matrix s = spec.sigma(z);
    double dR = spec.a(z) * dt;
    if (spec.has_theta()) {
      const Vector th = spec.theta(z);
      dR += 0.5 * th.dot(spec.c(z) * th) * dt + th.dot(s * dW);
    }
    if (spec.has_eta()) {
      const Vector et = spec.eta(z);
      dR += 0.5 * et.squaredNorm() * dt + et.dot(dB);
    }
    z += m * dt + s * dW;
    keep_inside(spec, config, z, (i + 1) * dt, path.reflections);
    R += dR;
    const double next = std::exp(-R) * spec.f(z);
    X += 0.5 * dt * (prev + next);
    prev = next;
    if (store_path) {
      path.Z.col(static_cast<Eigen::Index>(i + 1)) = z;
      path.R[i + 1] = R;
    }
  }
  path.Z_end = z;
  path.R_end = R;
  path.X0_truncated = X;
  return path;
}

void build_discount(const ModelSpec& spec, ReversedPath& path, const Matrix& dB) {
  const std::size_t n = path.steps;
  const double dt = path.delta;
  path.log_delta.assign(n + 1, 0.0);
  path.offset.assign(n + 1, 0.0);
  std::vector<double> f(n + 1);
  for (std::size_t i = 0; i <= n; ++i)
    f[i] = spec.f(path.zeta.col(static_cast<Eigen::Index>(i)));
  for (std::size_t i = 0; i < n; ++i) {
    const Vector z = path.zeta.col(static_cast<Eigen::Index>(i));
    double inc = -spec.a(z) * dt;
    if (spec.has_theta()) {
      const Vector th = spec.theta(z);
      const Vector dz = path.zeta.col(static_cast<Eigen::Index>(i + 1)) - z;
      inc += (th.dot(spec.m(z) - spec.div_c(z)) + spec.div_c_theta(z)) * dt;
      inc += th.dot(dz) - 0.5 * th.dot(spec.c(z) * th) * dt;
    }
    if (spec.has_eta()) {
      const Vector et = spec.eta(z);
      inc += et.dot(dB.col(static_cast<Eigen::Index>(i))) - 0.5 * et.squaredNorm() * dt;
    }
    path.log_delta[i + 1] = path.log_delta[i] + inc;
    const double r = std::exp(inc);
    if (!std::isfinite(path.log_delta[i + 1]) || !std::isfinite(r)) {
      std::ostringstream os;
      os << "log Delta left the representable range at t = " << (i + 1) * dt
         << "; inspect log_delta and the discount coefficients";
      throw NumericalError(os.str());
    }
    path.offset[i + 1] = r * (path.offset[i] + 0.5 * dt * f[i]) + 0.5 * dt * f[i + 1];
  }
  path.chi.assign(path.x_values.size(), std::vector<double>(n + 1));
  for (std::size_t j = 0; j < path.x_values.size(); ++j)
    for (std::size_t i = 0; i <= n; ++i)
      path.chi[j][i] = path.chi_at(path.x_values[j], i);
}

ReversedPath simulate_reversed(const ModelSpec& spec,
                               const InvariantDensity& density,
                               const PathConfig& config,
                               const std::vector<double>& x_values) {
  const std::size_t n = config.steps();
  const int d = spec.dim(), k = spec.noise_dim;
  if (density.dim != d) throw ModelError("simulate_reversed: dimension mismatch");
  if (!density.score) throw ModelError("simulate_reversed: density has no score");
  RandomStream rng(config.seed, config.stream_id, 0);
  ReversedPath path;
  path.method = ReversalMethod::A;
  path.delta = config.step_delta;
  path.steps = n;
  path.x_values = x_values;
  path.zeta.resize(d, static_cast<Eigen::Index>(n + 1));
  Matrix dBs(k, static_cast<Eigen::Index>(n));
  if (config.keep_increments) path.increments_W.resize(d, static_cast<Eigen::Index>(n));

  Vector z = sample_initial(density, rng);
  if (!spec.domain.contains(z)) keep_inside(spec, config, z, 0.0, path.reflections);
  path.zeta.col(0) = z;
  const double dt = config.step_delta, sq = std::sqrt(dt);
  Vector dW(d), dB(k);
  for (std::size_t i = 0; i < n; ++i) {
    rng.fill_normal(dW);
    dW *= sq;
    if (k > 0) {
      rng.fill_normal(dB);
      dB *= sq;
      dBs.col(static_cast<Eigen::Index>(i)) = dB;
    }
    const Vector score = density.score(z);
    if (!score.allFinite()) {
      std::ostringstream os;
      os << "score evaluation failed at (" << z.transpose() << ")";
      throw NumericalError(os.str());
    }
    const Vector mu = spec.c(z) * score + spec.div_c(z) - spec.m(z);
    z += mu * dt + spec.sigma(z) * dW;
    keep_inside(spec, config, z, (i + 1) * dt, path.reflections);
    path.zeta.col(static_cast<Eigen::Index>(i + 1)) = z;
    if (config.keep_increments) path.increments_W.col(static_cast<Eigen::Index>(i)) = dW;
  }
  build_discount(spec, path, dBs);
  if (config.keep_increments) path.increments_B = std::move(dBs);
  return path;
}

ReversedPath reverse_from_forward(const ModelSpec& spec, const PathConfig& config,
                                  const Vector& z0,
                                  const std::vector<double>& x_values) {
  const std::size_t n = config.steps();
  const int k = spec.noise_dim;
  PathConfig twice = config;
  twice.horizon_T = 2.0 * static_cast<double>(n) * config.step_delta;
  const ForwardPath fwd = simulate_forward(spec, twice, z0, nullptr, true);

  ReversedPath path;
  path.method = ReversalMethod::B;
  path.delta = config.step_delta;
  path.steps = n;
  path.x_values = x_values;
  path.burn_in = static_cast<double>(n) * config.step_delta;
  path.reflections = fwd.reflections;
  path.zeta.resize(spec.dim(), static_cast<Eigen::Index>(n + 1));
  for (std::size_t j = 0; j <= n; ++j)
    path.zeta.col(static_cast<Eigen::Index>(j)) =
        fwd.Z.col(static_cast<Eigen::Index>(2 * n - j));

  RandomStream rng(config.seed, config.stream_id, 1);
  Matrix dBs(k, static_cast<Eigen::Index>(n));
  const double sq = std::sqrt(config.step_delta);
  for (std::size_t i = 0; i < n; ++i)
    for (int r = 0; r < k; ++r) dBs(r, static_cast<Eigen::Index>(i)) = sq * rng.normal();
  build_discount(spec, path, dBs);
  if (config.keep_increments) path.increments_B = std::move(dBs);
  return path;
}

double lag_autocorrelation(const ReversedPath& path, double lag_time, int coord) {
  const std::size_t len = path.steps + 1;
  const auto lag = static_cast<std::size_t>(std::llround(lag_time / path.delta));
  if (lag >= len) throw ModelError("lag_autocorrelation: lag exceeds the path");
  const auto row = path.zeta.row(coord);
  const double mean = row.mean();
  double var = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const double u = row[static_cast<Eigen::Index>(i)] - mean;
    var += u * u;
    if (i + lag < len) cov += u * (row[static_cast<Eigen::Index>(i + lag)] - mean);
  }
  if (!(var > 0.0)) return 1.0;
  return (cov / static_cast<double>(len - lag)) / (var / static_cast<double>(len));
}

void write_path_dump(const ReversedPath& path, int noise_dim,
                     const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot open path dump " + file.string());
  out.write("PRPT", 4);
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(path.zeta.rows()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(noise_dim));
  put<std::uint64_t>(out, path.steps);
  put<double>(out, path.delta);
  for (Eigen::Index i = 0; i < path.zeta.cols(); ++i)
    for (Eigen::Index r = 0; r < path.zeta.rows(); ++r) put<double>(out, path.zeta(r, i));
  for (double v : path.log_delta) put<double>(out, v);
  for (double v : path.offset) put<double>(out, v);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(path.x_values.size()));
  for (double v : path.x_values) put<double>(out, v);
  for (const auto& c : path.chi)
    for (double v : c) put<double>(out, v);
}

}  // namespace perpetuity
