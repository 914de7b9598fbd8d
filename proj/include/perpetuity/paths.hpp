#pragma once

#include "perpetuity/invariant_density.hpp"
#include "perpetuity/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace perpetuity {

enum class Scheme { EulerMaruyama };

struct PathConfig {
  double horizon_T = 1.0;
  double step_delta = 1.0 / 24.0;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  Scheme scheme = Scheme::EulerMaruyama;
  bool reflect = true;
  double reflection_inset = 1e-8;
  bool keep_increments = true;

  /// Number of steps round(T / delta); throws ModelError on invalid input.
  std::size_t steps() const;
};

/// Independent random stream for (seed, stream_id, substream).
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id,
               std::uint64_t substream = 0);
  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  void fill_normal(Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal_(engine_);
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_;
};

struct ForwardPath {
  double delta = 0.0;
  std::size_t steps = 0;
  Matrix Z;                 // d x (steps + 1); empty when not stored
  std::vector<double> R;    // log-discount, R[0] = 0; empty when not stored
  Vector Z0;
  Vector Z_end;
  double R_end = 0.0;
  double X0_truncated = 0.0;
  std::size_t reflections = 0;

  double time(std::size_t i) const { return static_cast<double>(i) * delta; }
};

/// Draws a starting state from the invariant density: Gaussian laws by an
/// affine map of standard normals, 1-D tables by inverse CDF. Throws
/// UnsupportedDensityError otherwise.
Vector sample_initial(const InvariantDensity& density, RandomStream& rng);

/// Euler-Maruyama simulation of (Z, R) on [0, T] with the trapezoid
/// perpetuity truncated at T. Z0 is taken from `z0` or, when absent, drawn
/// from `density` using the path's own stream.
ForwardPath simulate_forward(const ModelSpec& spec, const PathConfig& config,
                             const std::optional<Vector>& z0,
                             const InvariantDensity* density = nullptr,
                             bool store_path = true);

enum class ReversalMethod { A, B };

std::string to_string(ReversalMethod m);

/// One run of the reversed system. Delta is kept as log_delta; chi^x at
/// grid index i is exp(log_delta[i]) * x + offset[i].
struct ReversedPath {
  ReversalMethod method = ReversalMethod::A;
  double delta = 0.0;
  std::size_t steps = 0;
  Matrix zeta;                    // d x (steps + 1)
  std::vector<double> log_delta;  // log Delta, log_delta[0] = 0
  std::vector<double> offset;     // Delta_t * int_0^t f(zeta)/Delta (trapezoid)
  std::vector<double> x_values;
  std::vector<std::vector<double>> chi;  // chi[j][i] for x_values[j]
  Matrix increments_W;  // d x steps (Method A only)
  Matrix increments_B;  // k x steps
  std::size_t reflections = 0;
  double burn_in = 0.0;  // Method B: length of the discarded forward run
  std::vector<std::string> warnings;

  double time(std::size_t i) const { return static_cast<double>(i) * delta; }
  double Delta(std::size_t i) const { return std::exp(log_delta[i]); }
  double chi_at(double x, std::size_t i) const {
    return std::exp(log_delta[i]) * x + offset[i];
  }
};

/// Method A: zeta_0 ~ p, zeta stepped with drift c score + div c - m.
ReversedPath simulate_reversed(const ModelSpec& spec,
                               const InvariantDensity& density,
                               const PathConfig& config,
                               const std::vector<double>& x_values);

/// Method B: simulates Z on [0, 2T] from z0 and sets zeta_t = Z_{2T - t};
/// the discount noise B is drawn from a fresh independent substream.
ReversedPath reverse_from_forward(const ModelSpec& spec, const PathConfig& config,
                                  const Vector& z0,
                                  const std::vector<double>& x_values);

/// Builds log Delta and the chi offsets from a zeta path (shared by both
/// methods). `dB` must be k x steps.
void build_discount(const ModelSpec& spec, ReversedPath& path, const Matrix& dB);

/// Lag autocorrelation of zeta coordinate `coord` at a lag given in time
/// units (mixing diagnostic for Method B).
double lag_autocorrelation(const ReversedPath& path, double lag_time, int coord = 0);

/// Binary dump: magic "PRPT", u32 version, u32 d, u32 k, u64 steps, f64
/// delta, then zeta (column per time), log_delta, offset, u32 count of x
/// values, x values and chi arrays. All little-endian.
void write_path_dump(const ReversedPath& path, int noise_dim,
                     const std::filesystem::path& file);

}  // namespace perpetuity
