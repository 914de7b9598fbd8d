#include "perpetuity/analytics.hpp"
#include "perpetuity/paths.hpp"

#include <boost/math/distributions/gamma.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace perpetuity;

namespace {

constexpr double kDelta = 1.0 / 24.0;

DiscountSpec discount(double a, double f, double eta = 0.0) {
  DiscountSpec d;
  d.rate = constant_scalar(a);
  d.cashflow = constant_scalar(f);
  if (eta != 0.0) {
    d.eta = constant_vector(Vector::Constant(1, eta));
    d.noise_dim = 1;
  }
  return d;
}

PathConfig config(double T, std::uint64_t seed, double delta = kDelta) {
  PathConfig pc;
  pc.horizon_T = T;
  pc.step_delta = delta;
  pc.seed = seed;
  return pc;
}

ModelSpec frozen_model() {
  return make_constant_model(StateDomain::full_space(1), Vector::Zero(1), Matrix::Zero(1, 1),
                             discount(1.0, 1.0));
}

}  // namespace

TEST(PathConfig, StepCountAndValidation) {
  EXPECT_EQ(config(10'000.0, 1).steps(), 240'000u);
  PathConfig bad = config(1.0, 1);
  bad.step_delta = 2.0;
  EXPECT_THROW(bad.steps(), ModelError);
}

TEST(RandomStream, StreamsDiffer) {
  RandomStream a(1, 0), b(1, 1), c(1, 0, 1), a2(1, 0);
  const double x = a.normal();
  EXPECT_NE(x, b.normal());
  EXPECT_NE(x, c.normal());
  EXPECT_EQ(x, a2.normal());
}

TEST(SimulateForward, DeterministicDiscount) {
  const double T = 20.0;
  const ForwardPath p = simulate_forward(make_ou_model_1d(1.0, 1.0, discount(1.0, 1.0)),
                                         config(T, 3), Vector::Zero(1));
  EXPECT_EQ(p.R.front(), 0.0);
  EXPECT_NEAR(p.R_end, T, 1e-9);
  // Trapezoid error for int e^-t: delta^2 / 12 per unit length.
  EXPECT_NEAR(p.X0_truncated, 1.0 - std::exp(-T), kDelta * kDelta);
}

TEST(SimulateForward, FrozenFactorStaysPut) {
  const ForwardPath p = simulate_forward(frozen_model(), config(5.0, 3), Vector::Constant(1, 0.7));
  EXPECT_TRUE((p.Z.array() == 0.7).all());
}

TEST(SimulateForward, OuPerpetuityVariance) {
  const ModelSpec spec = make_ou_perpetuity_example(2.0, 1.0);
  const InvariantDensity p = default_density(spec);
  std::vector<double> x;
  double mean = 0.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    PathConfig pc = config(100.0, 17);
    pc.stream_id = static_cast<std::uint64_t>(i);
    x.push_back(simulate_forward(spec, pc, std::nullopt, &p, false).X0_truncated);
    mean += x.back() / n;
  }
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean) / (n - 1);
  // Var X0 = 1 / (2 gamma a (a + gamma)) = 1/12.
  EXPECT_NEAR(var / (1.0 / 12.0), 1.0, 0.1);
}

TEST(SimulateForward, ReproducibleBitForBit) {
  const ModelSpec spec = make_cir_model(1.0, 1.0, 0.5, discount(1.0, 1.0, 0.3));
  const ForwardPath a = simulate_forward(spec, config(50.0, 9), Vector::Constant(1, 1.0));
  const ForwardPath b = simulate_forward(spec, config(50.0, 9), Vector::Constant(1, 1.0));
  EXPECT_TRUE(a.Z == b.Z);
  EXPECT_EQ(a.R, b.R);
  EXPECT_EQ(a.X0_truncated, b.X0_truncated);
}

TEST(SimulateForward, ExitWithoutReflectionThrows) {
  const ModelSpec spec = make_cir_model(1.0, 0.05, 2.0, discount(1.0, 1.0));
  PathConfig pc = config(50.0, 5);
  pc.reflect = false;
  EXPECT_THROW(simulate_forward(spec, pc, Vector::Constant(1, 0.05)), DomainExitError);
  pc.reflect = true;
  const ForwardPath p = simulate_forward(spec, pc, Vector::Constant(1, 0.05));
  EXPECT_GT(p.reflections, 0u);
  EXPECT_GT(p.Z.minCoeff(), 0.0);
}

TEST(SimulateReversed, DegenerateDiscountIsExpOfRateIntegral) {
  DiscountSpec d;
  d.rate = polynomial_scalar({1.0, 0.0, 0.5});
  d.cashflow = constant_scalar(1.0);
  const ModelSpec spec = make_ou_model_1d(2.0, 1.0, d);
  const InvariantDensity p = default_density(spec);
  const ReversedPath path = simulate_reversed(spec, p, config(10.0, 4), {1.0});
  double integral = 0.0;
  for (std::size_t i = 0; i < path.steps; ++i)
    integral += spec.a(path.zeta.col(static_cast<Eigen::Index>(i))) * kDelta;
  EXPECT_EQ(path.log_delta.front(), 0.0);
  EXPECT_NEAR(path.log_delta.back(), -integral, 1e-9 * integral);
}

TEST(SimulateReversed, OuReversedDriftEqualsForwardDrift) {
  const ModelSpec spec = make_ou_perpetuity_example(2.0, 1.0);
  const InvariantDensity p = default_density(spec);
  for (double z : {-1.0, 0.2, 0.9}) {
    const Vector v = Vector::Constant(1, z);
    const double reversed = spec.c(v)(0, 0) * p.score(v)[0] + spec.div_c(v)[0] - spec.m(v)[0];
    EXPECT_NEAR(reversed, spec.m(v)[0], 1e-9);
  }
}

TEST(SimulateReversed, ChiLinearInStart) {
  const ModelSpec spec = make_ou_perpetuity_example(2.0, 1.0);
  const InvariantDensity p = default_density(spec);
  const ReversedPath path = simulate_reversed(spec, p, config(50.0, 8), {1.0, 5.0});
  EXPECT_EQ(path.chi[0].front(), 1.0);
  for (std::size_t i = 0; i <= path.steps; ++i) {
    const double diff = path.chi[1][i] - path.chi[0][i];
    EXPECT_NEAR(diff, 4.0 * path.Delta(i), 1e-14 * std::max(1.0, std::abs(path.chi[1][i])));
  }
}

TEST(SimulateReversed, DeltaMatchesDirectEuler) {
  // theta = 0, eta = 0.5: dDelta = Delta (-a dt + eta dB).
  const double eta = 0.5, a = 1.0;
  const ModelSpec spec = make_ou_model_1d(2.0, 1.0, discount(a, 1.0, eta));
  const ReversedPath path = simulate_reversed(spec, default_density(spec), config(100.0, 12), {1.0});
  ASSERT_EQ(static_cast<std::size_t>(path.increments_B.cols()), path.steps);
  double euler = 1.0, worst = 0.0;
  for (std::size_t i = 0; i < path.steps; ++i) {
    euler *= 1.0 - a * kDelta + eta * path.increments_B(0, static_cast<Eigen::Index>(i));
    const double t = path.time(i + 1);
    worst = std::max(worst, std::abs(std::log(euler) - path.log_delta[i + 1]) / (1.0 + t));
  }
  EXPECT_LE(worst, 10.0 * kDelta);
}

TEST(SimulateReversed, ReproducibleBitForBit) {
  const ModelSpec spec = make_cir_model(1.0, 1.0, 0.5, discount(1.0, 1.0, 0.3));
  const InvariantDensity p = default_density(spec);
  const ReversedPath a = simulate_reversed(spec, p, config(20.0, 2), {1.0});
  const ReversedPath b = simulate_reversed(spec, p, config(20.0, 2), {1.0});
  EXPECT_TRUE(a.zeta == b.zeta);
  EXPECT_EQ(a.chi, b.chi);
}

TEST(ReverseFromForward, FrozenFactorIsConstant) {
  const ReversedPath path =
      reverse_from_forward(frozen_model(), config(5.0, 1), Vector::Constant(1, -0.3), {1.0});
  EXPECT_TRUE((path.zeta.array() == -0.3).all());
  EXPECT_NEAR(path.chi[0].back(), 1.0, 10 * kDelta);
}

TEST(ReverseFromForward, IndexReversal) {
  const ModelSpec spec = make_ou_perpetuity_example(2.0, 1.0);
  const PathConfig pc = config(30.0, 21);
  const ReversedPath path = reverse_from_forward(spec, pc, Vector::Zero(1), {1.0});
  PathConfig twice = pc;
  twice.horizon_T = 60.0;
  const ForwardPath fwd = simulate_forward(spec, twice, Vector::Zero(1));
  const auto n = static_cast<Eigen::Index>(path.steps);
  EXPECT_EQ(path.zeta(0, 0), fwd.Z(0, 2 * n));
  EXPECT_EQ(path.zeta(0, n), fwd.Z(0, n));
  EXPECT_EQ(path.burn_in, 30.0);
  EXPECT_EQ(path.increments_W.size(), 0);
}

TEST(ReverseFromForward, DiscountMatchesForwardRatio) {
  DiscountSpec d;
  d.rate = polynomial_scalar({1.0, 0.3});
  d.cashflow = constant_scalar(1.0);
  const ModelSpec spec = make_cir_model(1.0, 1.0, 0.5, d);
  const PathConfig pc = config(40.0, 5);
  const ReversedPath path = reverse_from_forward(spec, pc, Vector::Constant(1, 1.0), {1.0});
  PathConfig twice = pc;
  twice.horizon_T = 80.0;
  const ForwardPath fwd = simulate_forward(spec, twice, Vector::Constant(1, 1.0));
  const std::size_t n = path.steps;
  for (std::size_t i = 0; i <= n; i += 48) {
    const double ratio = std::exp(-(fwd.R[2 * n] - fwd.R[2 * n - i]));
    EXPECT_NEAR(path.Delta(i) / ratio, 1.0, 5 * kDelta) << i;
  }
}

TEST(SampleInitial, OuMoments) {
  const InvariantDensity p = default_density(make_ou_perpetuity_example(2.0, 1.0));
  RandomStream rng(42, 0);
  const int n = 100'000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = sample_initial(p, rng)[0];
    s += z;
    s2 += z * z;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  EXPECT_LE(std::abs(mean), 3 * std::sqrt(0.25 / n));
  // Var of the sample variance of N(0, s2) is 2 s2^2 / n.
  EXPECT_LE(std::abs(var - 0.25), 3 * std::sqrt(2 * 0.0625 / n));
}

TEST(SampleInitial, PointMassRejected) {
  EXPECT_THROW(gaussian_density({Vector::Zero(1), Matrix::Zero(1, 1)},
                                DensityProvenance::UserSupplied),
               UnsupportedDensityError);
  InvariantDensity p = default_density(make_ou_perpetuity_example(2.0, 1.0));
  p.gaussian->cov.setZero();
  RandomStream rng(1, 0);
  EXPECT_THROW(sample_initial(p, rng), UnsupportedDensityError);
}

TEST(SampleInitial, CirTableMatchesGamma) {
  const InvariantDensity p = default_density(make_cir_model(1.0, 1.0, 0.5, discount(1.0, 1.0)));
  RandomStream rng(43, 0);
  std::vector<double> z(100'000);
  for (auto& v : z) v = sample_initial(p, rng)[0];
  std::sort(z.begin(), z.end());
  const boost::math::gamma_distribution<double> gam(8.0, 1.0 / 8.0);
  EXPECT_LE(ks_distance(z, [&](double x) { return boost::math::cdf(gam, x); }).distance, 0.01);
}

TEST(LagAutocorrelation, DecaysForOu) {
  const ModelSpec spec = make_ou_perpetuity_example(2.0, 1.0);
  const ReversedPath path = reverse_from_forward(spec, config(2000.0, 3), Vector::Zero(1), {1.0});
  // Corr(Z_0, Z_s) = exp(-gamma s).
  EXPECT_NEAR(lag_autocorrelation(path, 0.5), std::exp(-1.0), 0.05);
  EXPECT_LT(std::abs(lag_autocorrelation(path, 5.0)), 0.05);
}

TEST(PathDump, HeaderLayout) {
  const ModelSpec spec = make_ou_perpetuity_example(2.0, 1.0);
  const ReversedPath path = simulate_reversed(spec, default_density(spec), config(1.0, 1), {1.0, 2.0});
  const auto file = std::filesystem::temp_directory_path() / "perpetuity_dump_test.bin";
  write_path_dump(path, spec.noise_dim, file);
  std::ifstream in(file, std::ios::binary);
  char magic[4];
  std::uint32_t version = 0, d = 0, k = 0;
  std::uint64_t steps = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&d), 4);
  in.read(reinterpret_cast<char*>(&k), 4);
  in.read(reinterpret_cast<char*>(&steps), 8);
  EXPECT_EQ(std::string(magic, 4), "PRPT");
  EXPECT_EQ(d, 1u);
  EXPECT_EQ(k, 0u);
  EXPECT_EQ(steps, 24u);
  // header 24 + delta 8 + zeta, log_delta, offset (25 each) + count 4 + 2 x + 2 chi arrays.
  EXPECT_EQ(std::filesystem::file_size(file), 24u + 8 + 3 * 25 * 8 + 4 + 2 * 8 + 2 * 25 * 8);
  std::filesystem::remove(file);
}
