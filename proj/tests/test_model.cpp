#include "perpetuity/model.hpp"
#include "perpetuity/model_io.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace perpetuity;

namespace {

DiscountSpec plain_discount() {
  DiscountSpec d;
  d.rate = constant_scalar(1.0);
  d.cashflow = constant_scalar(1.0);
  return d;
}

const ValidationCheck& find_check(const ValidationReport& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return c;
  throw std::runtime_error("missing check " + name);
}

// det(c - lambda I) evaluated directly for 3x3 matrices.
double char_poly(const Matrix& c, double lambda) {
  Matrix m = c - lambda * Matrix::Identity(3, 3);
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
         m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

}  // namespace

TEST(ValidateModel, OuExamplePassesWithSignedCashflowNotice) {
  const ModelSpec spec = make_ou_perpetuity_example(2.0, 1.0);
  const auto probes = default_probe_points(spec.domain);
  const ValidationReport r = validate_model(spec, probes);
  EXPECT_TRUE(r.passed);
  ASSERT_FALSE(r.notices.empty());
  EXPECT_NE(r.notices.front().find("signed"), std::string::npos);
}

TEST(ValidateModel, NegativeCashflowWithoutFlagFails) {
  ModelSpec spec = make_ou_perpetuity_example(2.0, 1.0);
  spec.signed_cashflow = false;
  const ValidationReport r = validate_model(spec, default_probe_points(spec.domain));
  EXPECT_FALSE(r.passed);
  EXPECT_FALSE(find_check(r, "f_nonnegative").passed);
}

TEST(ValidateModel, ZeroDiffusionFailsSpd) {
  ModelSpec spec = make_ou_model_1d(1.0, 1.0, plain_discount());
  spec.diffusion = [](const Vector&) { return Matrix::Zero(1, 1); };
  const ValidationReport r = validate_model(spec, default_probe_points(spec.domain));
  EXPECT_FALSE(r.passed);
  EXPECT_FALSE(find_check(r, "c_spd").passed);
}

TEST(ValidateModel, RandomSpd3x3Passes) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  Matrix b(3, 3);
  for (int i = 0; i < 9; ++i) b.data()[i] = n01(rng);
  const Matrix c = b * b.transpose() + 0.5 * Matrix::Identity(3, 3);

  // Oracle: sign changes of det(c - lambda I) on (0, trace] count three
  // positive roots.
  int sign_changes = 0;
  double prev = char_poly(c, 1e-9);
  const double top = c.trace() + 1.0;
  for (int k = 1; k <= 20000; ++k) {
    const double v = char_poly(c, top * k / 20000.0);
    if ((v > 0) != (prev > 0)) ++sign_changes;
    prev = v;
  }
  ASSERT_EQ(sign_changes, 3);

  const ModelSpec spec = make_constant_model(StateDomain::full_space(3), Vector::Zero(3), c,
                                             plain_discount());
  EXPECT_TRUE(validate_model(spec, default_probe_points(spec.domain, 3)).passed);
}

TEST(ValidateModel, NonFiniteCoefficientNamesPoint) {
  DiscountSpec d = plain_discount();
  d.rate = [](const Vector& z) { return z[0] > 0.5 ? std::nan("") : 1.0; };
  const ModelSpec spec = make_ou_model_1d(1.0, 1.0, d);
  std::vector<Vector> probes(1, Vector::Constant(1, 1.0));
  try {
    validate_model(spec, probes);
    FAIL() << "expected ModelError";
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find('1'), std::string::npos);
  }
}

TEST(ValidateModel, ProbeOutsideDomainThrows) {
  const ModelSpec spec = make_cir_model(1.0, 1.0, 0.5, plain_discount());
  std::vector<Vector> probes(1, Vector::Constant(1, -1.0));
  EXPECT_THROW(validate_model(spec, probes), ModelError);
}

TEST(ValidateModel, Deterministic) {
  const ModelSpec spec = make_cir_model(1.0, 1.0, 0.5, plain_discount());
  const auto probes = default_probe_points(spec.domain);
  const auto r1 = validate_model(spec, probes), r2 = validate_model(spec, probes);
  ASSERT_EQ(r1.checks.size(), r2.checks.size());
  for (std::size_t i = 0; i < r1.checks.size(); ++i) {
    EXPECT_EQ(r1.checks[i].passed, r2.checks[i].passed);
    EXPECT_EQ(r1.checks[i].detail, r2.checks[i].detail);
  }
}

TEST(SigmaFromC, Identity) {
  EXPECT_TRUE(sigma_from_c(Matrix::Identity(3, 3)).isApprox(Matrix::Identity(3, 3), 1e-14));
}

TEST(SigmaFromC, Scalar) {
  EXPECT_NEAR(sigma_from_c(Matrix::Constant(1, 1, 4.0))(0, 0), 2.0, 1e-14);
}

TEST(SigmaFromC, TwoByTwo) {
  Matrix c(2, 2);
  c << 2, 1, 1, 2;
  const Matrix s = sigma_from_c(c);
  // Eigenvalues 1 and 3 with eigenvectors (1, -1) and (1, 1).
  Matrix expected(2, 2);
  const double p = 0.5 * (std::sqrt(3.0) + 1.0), m = 0.5 * (std::sqrt(3.0) - 1.0);
  expected << p, m, m, p;
  EXPECT_TRUE(s.isApprox(expected, 1e-12));
  EXPECT_LE((s * s - c).norm() / c.norm(), 1e-12);
}

TEST(SigmaFromC, RandomSpdSquaresBack) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + trial % 4;
    Matrix b(d, d);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = n01(rng);
    const Matrix c = b * b.transpose() + 0.1 * Matrix::Identity(d, d);
    const Matrix s = sigma_from_c(c);
    EXPECT_LE((s - s.transpose()).norm(), 1e-12);
    EXPECT_LE((s * s - c).norm(), 1e-10);
  }
}

TEST(SigmaFromC, RejectsIndefinite) {
  Matrix c(2, 2);
  c << 1, 2, 2, 1;
  EXPECT_THROW(sigma_from_c(c), ModelError);
}

TEST(StateDomain, RejectsInvertedBox) {
  EXPECT_THROW(StateDomain::box({1.0}, {0.0}).check(), ModelError);
}

TEST(StateDomain, Contains) {
  const StateDomain d = StateDomain::box({0.0}, {std::numeric_limits<double>::infinity()});
  EXPECT_TRUE(d.contains(Vector::Constant(1, 3.0)));
  EXPECT_FALSE(d.contains(Vector::Constant(1, 0.0)));
  EXPECT_TRUE(d.bounded_below(0));
  EXPECT_FALSE(d.bounded_above(0));
}

TEST(Catalog, OuCoefficients) {
  const ModelSpec spec = make_ou_perpetuity_example(2.0, 1.0);
  const Vector z = Vector::Constant(1, 0.3);
  EXPECT_DOUBLE_EQ(spec.m(z)[0], -0.6);
  EXPECT_DOUBLE_EQ(spec.c(z)(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(spec.a(z), 1.0);
  EXPECT_DOUBLE_EQ(spec.f(z), 0.3);
  EXPECT_TRUE(spec.degenerate());
}

TEST(Catalog, CirDivergence) {
  const ModelSpec spec = make_cir_model(1.0, 1.0, 0.5, plain_discount());
  // div c = d/dz (xi^2 z) = 0.25.
  EXPECT_NEAR(spec.div_c(Vector::Constant(1, 2.0))[0], 0.25, 1e-8);
}

TEST(ModelIo, OuFromJson) {
  const auto j = nlohmann::json::parse(R"({
    "schema_version": 1,
    "domain": {"lower": [null], "upper": [null]},
    "coefficients": {"kind": "ou", "gamma": 2, "mean": 0, "sigma": 1,
                     "a": 1, "eta": [0.5], "f": 1}})");
  const ModelSpec spec = model_from_json(j);
  const Vector z = Vector::Constant(1, 0.5);
  EXPECT_DOUBLE_EQ(spec.m(z)[0], -1.0);
  EXPECT_EQ(spec.noise_dim, 1);
  EXPECT_DOUBLE_EQ(spec.noise_intensity(z), 0.25);
}

TEST(ModelIo, UnknownKindThrows) {
  const auto j = nlohmann::json::parse(R"({"domain": {"lower": [null], "upper": [null]},
                                         "coefficients": {"kind": "heston"}})");
  EXPECT_THROW(model_from_json(j), ModelError);
}
