#include "perpetuity/model_io.hpp"

#include <fstream>
#include <limits>

namespace perpetuity {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

ScalarField scalar_field(const json& j) {
  if (j.is_number()) return constant_scalar(j.get<double>());
  if (j.is_object() && j.contains("poly")) {
    return polynomial_scalar(j.at("poly").get<std::vector<double>>(),
                             j.value("coord", 0));
  }
  throw ModelError("scalar field must be a number or {\"poly\": [...]}");
}

VectorField vector_field(const json& j, int& size) {
  if (!j.is_array()) throw ModelError("vector field must be an array");
  std::vector<ScalarField> parts;
  for (const auto& e : j) parts.push_back(scalar_field(e));
  size = static_cast<int>(parts.size());
  return [parts = std::move(parts)](const Vector& z) {
    Vector out(static_cast<Eigen::Index>(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i) out[i] = parts[i](z);
    return out;
  };
}

Matrix matrix_value(const json& j, int d) {
  if (j.is_number()) return j.get<double>() * Matrix::Identity(d, d);
  Matrix m(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) m(r, c) = j.at(r).at(c).get<double>();
  return m;
}

Vector vector_value(const json& j, int d) {
  if (j.is_number()) return Vector::Constant(d, j.get<double>());
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = j.at(i).get<double>();
  return v;
}

int matrix_dim(const json& j) {
  return j.is_array() ? static_cast<int>(j.size()) : 1;
}

double bound(const json& j, double fallback) {
  return j.is_null() ? fallback : j.get<double>();
}

StateDomain domain_from_json(const json& j) {
  std::vector<double> lo, hi;
  for (const auto& e : j.at("lower")) lo.push_back(bound(e, -kInf));
  for (const auto& e : j.at("upper")) hi.push_back(bound(e, kInf));
  return StateDomain::box(std::move(lo), std::move(hi), j.value("label", ""));
}

}  // namespace

ModelSpec model_from_json(const json& j) {
  if (j.value("schema_version", 1) != 1)
    throw ModelError("unsupported model schema_version");
  const json& coeff = j.at("coefficients");
  const std::string kind = coeff.at("kind").get<std::string>();

  DiscountSpec discount;
  discount.rate = scalar_field(coeff.value("a", json(0.0)));
  discount.cashflow = scalar_field(coeff.value("f", json(1.0)));
  if (coeff.contains("theta")) {
    int n = 0;
    discount.theta = vector_field(coeff.at("theta"), n);
  }
  if (coeff.contains("eta")) {
    int n = 0;
    discount.eta = vector_field(coeff.at("eta"), n);
    discount.noise_dim = n;
  }
  if (j.contains("flags"))
    discount.signed_cashflow = j.at("flags").value("signed_cashflow", false);

  ModelSpec spec;
  if (kind == "ou") {
    const int d = matrix_dim(coeff.at("gamma"));
    spec = make_ou_model(matrix_value(coeff.at("gamma"), d),
                         vector_value(coeff.value("mean", json(0.0)), d),
                         matrix_value(coeff.value("sigma", json(1.0)), d),
                         std::move(discount));
  } else if (kind == "cir") {
    spec = make_cir_model(coeff.at("kappa").get<double>(),
                          coeff.at("mean").get<double>(),
                          coeff.at("xi").get<double>(), std::move(discount));
  } else if (kind == "constant") {
    StateDomain domain = j.contains("domain") ? domain_from_json(j.at("domain"))
                                              : StateDomain::full_space(1);
    const int d = domain.dim;
    spec = make_constant_model(std::move(domain),
                               vector_value(coeff.at("drift"), d),
                               matrix_value(coeff.at("diffusion"), d),
                               std::move(discount));
  } else if (kind == "polynomial") {
    StateDomain domain = j.contains("domain") ? domain_from_json(j.at("domain"))
                                              : StateDomain::full_space(1);
    spec = make_polynomial_model(
        std::move(domain), coeff.at("drift").get<std::vector<double>>(),
        coeff.at("diffusion").get<std::vector<double>>(), std::move(discount));
  } else {
    throw ModelError("unknown coefficient kind '" + kind + "'");
  }

  if (spec.has_theta() && spec.theta(Vector::Zero(spec.dim())).size() !=
                              spec.dim())
    throw ModelError("theta must have one entry per factor coordinate");
  return spec;
}

ModelSpec load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ModelError("malformed model file " + path.string() + ": " + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const json::exception& e) {
    throw ModelError("invalid model file " + path.string() + ": " + e.what());
  }
}

}  // namespace perpetuity
