#pragma once

#include "perpetuity/model.hpp"

#include "json.hpp"

#include <filesystem>

namespace perpetuity {

/// Builds a model from its JSON description:
///
///   {"schema_version": 1,
///    "domain": {"lower": [null], "upper": [null], "label": "R"},
///    "coefficients": {"kind": "ou", "gamma": 2, "mean": 0, "sigma": 1,
///                     "a": 1, "theta": [0], "eta": [0.5], "f": {"poly": [0, 1]}},
///    "flags": {"signed_cashflow": true}}
///
/// Factor kinds: "ou" (gamma, mean, sigma; scalars or arrays), "cir" (kappa,
/// mean, xi), "constant" (drift, diffusion), "polynomial" (drift and
/// diffusion coefficient lists, 1-D). Scalar fields are numbers or
/// {"poly": [c0, c1, ...], "coord": i}. null bounds mean infinite.
ModelSpec model_from_json(const nlohmann::json& j);
ModelSpec load_model(const std::filesystem::path& path);

}  // namespace perpetuity
