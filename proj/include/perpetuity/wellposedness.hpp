#pragma once

#include "perpetuity/invariant_density.hpp"
#include "perpetuity/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace perpetuity {

enum class Finiteness { AlmostSurelyFinite, AlmostSurelyInfinite, Inconclusive };

std::string to_string(Finiteness f);

struct EpsilonScanEntry {
  double epsilon = 0.0;
  double i_minus = 0.0;  // int (a + (1-eps)/2 q) p
  double i_plus = 0.0;   // int (a + (1+eps)/2 q) p
};

struct FinitenessVerdict {
  Finiteness verdict = Finiteness::Inconclusive;
  double epsilon_used = 0.0;     // 0 when the epsilon-free form decided
  double integral_value = 0.0;   // the tested p-integral
  std::optional<double> kappa;   // discount decay rate, finite verdict only
  bool epsilon_free_form = false;
  std::vector<EpsilonScanEntry> scan;
  std::string diagnostic;
};

inline const std::vector<double> kDefaultEpsilons = {0.5, 0.25, 0.1, 0.01};

/// Decides whether X0 is a.s. finite from p-integrals of
/// a + (1 -/+ eps)/2 (theta' c theta + eta' eta). Integrals within
/// 1e-9 * int |integrand| p of zero are treated as zero.
FinitenessVerdict check_finiteness(const ModelSpec& spec,
                                   const InvariantDensity& density,
                                   const std::vector<double>& epsilons = kDefaultEpsilons);

struct SupportBounds {
  double l_hat = 0.0;
  double u_hat = 0.0;  // may be +inf
  std::vector<double> box_lower;  // truncation box actually searched
  std::vector<double> box_upper;
  std::string note;
};

/// Support [l_hat, u_hat] of the limit law when theta = eta = 0:
/// u_hat = inf{x : sup_z (f - x a) <= 0}, l_hat = sup{x : inf_z (f - x a) >= 0}.
/// The sup/inf over z run over a truncation box (default: the density's
/// bulk box). When the extremum sits on a truncated edge the box is
/// doubled three times; persistent growth of u_hat (factor > 1.5 per
/// doubling) reports +inf, persistent decay of l_hat reports 0.
SupportBounds support_bounds(const ModelSpec& spec,
                             std::optional<std::vector<double>> box_lower = std::nullopt,
                             std::optional<std::vector<double>> box_upper = std::nullopt);

}  // namespace perpetuity
