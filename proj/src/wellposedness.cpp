#include "perpetuity/wellposedness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace perpetuity {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kZeroBand = 1e-9;

struct Extremum {
  double value = 0.0;
  Vector arg;
};

// sup_z h(z) over the box [lo, hi]: tensor grid search, then golden-section
// refinement along each coordinate around the best node.
Extremum box_sup(const ScalarField& h, const Vector& lo, const Vector& hi) {
  const int d = static_cast<int>(lo.size());
  const int n = d == 1 ? 4001 : (d == 2 ? 301 : std::max(3, static_cast<int>(std::pow(1e5, 1.0 / d))));
  std::vector<int> idx(d, 0);
  Extremum best{-kInf, lo};
  Vector z(d);
  while (true) {
    for (int i = 0; i < d; ++i) z[i] = lo[i] + (hi[i] - lo[i]) * idx[i] / (n - 1);
    const double v = h(z);
    if (v > best.value) best = {v, z};
    int pos = 0;
    while (pos < d && ++idx[pos] == n) idx[pos++] = 0;
    if (pos == d) break;
  }
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int sweep = 0; sweep < 3; ++sweep) {
    for (int i = 0; i < d; ++i) {
      const double cell = (hi[i] - lo[i]) / (n - 1);
      double a = std::max(lo[i], best.arg[i] - cell);
      double b = std::min(hi[i], best.arg[i] + cell);
      Vector y = best.arg;
      auto at = [&](double t) {
        y[i] = t;
        return h(y);
      };
      double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
      double f1 = at(x1), f2 = at(x2);
      for (int it = 0; it < 80; ++it) {
        if (f1 < f2) {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + phi * (b - a);
          f2 = at(x2);
        } else {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - phi * (b - a);
          f1 = at(x1);
        }
      }
      const double t = 0.5 * (a + b);
      const double v = at(t);
      if (v > best.value) {
        best.value = v;
        best.arg[i] = t;
      }
    }
  }
  return best;
}

Extremum box_inf(const ScalarField& h, const Vector& lo, const Vector& hi) {
  Extremum e = box_sup([&](const Vector& z) { return -h(z); }, lo, hi);
  e.value = -e.value;
  return e;
}

// True when the extremum sits on a box edge that truncates an infinite side
// of the domain.
bool on_truncated_edge(const StateDomain& dom, const Vector& arg,
                       const Vector& lo, const Vector& hi) {
  for (int i = 0; i < dom.dim; ++i) {
    const double tol = 2e-3 * (hi[i] - lo[i]);
    if (!dom.bounded_below(i) && arg[i] - lo[i] <= tol) return true;
    if (!dom.bounded_above(i) && hi[i] - arg[i] <= tol) return true;
  }
  return false;
}

struct BoundSearch {
  double value;
  bool edge;
};

BoundSearch upper_bound_on_box(const ModelSpec& spec, const Vector& lo,
                               const Vector& hi) {
  auto S = [&](double x) {
    return box_sup([&](const Vector& z) { return spec.f(z) - x * spec.a(z); }, lo, hi);
  };
  double x_lo = 0.0, x_hi = 1.0;
  Extremum e = S(0.0);
  if (e.value <= 0.0) return {0.0, false};
  while ((e = S(x_hi)).value > 0.0) {
    x_lo = x_hi;
    x_hi *= 2.0;
    if (x_hi > 1e300) return {kInf, false};
  }
  for (int it = 0; it < 200 && x_hi - x_lo > 1e-14 * x_hi; ++it) {
    const double mid = 0.5 * (x_lo + x_hi);
    if (S(mid).value > 0.0)
      x_lo = mid;
    else
      x_hi = mid;
  }
  e = S(x_hi);
  return {x_hi, on_truncated_edge(spec.domain, e.arg, lo, hi)};
}

BoundSearch lower_bound_on_box(const ModelSpec& spec, const Vector& lo,
                               const Vector& hi) {
  auto I = [&](double x) {
    return box_inf([&](const Vector& z) { return spec.f(z) - x * spec.a(z); }, lo, hi);
  };
  Extremum e = I(0.0);
  if (e.value < 0.0) return {0.0, false};
  double x_lo = 0.0, x_hi = 1.0;
  while ((e = I(x_hi)).value >= 0.0) {
    x_lo = x_hi;
    x_hi *= 2.0;
    if (x_hi > 1e300) return {kInf, false};
  }
  for (int it = 0; it < 200 && x_hi - x_lo > 1e-14 * x_hi; ++it) {
    const double mid = 0.5 * (x_lo + x_hi);
    if (I(mid).value >= 0.0)
      x_lo = mid;
    else
      x_hi = mid;
  }
  e = I(x_lo);
  return {x_lo, on_truncated_edge(spec.domain, e.arg, lo, hi)};
}

void widen(const StateDomain& dom, Vector& lo, Vector& hi) {
  for (int i = 0; i < dom.dim; ++i) {
    const double mid = 0.5 * (lo[i] + hi[i]);
    const double half = 0.5 * (hi[i] - lo[i]);
    if (!dom.bounded_below(i)) lo[i] = mid - 2.0 * half;
    if (!dom.bounded_above(i)) hi[i] = mid + 2.0 * half;
  }
}

}  // namespace

std::string to_string(Finiteness f) {
  switch (f) {
    case Finiteness::AlmostSurelyFinite:
      return "AlmostSurelyFinite";
    case Finiteness::AlmostSurelyInfinite:
      return "AlmostSurelyInfinite";
    case Finiteness::Inconclusive:
      return "Inconclusive";
  }
  return "Inconclusive";
}

FinitenessVerdict check_finiteness(const ModelSpec& spec,
                                   const InvariantDensity& density,
                                   const std::vector<double>& epsilons) {
  if (density.dim != spec.dim())
    throw ModelError("check_finiteness: density and model dimensions differ");
  FinitenessVerdict out;
  const double Ea = expectation(density, [&](const Vector& z) { return spec.a(z); });
  const double Eabs_a =
      expectation(density, [&](const Vector& z) { return std::abs(spec.a(z)); });
  const double Eq =
      expectation(density, [&](const Vector& z) { return spec.noise_intensity(z); });
  const double Ef = expectation(density, [&](const Vector& z) { return spec.f(z); });
  const double Eabs_f =
      expectation(density, [&](const Vector& z) { return std::abs(spec.f(z)); });
  std::ostringstream diag;

  if (!std::isfinite(Ea) || !std::isfinite(Eabs_a)) {
    out.diagnostic = "p-integral of a is not finite";
    return out;
  }
  const bool q_integrable = std::isfinite(Eq);
  const bool q_zero = q_integrable && Eq <= 1e-14 * (1.0 + Eabs_a);
  auto band = [&](double w) { return kZeroBand * (Eabs_a + w * Eq); };

  // Negative-part screen for the finiteness form.
  bool screen_ok = true;
  for (double eps : epsilons) {
    const double w = 0.5 * (1.0 - eps);
    const double neg = expectation(density, [&](const Vector& z) {
      return std::max(0.0, -(spec.a(z) + w * spec.noise_intensity(z)));
    });
    if (!std::isfinite(neg)) {
      screen_ok = false;
      diag << "negative part not integrable at eps=" << eps << "; ";
    }
  }

  double best_kappa = -1.0;
  for (double eps : epsilons) {
    if (!(eps > 0.0)) throw ModelError("check_finiteness: epsilons must be positive");
    EpsilonScanEntry e;
    e.epsilon = eps;
    e.i_minus = Ea + 0.5 * (1.0 - eps) * Eq;
    e.i_plus = Ea + 0.5 * (1.0 + eps) * Eq;
    out.scan.push_back(e);
    if (screen_ok && e.i_minus > band(0.5 * (1.0 - eps)) &&
        0.25 * e.i_minus > best_kappa) {
      best_kappa = 0.25 * e.i_minus;
      out.epsilon_used = eps;
      out.integral_value = e.i_minus;
    }
  }

  if (q_integrable && screen_ok) {
    const double i0 = Ea + 0.5 * Eq;
    if (i0 > band(0.5)) {
      out.verdict = Finiteness::AlmostSurelyFinite;
      out.epsilon_free_form = true;
      if (best_kappa > 0.0) {
        out.kappa = best_kappa;
      } else {
        out.integral_value = i0;
        out.epsilon_used = 0.0;
      }
      out.diagnostic = diag.str();
      return out;
    }
  }
  if (best_kappa > 0.0) {
    out.verdict = Finiteness::AlmostSurelyFinite;
    out.kappa = best_kappa;
    out.diagnostic = diag.str();
    return out;
  }

  out.epsilon_used = 0.0;
  const bool f_positive = Ef > kZeroBand * Eabs_f && Ef > 0.0;
  if (!f_positive) diag << "int f p is not positive; ";
  if (f_positive) {
    if (q_zero) {
      if (Ea < -band(0.0) || Eabs_a <= 1e-14) {
        out.verdict = Finiteness::AlmostSurelyInfinite;
        out.integral_value = Ea;
        out.diagnostic = diag.str();
        return out;
      }
      diag << "int a p is zero within tolerance while a is not identically zero";
    } else {
      for (const auto& e : out.scan) {
        if (e.i_plus <= band(0.5 * (1.0 + e.epsilon))) {
          out.verdict = Finiteness::AlmostSurelyInfinite;
          out.epsilon_used = e.epsilon;
          out.integral_value = e.i_plus;
          out.diagnostic = diag.str();
          return out;
        }
      }
      diag << "no epsilon on the grid decides finiteness";
    }
  }
  out.verdict = Finiteness::Inconclusive;
  out.integral_value = Ea + 0.5 * Eq;
  out.diagnostic = diag.str();
  return out;
}

SupportBounds support_bounds(const ModelSpec& spec,
                             std::optional<std::vector<double>> box_lower,
                             std::optional<std::vector<double>> box_upper) {
  const int d = spec.dim();
  bool degenerate = spec.degenerate();
  if (!degenerate) {
    degenerate = true;
    for (const Vector& z : default_probe_points(spec.domain, 5))
      if (spec.noise_intensity(z) != 0.0) degenerate = false;
  }
  if (!degenerate)
    throw ModelError(
        "support_bounds applies only when theta and eta vanish; use the "
        "reversal estimator for the general case");

  Vector lo(d), hi(d);
  std::string note;
  if (box_lower && box_upper) {
    if (static_cast<int>(box_lower->size()) != d || static_cast<int>(box_upper->size()) != d)
      throw ModelError("support_bounds: truncation box has the wrong dimension");
    for (int i = 0; i < d; ++i) {
      lo[i] = (*box_lower)[i];
      hi[i] = (*box_upper)[i];
    }
    note = "user truncation box";
  } else {
    bool bounded = true;
    for (int i = 0; i < d; ++i)
      bounded = bounded && spec.domain.bounded_below(i) && spec.domain.bounded_above(i);
    if (bounded) {
      for (int i = 0; i < d; ++i) {
        lo[i] = spec.domain.lower[i];
        hi[i] = spec.domain.upper[i];
      }
      note = "domain box";
    } else {
      const InvariantDensity dens = default_density(spec);
      for (int i = 0; i < d; ++i) {
        lo[i] = dens.bulk_lower[i];
        hi[i] = dens.bulk_upper[i];
      }
      note = "density 1e-8 quantile box";
    }
  }
  for (int i = 0; i < d; ++i) {
    const double inset_lo = 1e-8 * (1.0 + std::abs(spec.domain.lower[i]));
    const double inset_hi = 1e-8 * (1.0 + std::abs(spec.domain.upper[i]));
    lo[i] = std::max(lo[i], spec.domain.lower[i] + inset_lo);
    hi[i] = std::min(hi[i], spec.domain.upper[i] - inset_hi);
    if (!(lo[i] < hi[i])) throw ModelError("support_bounds: empty truncation box");
  }

  SupportBounds out;
  out.box_lower.assign(lo.data(), lo.data() + d);
  out.box_upper.assign(hi.data(), hi.data() + d);
  out.note = note;

  BoundSearch up = upper_bound_on_box(spec, lo, hi);
  if (up.edge && std::isfinite(up.value) && up.value > 0.0) {
    Vector l2 = lo, h2 = hi;
    double prev = up.value;
    bool grows = true;
    for (int k = 0; k < 3 && grows; ++k) {
      widen(spec.domain, l2, h2);
      const BoundSearch next = upper_bound_on_box(spec, l2, h2);
      grows = next.value > 1.5 * prev;
      prev = next.value;
    }
    if (grows) {
      up.value = kInf;
      out.note += "; sup over z grows with the truncation box, u_hat = inf";
    }
  }
  BoundSearch low = lower_bound_on_box(spec, lo, hi);
  if (low.edge && std::isfinite(low.value) && low.value > 0.0) {
    Vector l2 = lo, h2 = hi;
    double prev = low.value;
    bool shrinks = true;
    for (int k = 0; k < 3 && shrinks; ++k) {
      widen(spec.domain, l2, h2);
      const BoundSearch next = lower_bound_on_box(spec, l2, h2);
      shrinks = next.value < prev / 1.5;
      prev = next.value;
    }
    if (shrinks) {
      low.value = 0.0;
      out.note += "; inf over z decays with the truncation box, l_hat = 0";
    }
  }
  out.u_hat = up.value;
  out.l_hat = std::min(std::max(low.value, 0.0), out.u_hat);
  return out;
}

}  // namespace perpetuity
