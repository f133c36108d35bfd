#pragma once

// Per-snapshot diagnostics and the blow-up heuristics built on them. These
// report evidence of singularity formation; none of them is a proof.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gmodel/spectral.hpp"

namespace gmodel {

struct DiagnosticsRecord {
  double t = 0.0;
  double sup_norm = 0.0;
  double h1_norm = 0.0;
  double h2_norm = 0.0;
  double mean = 0.0;
  double min_u = 0.0;  // minimum of the field (u itself for conduit/magma)
  double analyticity_radius = 0.0;
  double spectral_tail_fraction = 0.0;
  bool radius_fitted = false;  // false: fewer than 4 modes above the floor
};

/// Coefficients below this magnitude are treated as roundoff.
inline constexpr double kSpectrumFloor = 1e-14;

/// Fits log|f_k| = a - alpha log k - delta k over k in [n/8, dealias_cutoff],
/// using only modes with |f_k| > 1e-14, and returns delta. The algebraic
/// prefactor k^-alpha keeps delta unbiased for spectra such as k^-2 e^{-delta k}.
/// When the usable modes span less than a factor 2 in k, log k and k are too
/// collinear to separate and the prefactor is dropped (alpha = 0).
/// Empty when fewer than 4 modes qualify.
inline std::optional<double> fit_decay_rate(const Spectrum& s) {
  const int lo = std::max(1, static_cast<int>(s.grid().n_points() / 8));
  const int hi = s.grid().dealias_cutoff();
  std::vector<int> ks;
  std::vector<double> logs;
  for (int k = lo; k <= hi; ++k) {
    const double mag = std::abs(s[static_cast<std::size_t>(k)]);
    if (mag > kSpectrumFloor) {
      ks.push_back(k);
      logs.push_back(std::log(mag));
    }
  }
  if (ks.size() < 4) return std::nullopt;

  const bool with_prefactor = ks.back() >= 2 * ks.front();
  const Eigen::Index cols = with_prefactor ? 3 : 2;
  Eigen::MatrixXd design(static_cast<Eigen::Index>(ks.size()), cols);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(ks.size()));
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double k = ks[i];
    design(row, 0) = 1.0;
    design(row, cols - 1) = -k;
    if (with_prefactor) design(row, 1) = -std::log(k);
    rhs(row) = logs[i];
  }
  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(rhs);
  return coef(cols - 1);
}

/// Exponential decay rate of the spectrum; 0 when it cannot be fitted.
inline double estimate_analyticity_radius(const RealField& f) {
  const auto rate = fit_decay_rate(to_spectrum(f));
  return rate ? std::max(0.0, *rate) : 0.0;
}

/// Fraction of the fluctuation energy (k != 0) carried by modes k >= n/4.
inline double spectral_tail_fraction(const Spectrum& s) {
  const std::size_t start = s.grid().n_points() / 4;
  const std::size_t nyq = static_cast<std::size_t>(s.grid().nyquist());
  double total = 0.0, tail = 0.0;
  for (std::size_t k = 1; k <= nyq; ++k) {
    const double e = (k == nyq ? 1.0 : 2.0) * std::norm(s[k]);
    total += e;
    if (k >= start) tail += e;
  }
  return total > 0.0 ? tail / total : 0.0;
}

inline DiagnosticsRecord compute_diagnostics(double t, const RealField& f) {
  const Spectrum s = to_spectrum(f);
  DiagnosticsRecord r;
  r.t = t;
  r.sup_norm = sup_norm(f);
  r.h1_norm = sobolev_norm(s, 1.0);
  r.h2_norm = sobolev_norm(s, 2.0);
  r.mean = s[0].real();
  r.min_u = *std::min_element(f.values().begin(), f.values().end());
  const auto rate = fit_decay_rate(s);
  r.radius_fitted = rate.has_value();
  r.analyticity_radius = rate ? std::max(0.0, *rate) : 0.0;
  r.spectral_tail_fraction = spectral_tail_fraction(s);
  return r;
}

enum class BlowupReason { Radius, SpectralTail, Growth, Positivity };

inline std::string_view to_string(BlowupReason r) {
  switch (r) {
    case BlowupReason::Radius: return "radius";
    case BlowupReason::SpectralTail: return "spectral-tail";
    case BlowupReason::Growth: return "growth";
    case BlowupReason::Positivity: return "positivity";
  }
  return "unknown";
}

struct BlowupPolicy {
  double radius_factor = 4.0;     // flag radius < radius_factor * 2pi/n
  double tail_threshold = 1e-4;   // flag tail fraction above this
  double growth_factor = 1e3;     // flag sup_norm > growth_factor * initial
  bool check_positivity = false;  // conduit/magma: flag min u <= 0
  std::size_t n_points = 0;       // grid size the radius threshold refers to
};

struct BlowupSuspicion {
  BlowupReason reason;
  double t;
  std::string detail;
};

/// Checks one record against the policy; `initial` is the first record.
inline std::optional<BlowupSuspicion> check_blowup(const DiagnosticsRecord& r,
                                                   const DiagnosticsRecord& initial,
                                                   const BlowupPolicy& policy) {
  auto flag = [&](BlowupReason why, const std::string& detail) {
    return std::optional<BlowupSuspicion>(BlowupSuspicion{why, r.t, detail});
  };
  if (policy.check_positivity && !(r.min_u > 0.0)) {
    return flag(BlowupReason::Positivity, "min u = " + format_number(r.min_u));
  }
  if (policy.n_points > 0 && r.radius_fitted) {
    const double threshold = policy.radius_factor * 2.0 * std::numbers::pi /
                             static_cast<double>(policy.n_points);
    if (r.analyticity_radius < threshold) {
      return flag(BlowupReason::Radius, "analyticity radius " +
                                            format_number(r.analyticity_radius) +
                                            " < " + format_number(threshold));
    }
  }
  if (r.spectral_tail_fraction > policy.tail_threshold) {
    return flag(BlowupReason::SpectralTail,
                "tail fraction " + format_number(r.spectral_tail_fraction));
  }
  if (r.sup_norm > policy.growth_factor * initial.sup_norm) {
    return flag(BlowupReason::Growth, "sup norm " + format_number(r.sup_norm) +
                                          " vs initial " +
                                          format_number(initial.sup_norm));
  }
  if (!std::isfinite(r.sup_norm) || !std::isfinite(r.h2_norm)) {
    return flag(BlowupReason::Growth, "non-finite norms");
  }
  return std::nullopt;
}

/// Scans a diagnostics history in time order and returns the first record
/// that meets a blow-up criterion.
inline std::optional<BlowupSuspicion> detect_blowup(std::span<const DiagnosticsRecord> history,
                                                    const BlowupPolicy& policy) {
  if (history.empty()) throw std::invalid_argument("detect_blowup: empty history");
  for (const auto& r : history) {
    if (auto s = check_blowup(r, history.front(), policy)) return s;
  }
  return std::nullopt;
}

}  // namespace gmodel
