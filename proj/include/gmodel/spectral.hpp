#pragma once

// Fourier multipliers, spectral derivatives, dealiased products and norms on
// a PeriodicGrid. Every function here is pure.

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gmodel/grid.hpp"

namespace gmodel {

/// Symbol of Q: 1/(1+k^2).
inline double q_symbol(int k) noexcept {
  const double kk = static_cast<double>(k);
  return 1.0 / (1.0 + kk * kk);
}

/// Symbol of N = d/dz Q: i k/(1+k^2).
inline Complex n_symbol(int k) noexcept {
  const double kk = static_cast<double>(k);
  return {0.0, kk / (1.0 + kk * kk)};
}

/// Symbol of d^order/dz^order: (i k)^order.
inline Complex derivative_symbol(int k, int order) noexcept {
  const double kk = static_cast<double>(k);
  switch (order) {
    case 1: return {0.0, kk};
    case 2: return {-kk * kk, 0.0};
    case 3: return {0.0, -kk * kk * kk};
    default: return {1.0, 0.0};
  }
}

/// Multiplies each stored coefficient by symbol(k). With `odd` set, the
/// Nyquist mode is zeroed: an odd symbol cannot act on it and keep the field
/// real.
template <class Symbol>
void apply_symbol(Spectrum& s, Symbol&& symbol, bool odd) {
  const int nyq = s.grid().nyquist();
  auto c = s.coeffs();
  for (int k = 0; k <= nyq; ++k) c[static_cast<std::size_t>(k)] *= symbol(k);
  if (odd) c[static_cast<std::size_t>(nyq)] = 0.0;
}

/// 2/3-rule: zero every mode with |k| > dealias_cutoff.
inline void truncate(Spectrum& s) {
  auto c = s.coeffs();
  std::fill(c.begin() + s.grid().dealias_cutoff() + 1, c.end(), Complex{});
}

template <class Symbol>
RealField apply_multiplier(const RealField& f, Symbol&& symbol, bool odd) {
  Spectrum s = to_spectrum(f);
  apply_symbol(s, symbol, odd);
  return to_field(s);
}

inline RealField apply_Q(const RealField& f) {
  return apply_multiplier(f, q_symbol, false);
}

inline RealField apply_N(const RealField& f) {
  return apply_multiplier(f, n_symbol, true);
}

inline void check_derivative_order(int order) {
  if (order < 1 || order > 3) {
    throw std::invalid_argument("derivative: order must be 1, 2 or 3, got " +
                                std::to_string(order));
  }
}

inline RealField derivative(const RealField& f, int order) {
  check_derivative_order(order);
  return apply_multiplier(
      f, [order](int k) { return derivative_symbol(k, order); }, order % 2 == 1);
}

/// Pointwise product followed by 2/3-rule truncation.
inline RealField dealiased_product(const RealField& f, const RealField& g) {
  require_same_grid(f.grid(), g.grid());
  RealField p(f.grid());
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = f[j] * g[j];
  Spectrum s = to_spectrum(p);
  truncate(s);
  return to_field(s);
}

inline double mean(const RealField& f) {
  return to_spectrum(f)[0].real();
}

inline double sup_norm(const RealField& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

inline double sup_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// sqrt(sum_k (1+k^2)^s |fhat_k|^2) over k = -n/2..n/2-1.
inline double sobolev_norm(const Spectrum& s, double order) {
  const int nyq = s.grid().nyquist();
  double sum = std::norm(s[0]);
  for (int k = 1; k <= nyq; ++k) {
    const double w = std::pow(1.0 + static_cast<double>(k) * k, order);
    const double mult = (k == nyq) ? 1.0 : 2.0;
    sum += mult * w * std::norm(s[static_cast<std::size_t>(k)]);
  }
  return std::sqrt(sum);
}

inline double sobolev_norm(const RealField& f, double order) {
  if (order < 0.0) throw std::invalid_argument("sobolev_norm: order must be >= 0");
  return sobolev_norm(to_spectrum(f), order);
}

/// Trapezoidal (spectrally exact) integral over one period.
inline double integrate_period(const RealField& f) {
  double sum = 0.0;
  for (double v : f.values()) sum += v;
  return sum * f.grid().spacing();
}

inline double inner_product(const RealField& f, const RealField& g) {
  require_same_grid(f.grid(), g.grid());
  double sum = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) sum += f[j] * g[j];
  return sum * f.grid().spacing();
}

/// Removes the k = 0 mode.
inline RealField remove_mean(const RealField& f) {
  const double m = mean(f);
  RealField out = f;
  out += -m;
  return out;
}

}  // namespace gmodel
