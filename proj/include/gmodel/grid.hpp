#pragma once

// Periodic collocation grid on [0, 2pi), real fields sampled on it, and their
// Fourier spectra.
//
// Transform convention: a real field g with samples g_j = g(z_j) has spectrum
// coefficients ghat_k with
//
//     g(z) = sum_k ghat_k exp(i k z),   k = -n/2 .. n/2 - 1,
//
// i.e. ghat_k = (1/n) sum_j g_j exp(-i k z_j). Only k = 0 .. n/2 are stored;
// negative wavenumbers follow from conjugate symmetry.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "gmodel/error.hpp"

namespace gmodel {

using Complex = std::complex<double>;

namespace detail {

// FFTW planning is not thread-safe, execution with the new-array interface
// is. Plans are built once per size and shared by every grid of that size.
// FFTW_ESTIMATE keeps the chosen algorithm (and so every bit of the output)
// identical from run to run.
struct FftPlans {
  explicit FftPlans(std::size_t n) {
    const int len = static_cast<int>(n);
    std::vector<double> real(n);
    std::vector<Complex> spec(n / 2 + 1);
    auto* cplx = reinterpret_cast<fftw_complex*>(spec.data());
    forward = fftw_plan_dft_r2c_1d(len, real.data(), cplx,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    inverse = fftw_plan_dft_c2r_1d(len, cplx, real.data(),
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (forward == nullptr || inverse == nullptr) {
      throw std::runtime_error("FFTW planning failed for n = " +
                               std::to_string(n));
    }
  }
  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;
  ~FftPlans() {
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
  }

  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

inline std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

inline std::shared_ptr<const FftPlans> plans_for(std::size_t n) {
  std::lock_guard lock(plan_mutex());
  static std::map<std::size_t, std::shared_ptr<const FftPlans>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_shared<const FftPlans>(n);
  return slot;
}

}  // namespace detail

/// Uniform grid z_j = 2 pi j / n on the 2pi-periodic domain.
///
/// Immutable after construction and cheap to copy; copies share FFT plans.
class PeriodicGrid {
 public:
  explicit PeriodicGrid(std::size_t n_points) : n_(n_points) {
    if (n_points < 8 || n_points % 2 != 0) {
      throw std::invalid_argument(
          "PeriodicGrid: n_points must be even and >= 8, got " +
          std::to_string(n_points));
    }
    plans_ = detail::plans_for(n_points);
  }

  std::size_t n_points() const noexcept { return n_; }
  std::size_t size() const noexcept { return n_; }
  /// Number of stored (non-negative) wavenumbers, n/2 + 1.
  std::size_t n_modes() const noexcept { return n_ / 2 + 1; }
  int nyquist() const noexcept { return static_cast<int>(n_ / 2); }
  /// 2/3-rule cutoff: modes with |k| > floor(n/3) are removed after products.
  int dealias_cutoff() const noexcept { return static_cast<int>(n_ / 3); }
  double length() const noexcept { return 2.0 * std::numbers::pi; }
  double spacing() const noexcept { return length() / static_cast<double>(n_); }
  double node(std::size_t j) const noexcept {
    return length() * static_cast<double>(j) / static_cast<double>(n_);
  }

  /// Forward transform into normalized coefficients k = 0..n/2.
  void forward(std::span<const double> values, std::span<Complex> coeffs) const {
    check_sizes(values.size(), coeffs.size());
    // r2c does not modify its input, but FFTW's signature is not const.
    fftw_execute_dft_r2c(plans_->forward, const_cast<double*>(values.data()),
                         reinterpret_cast<fftw_complex*>(coeffs.data()));
    const double scale = 1.0 / static_cast<double>(n_);
    for (auto& c : coeffs) c *= scale;
  }

  /// Inverse transform. The Nyquist coefficient is taken as the coefficient
  /// of cos(n z / 2) alone (its sine part is not representable).
  void inverse(std::span<const Complex> coeffs, std::span<double> values) const {
    check_sizes(values.size(), coeffs.size());
    thread_local std::vector<Complex> scratch;
    scratch.assign(coeffs.begin(), coeffs.end());
    scratch.front().imag(0.0);
    scratch.back().imag(0.0);
    fftw_execute_dft_c2r(plans_->inverse,
                         reinterpret_cast<fftw_complex*>(scratch.data()),
                         values.data());
  }

  friend bool operator==(const PeriodicGrid& a, const PeriodicGrid& b) noexcept {
    return a.n_ == b.n_;
  }

 private:
  void check_sizes(std::size_t n_values, std::size_t n_coeffs) const {
    if (n_values != n_ || n_coeffs != n_modes()) {
      throw std::invalid_argument("PeriodicGrid: transform buffer size mismatch");
    }
  }

  std::size_t n_;
  std::shared_ptr<const detail::FftPlans> plans_;
};

inline void require_same_grid(const PeriodicGrid& a, const PeriodicGrid& b) {
  if (!(a == b)) throw GridMismatch(a.n_points(), b.n_points());
}

/// Fourier coefficients of a real field, stored for k = 0..n/2.
class Spectrum {
 public:
  explicit Spectrum(PeriodicGrid grid)
      : grid_(std::move(grid)), coeffs_(grid_.n_modes(), Complex{}) {}

  const PeriodicGrid& grid() const noexcept { return grid_; }
  std::span<Complex> coeffs() noexcept { return coeffs_; }
  std::span<const Complex> coeffs() const noexcept { return coeffs_; }

  /// Coefficient of exp(i k z) for k in [-n/2, n/2].
  Complex operator()(int k) const {
    const int kk = std::abs(k);
    if (kk > grid_.nyquist()) {
      throw std::out_of_range("Spectrum: wavenumber out of range");
    }
    const Complex c = coeffs_[static_cast<std::size_t>(kk)];
    return k < 0 ? std::conj(c) : c;
  }
  Complex& operator[](std::size_t k) { return coeffs_[k]; }
  const Complex& operator[](std::size_t k) const { return coeffs_[k]; }
  std::size_t size() const noexcept { return coeffs_.size(); }

 private:
  PeriodicGrid grid_;
  std::vector<Complex> coeffs_;
};

/// Real periodic function sampled on a PeriodicGrid.
class RealField {
 public:
  explicit RealField(PeriodicGrid grid, double fill = 0.0)
      : grid_(std::move(grid)), values_(grid_.n_points(), fill) {}

  RealField(PeriodicGrid grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.n_points()) {
      throw std::invalid_argument("RealField: expected " +
                                  std::to_string(grid_.n_points()) +
                                  " samples, got " +
                                  std::to_string(values_.size()));
    }
  }

  template <class F>
    requires std::is_invocable_r_v<double, F, double>
  static RealField from_function(const PeriodicGrid& grid, F&& f) {
    RealField out(grid);
    for (std::size_t j = 0; j < grid.n_points(); ++j) out.values_[j] = f(grid.node(j));
    return out;
  }

  const PeriodicGrid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& data() const noexcept { return values_; }
  double& operator[](std::size_t j) { return values_[j]; }
  double operator[](std::size_t j) const { return values_[j]; }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  RealField& operator+=(const RealField& o) {
    require_same_grid(grid_, o.grid_);
    for (std::size_t j = 0; j < values_.size(); ++j) values_[j] += o.values_[j];
    return *this;
  }
  RealField& operator-=(const RealField& o) {
    require_same_grid(grid_, o.grid_);
    for (std::size_t j = 0; j < values_.size(); ++j) values_[j] -= o.values_[j];
    return *this;
  }
  RealField& operator*=(double a) noexcept {
    for (auto& v : values_) v *= a;
    return *this;
  }
  RealField& operator+=(double a) noexcept {
    for (auto& v : values_) v += a;
    return *this;
  }

  friend RealField operator+(RealField a, const RealField& b) { return a += b; }
  friend RealField operator-(RealField a, const RealField& b) { return a -= b; }
  friend RealField operator*(double s, RealField a) { return a *= s; }
  friend RealField operator*(RealField a, double s) { return a *= s; }
  friend RealField operator-(RealField a) { return a *= -1.0; }

 private:
  PeriodicGrid grid_;
  std::vector<double> values_;
};

inline Spectrum to_spectrum(const RealField& f) {
  Spectrum s(f.grid());
  f.grid().forward(f.values(), s.coeffs());
  return s;
}

inline RealField to_field(const Spectrum& s) {
  RealField f(s.grid());
  s.grid().inverse(s.coeffs(), f.values());
  return f;
}

}  // namespace gmodel
