#pragma once

// Even m-fold traveling waves g(x, t) = phi(x - c t) of the g-model. The
// profile equation
//     F[c, phi] = -c phi' + 2 N phi + N(phi^2) - 2 Q(phi'' N phi - phi N phi'') = 0
// maps cosine series to sine series. Solutions are computed by a bordered
// Newton method in (f_1..f_K, c) with f_1 pinned to the amplitude s, and
// continued in s from the bifurcation speed c_m = 2/(1+m^2).

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gmodel/error.hpp"
#include "gmodel/spectral.hpp"

namespace gmodel::waves {

/// phi(xi) = sum_{k=1..K} f_k cos(m k xi).
struct CosineSeries {
  int m_fold = 1;
  std::vector<double> coeffs;  // coeffs[k-1] = f_k

  CosineSeries() = default;
  CosineSeries(int m, std::vector<double> c) : m_fold(m), coeffs(std::move(c)) {
    if (m < 1) throw std::invalid_argument("CosineSeries: m_fold must be >= 1");
  }

  static CosineSeries zero(int m, int K) {
    return CosineSeries(m, std::vector<double>(static_cast<std::size_t>(K), 0.0));
  }
  /// amplitude * cos(m k xi) in a K-term series.
  static CosineSeries mode(int m, int K, int k, double amplitude) {
    CosineSeries s = zero(m, K);
    s.coeffs.at(static_cast<std::size_t>(k - 1)) = amplitude;
    return s;
  }

  int K() const noexcept { return static_cast<int>(coeffs.size()); }
  double f(int k) const { return coeffs.at(static_cast<std::size_t>(k - 1)); }

  double operator()(double xi) const {
    double v = 0.0;
    for (int k = 1; k <= K(); ++k) v += f(k) * std::cos(m_fold * k * xi);
    return v;
  }

  /// Zero-padded or truncated copy with K2 terms.
  CosineSeries resized(int K2) const {
    CosineSeries out = zero(m_fold, K2);
    for (int k = 1; k <= std::min(K(), K2); ++k) out.coeffs[static_cast<std::size_t>(k - 1)] = f(k);
    return out;
  }
};

/// sum_{k=1..K} b_k sin(m k xi).
struct SineSeries {
  int m_fold = 1;
  std::vector<double> coeffs;  // coeffs[k-1] = b_k

  int K() const noexcept { return static_cast<int>(coeffs.size()); }
  double b(int k) const { return coeffs.at(static_cast<std::size_t>(k - 1)); }
};

/// Speed at which the mode-n branch leaves phi = 0.
inline double bifurcation_speed(int n) {
  if (n < 1) throw std::invalid_argument("bifurcation_speed: n must be >= 1");
  const double nn = n;
  return 2.0 / (1.0 + nn * nn);
}

/// Smallest power-of-two grid (>= 8 points) whose dealiasing cutoff holds
/// every mode m*K of a K-term m-fold series.
inline PeriodicGrid evaluation_grid(int m, int K) {
  std::size_t n = 8;
  while (static_cast<long>(n / 3) < static_cast<long>(m) * K) n *= 2;
  return PeriodicGrid(n);
}

namespace detail {

inline void check_fits(const PeriodicGrid& grid, int m, int K) {
  if (static_cast<long>(m) * K > grid.dealias_cutoff()) {
    throw TruncationOverflow("wave series with m = " + std::to_string(m) + ", K = " +
                             std::to_string(K) + " exceeds the dealiasing cutoff " +
                             std::to_string(grid.dealias_cutoff()) + " of a " +
                             std::to_string(grid.n_points()) + "-point grid");
  }
}

inline Spectrum cosine_spectrum(const CosineSeries& s, const PeriodicGrid& grid) {
  check_fits(grid, s.m_fold, s.K());
  Spectrum out(grid);
  for (int k = 1; k <= s.K(); ++k) {
    out[static_cast<std::size_t>(s.m_fold * k)] = 0.5 * s.f(k);
  }
  return out;
}

inline RealField with(const Spectrum& s, auto&& symbol, bool odd) {
  Spectrum t = s;
  apply_symbol(t, symbol, odd);
  return to_field(t);
}

inline Spectrum dealiased(const RealField& f) {
  Spectrum s = to_spectrum(f);
  truncate(s);
  return s;
}

inline Complex d1(int k) { return derivative_symbol(k, 1); }
inline double d2(int k) { return -static_cast<double>(k) * k; }
inline Complex nd2(int k) { return n_symbol(k) * d2(k); }

// The fields of a cosine series that F and its derivative need.
struct Profile {
  Profile(const CosineSeries& s, const PeriodicGrid& grid)
      : hat(cosine_spectrum(s, grid)),
        value(to_field(hat)),
        zz(with(hat, d2, false)),
        n(with(hat, n_symbol, true)),
        nzz(with(hat, nd2, true)) {}

  Spectrum hat;
  RealField value, zz, n, nzz;
};

// -c h' + 2 N h, spectrally.
inline Spectrum linear_part(double c, const Spectrum& h_hat) {
  Spectrum out(h_hat.grid());
  for (int k = 0; k <= h_hat.grid().nyquist(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    out[i] = (-c * d1(k) + 2.0 * n_symbol(k)) * h_hat[i];
  }
  return out;
}

// out += N(a) - 2 Q(b) with a, b already dealiased spectra.
inline void add_nonlinear(Spectrum& out, const Spectrum& a, const Spectrum& b) {
  for (int k = 0; k <= out.grid().nyquist(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    out[i] += n_symbol(k) * a[i] - 2.0 * q_symbol(k) * b[i];
  }
  out[static_cast<std::size_t>(out.grid().nyquist())] = 0.0;
}

}  // namespace detail

/// b_k = coefficient of sin(m k xi) in f, k = 1..K.
inline SineSeries sine_projection(const RealField& f, int m, int K) {
  detail::check_fits(f.grid(), m, K);
  const Spectrum s = to_spectrum(f);
  SineSeries out{m, std::vector<double>(static_cast<std::size_t>(K))};
  for (int k = 1; k <= K; ++k) out.coeffs[static_cast<std::size_t>(k - 1)] = -2.0 * s[static_cast<std::size_t>(m * k)].imag();
  return out;
}

/// a_k = coefficient of cos(m k xi) in f, k = 1..K.
inline CosineSeries cosine_projection(const RealField& f, int m, int K) {
  detail::check_fits(f.grid(), m, K);
  const Spectrum s = to_spectrum(f);
  CosineSeries out = CosineSeries::zero(m, K);
  for (int k = 1; k <= K; ++k) out.coeffs[static_cast<std::size_t>(k - 1)] = 2.0 * s[static_cast<std::size_t>(m * k)].real();
  return out;
}

inline RealField sample(const CosineSeries& s, const PeriodicGrid& grid) {
  return to_field(detail::cosine_spectrum(s, grid));
}

inline RealField sample(const SineSeries& s, const PeriodicGrid& grid) {
  detail::check_fits(grid, s.m_fold, s.K());
  Spectrum out(grid);
  for (int k = 1; k <= s.K(); ++k) {
    out[static_cast<std::size_t>(s.m_fold * k)] = Complex{0.0, -0.5 * s.b(k)};
  }
  return to_field(out);
}

/// Sup-norm of the sine series, measured on its evaluation grid.
inline double sup_norm(const SineSeries& s) {
  return gmodel::sup_norm(sample(s, evaluation_grid(s.m_fold, s.K())));
}

/// F[c, phi] as a field on `grid`.
inline RealField residual_field(double c, const CosineSeries& phi, const PeriodicGrid& grid) {
  using namespace detail;
  const Profile p(phi, grid);
  RealField square(grid), bracket(grid);
  for (std::size_t j = 0; j < grid.n_points(); ++j) {
    square[j] = p.value[j] * p.value[j];
    bracket[j] = p.zz[j] * p.n[j] - p.value[j] * p.nzz[j];
  }
  Spectrum out = linear_part(c, p.hat);
  add_nonlinear(out, dealiased(square), dealiased(bracket));
  return to_field(out);
}

/// Sine coefficients of F[c, phi] on modes m, 2m, .., K m.
inline SineSeries residual_F(double c, const CosineSeries& phi, const PeriodicGrid& grid) {
  return sine_projection(residual_field(c, phi, grid), phi.m_fold, phi.K());
}

inline SineSeries residual_F(double c, const CosineSeries& phi) {
  return residual_F(c, phi, evaluation_grid(phi.m_fold, phi.K()));
}

/// Linearization of F in phi at (c, phi), reusable across directions h.
class Linearization {
 public:
  Linearization(double c, const CosineSeries& phi, const PeriodicGrid& grid)
      : c_(c), m_(phi.m_fold), K_(phi.K()), grid_(grid), p_(phi, grid) {}

  /// dF[c, phi] h as a field.
  RealField apply_field(const CosineSeries& h) const {
    using namespace detail;
    if (h.m_fold != m_) throw std::invalid_argument("gateaux_derivative: m_fold mismatch");
    const Profile q(h, grid_);
    RealField prod(grid_), bracket(grid_);
    for (std::size_t j = 0; j < grid_.n_points(); ++j) {
      prod[j] = 2.0 * p_.value[j] * q.value[j];
      bracket[j] = p_.zz[j] * q.n[j] - p_.value[j] * q.nzz[j] + q.zz[j] * p_.n[j] -
                   q.value[j] * p_.nzz[j];
    }
    Spectrum out = linear_part(c_, q.hat);
    add_nonlinear(out, dealiased(prod), dealiased(bracket));
    return to_field(out);
  }

  SineSeries apply(const CosineSeries& h) const {
    return sine_projection(apply_field(h), m_, K_);
  }

  /// K x K matrix of the map f -> sine coefficients, column j = dF cos(m j xi).
  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd J(K_, K_);
    for (int j = 1; j <= K_; ++j) {
      const SineSeries col = apply(CosineSeries::mode(m_, K_, j, 1.0));
      for (int i = 1; i <= K_; ++i) J(i - 1, j - 1) = col.b(i);
    }
    return J;
  }

 private:
  double c_;
  int m_, K_;
  PeriodicGrid grid_;
  detail::Profile p_;
};

inline SineSeries gateaux_derivative(double c, const CosineSeries& phi, const CosineSeries& h) {
  if (phi.K() != h.K()) throw std::invalid_argument("gateaux_derivative: truncation mismatch");
  return Linearization(c, phi, evaluation_grid(phi.m_fold, phi.K())).apply(h);
}

/// Linearization at (c_n, 0) over modes 1..K with m = 1.
struct KernelReport {
  int n = 0;
  int K = 0;
  double c_n = 0.0;
  std::vector<double> diagonal;   // diagonal[j-1]: sine coefficient j of dF cos(j xi)
  double max_off_diagonal = 0.0;
  std::vector<int> kernel_modes;  // modes with |diagonal| <= 1e-14
  double smallest_nonzero = 0.0;
  int smallest_nonzero_mode = 0;
  double separation_bound = 0.0;  // min_{j != n} j |c_n - c_j|
  double transversality = 0.0;    // sine coefficient n of d_c dF[c_n, 0] cos(n xi)

  bool simple_kernel() const { return kernel_modes.size() == 1 && kernel_modes[0] == n; }
  bool separated() const { return smallest_nonzero >= separation_bound * (1.0 - 1e-10); }
  bool transversal() const { return std::abs(transversality) > 1e-12; }
  bool ok() const { return simple_kernel() && separated() && transversal(); }
};

inline constexpr double kKernelZero = 1e-14;

inline KernelReport kernel_check(int n, int K) {
  if (n < 1 || n > K) throw std::invalid_argument("kernel_check: need 1 <= n <= K");
  KernelReport r;
  r.n = n;
  r.K = K;
  r.c_n = bifurcation_speed(n);

  const PeriodicGrid grid = evaluation_grid(1, K);
  const CosineSeries zero = CosineSeries::zero(1, K);
  const Eigen::MatrixXd L = Linearization(r.c_n, zero, grid).matrix();
  r.smallest_nonzero = std::numeric_limits<double>::infinity();
  r.separation_bound = std::numeric_limits<double>::infinity();
  for (int j = 1; j <= K; ++j) {
    const double d = L(j - 1, j - 1);
    r.diagonal.push_back(d);
    for (int i = 1; i <= K; ++i) {
      if (i != j) r.max_off_diagonal = std::max(r.max_off_diagonal, std::abs(L(i - 1, j - 1)));
    }
    if (std::abs(d) <= kKernelZero) {
      r.kernel_modes.push_back(j);
    } else if (std::abs(d) < r.smallest_nonzero) {
      r.smallest_nonzero = std::abs(d);
      r.smallest_nonzero_mode = j;
    }
    if (j != n) {
      r.separation_bound =
          std::min(r.separation_bound, j * std::abs(r.c_n - bifurcation_speed(j)));
    }
  }
  if (K == 1) r.separation_bound = 0.0;

  // dF[c, 0] is affine in c, so the difference at c = 1 and c = 0 is exact.
  const CosineSeries h = CosineSeries::mode(1, K, n, 1.0);
  const SineSeries at1 = Linearization(1.0, zero, grid).apply(h);
  const SineSeries at0 = Linearization(0.0, zero, grid).apply(h);
  r.transversality = at1.b(n) - at0.b(n);
  return r;
}

struct ContinuationConfig {
  int m_fold = 1;
  int K = 64;
  double s_max = 0.05;  // sign selects the branch direction
  double ds = 1e-3;
  double newton_tol = 1e-12;
  int newton_max_iter = 25;

  void validate() const {
    if (m_fold < 1) throw std::invalid_argument("m_fold must be >= 1");
    if (K < 1) throw std::invalid_argument("K must be >= 1");
    if (!(ds > 0.0) || !std::isfinite(ds)) throw std::invalid_argument("ds must be positive");
    if (!(s_max != 0.0) || !std::isfinite(s_max)) throw std::invalid_argument("s_max must be nonzero");
    if (!(newton_tol > 0.0)) throw std::invalid_argument("newton_tol must be positive");
    if (newton_max_iter < 1) throw std::invalid_argument("newton_max_iter must be >= 1");
  }
};

struct WaveBranchPoint {
  double s = 0.0;
  double c = 0.0;
  CosineSeries phi;
  double residual_sup = 0.0;
  int newton_iters = 0;
};

inline constexpr double kMaxCondition = 1e14;

/// Solves F[c, phi] = 0 with f_1 = s by Newton's method on the bordered
/// (K+1)-square system.
inline WaveBranchPoint newton_solve(double c_guess, const CosineSeries& phi_guess, double s,
                                    const ContinuationConfig& cfg) {
  cfg.validate();
  if (!(s != 0.0) || !std::isfinite(s)) {
    throw std::invalid_argument("newton_solve: amplitude s must be nonzero");
  }
  if (phi_guess.m_fold != cfg.m_fold) {
    throw std::invalid_argument("newton_solve: guess has the wrong m_fold");
  }
  const int K = cfg.K;
  const int m = cfg.m_fold;
  const PeriodicGrid grid = evaluation_grid(m, K);

  double c = c_guess;
  CosineSeries phi = phi_guess.resized(K);
  phi.coeffs[0] = s;

  for (int it = 0;; ++it) {
    const SineSeries R = residual_F(c, phi, grid);
    const double res = sup_norm(R);
    if (!std::isfinite(res)) throw NewtonDiverged(it, res);
    if (res <= cfg.newton_tol) return {s, c, phi, res, it};
    if (it >= cfg.newton_max_iter) throw NewtonDiverged(it, res);

    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(K + 1, K + 1);
    J.topLeftCorner(K, K) = Linearization(c, phi, grid).matrix();
    // d/dc F = -phi' = sum m k f_k sin(m k xi)
    for (int k = 1; k <= K; ++k) J(k - 1, K) = static_cast<double>(m) * k * phi.f(k);
    J(K, 0) = 1.0;

    Eigen::VectorXd rhs(K + 1);
    for (int k = 1; k <= K; ++k) rhs(k - 1) = R.b(k);
    rhs(K) = phi.f(1) - s;

    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
    const double condition = 1.0 / lu.rcond();
    if (!(condition <= kMaxCondition)) throw SingularJacobian(condition);
    const Eigen::VectorXd dx = lu.solve(rhs);
    for (int k = 1; k <= K; ++k) phi.coeffs[static_cast<std::size_t>(k - 1)] -= dx(k - 1);
    phi.coeffs[0] = s;
    c -= dx(K);
  }
}

/// Residual of a converged point re-evaluated with K2 terms (zero padded).
inline double truncation_recheck(const WaveBranchPoint& p, int K2) {
  return sup_norm(residual_F(p.c, p.phi.resized(K2)));
}

/// Image of a solution under xi -> xi + pi/m: f_k -> (-1)^k f_k.
inline CosineSeries half_period_shift(const CosineSeries& phi) {
  CosineSeries out = phi;
  for (int k = 1; k <= out.K(); k += 2) out.coeffs[static_cast<std::size_t>(k - 1)] *= -1.0;
  return out;
}

enum class BranchTermination { ReachedSMax, NewtonFailure };

inline std::string_view to_string(BranchTermination t) {
  return t == BranchTermination::ReachedSMax ? "ReachedSMax" : "NewtonFailure";
}

struct Branch {
  std::vector<WaveBranchPoint> points;
  BranchTermination termination = BranchTermination::ReachedSMax;
  std::string detail;
};

inline constexpr int kMaxHalvings = 6;

/// Natural-parameter continuation in s from (c_m, 0): points at ds, 2 ds, ..
/// up to s_max. A failed Newton solve halves the step, at most 6 times in a
/// row; the partial branch is returned after that.
inline Branch continue_branch(const ContinuationConfig& cfg) {
  cfg.validate();
  const double dir = cfg.s_max > 0.0 ? 1.0 : -1.0;
  const double target = std::abs(cfg.s_max);

  Branch branch;
  double s_abs = 0.0;
  double c = bifurcation_speed(cfg.m_fold);
  CosineSeries phi = CosineSeries::zero(cfg.m_fold, cfg.K);
  double step = cfg.ds;
  int halvings = 0;

  while (s_abs < target * (1.0 - 1e-12)) {
    double next = s_abs + step;
    // Snap to the ds lattice and to s_max so the usual points are exact.
    const double lattice = std::round(next / cfg.ds) * cfg.ds;
    if (std::abs(next - lattice) <= 1e-9 * cfg.ds) next = lattice;
    if (next > target || target - next <= 1e-9 * cfg.ds) next = target;
    const double s = dir * next;

    try {
      WaveBranchPoint p = newton_solve(c, phi, s, cfg);
      c = p.c;
      phi = p.phi;
      s_abs = next;
      branch.points.push_back(std::move(p));
      step = cfg.ds;
      halvings = 0;
    } catch (const Error& e) {
      if (halvings == kMaxHalvings) {
        branch.termination = BranchTermination::NewtonFailure;
        branch.detail = "at s = " + format_number(s) + ": " + e.what();
        return branch;
      }
      ++halvings;
      step *= 0.5;
    }
  }
  return branch;
}

}  // namespace gmodel::waves
