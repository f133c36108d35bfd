#pragma once

// Right-hand sides of the four model families on the periodic domain:
//
//   g-model        g_t = -2 N g - N(g^2) + 2 Q(g_zz N g - g N g_zz)
//   conduit/magma  u_t from u_t + (u^n)_z - (u^n (u^{-m} u_t)_z)_z = 0
//   eps-full       h_t from h_t - h_tzz + 2 h_z = -2 eps h h_z
//                                                 - eps h_zz h_t + eps h h_tzz
//   eps-cascade    first two orders (h0, h1) of h = sum eps^l h^(l)
//
// The conduit/magma and eps-full relations are implicit in the time
// derivative; they are solved by a Q-preconditioned, damped Picard iteration.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

#include "gmodel/error.hpp"
#include "gmodel/grid.hpp"
#include "gmodel/spectral.hpp"

namespace gmodel {

enum class ModelKind { GModel, Conduit, Magma, EpsFull, EpsCascade };

inline std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::GModel: return "gmodel";
    case ModelKind::Conduit: return "conduit";
    case ModelKind::Magma: return "magma";
    case ModelKind::EpsFull: return "eps-full";
    case ModelKind::EpsCascade: return "cascade";
  }
  return "unknown";
}

inline ModelKind parse_model_kind(std::string_view name) {
  for (auto k : {ModelKind::GModel, ModelKind::Conduit, ModelKind::Magma,
                 ModelKind::EpsFull, ModelKind::EpsCascade}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown model '" + std::string(name) + "'");
}

struct ModelSpec {
  ModelKind kind = ModelKind::GModel;
  double epsilon = 0.1;  // EpsFull / EpsCascade
  double magma_n = 2.0;  // Magma
  double magma_m = 1.0;  // Magma
  double picard_tol = 1e-12;
  int picard_max_iter = 200;

  static ModelSpec gmodel() { return {}; }
  static ModelSpec conduit() {
    ModelSpec s;
    s.kind = ModelKind::Conduit;
    return s;
  }
  static ModelSpec magma(double n, double m) {
    ModelSpec s;
    s.kind = ModelKind::Magma;
    s.magma_n = n;
    s.magma_m = m;
    return s;
  }
  static ModelSpec eps_full(double eps) {
    ModelSpec s;
    s.kind = ModelKind::EpsFull;
    s.epsilon = eps;
    return s;
  }
  static ModelSpec cascade(double eps) {
    ModelSpec s;
    s.kind = ModelKind::EpsCascade;
    s.epsilon = eps;
    return s;
  }

  bool uses_epsilon() const noexcept {
    return kind == ModelKind::EpsFull || kind == ModelKind::EpsCascade;
  }
  bool is_conduit_family() const noexcept {
    return kind == ModelKind::Conduit || kind == ModelKind::Magma;
  }

  /// (n, m); the conduit equation is magma with (2, 1).
  std::pair<double, double> exponents() const noexcept {
    if (kind == ModelKind::Conduit) return {2.0, 1.0};
    return {magma_n, magma_m};
  }

  void validate() const {
    if (uses_epsilon() && !(epsilon > 0.0 && epsilon < 1.0)) {
      throw std::invalid_argument("epsilon must lie in (0, 1)");
    }
    if (kind == ModelKind::Magma && !(magma_n >= 1.0 && magma_m >= 0.0)) {
      throw std::invalid_argument("magma exponents require n >= 1 and m >= 0");
    }
    if (!(picard_tol > 0.0) || picard_max_iter < 1) {
      throw std::invalid_argument("Picard tolerance and iteration cap must be positive");
    }
  }
};

/// First-order truncation of the eps-expansion.
struct CascadeState {
  RealField h0;
  RealField h1;
};

/// Result of an implicit time-derivative solve.
struct ImplicitSolve {
  RealField value;
  double residual = 0.0;  // sup-norm of the defining relation
  int iterations = 0;
};

namespace detail {

inline void require_finite(const RealField& f, const char* where) {
  if (!f.all_finite()) throw NonFiniteField(where);
}

inline RealField pointwise(const RealField& a, const RealField& b) {
  RealField p(a.grid());
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = a[j] * b[j];
  return p;
}

inline Spectrum truncated_spectrum(const RealField& f) {
  Spectrum s = to_spectrum(f);
  truncate(s);
  return s;
}

inline Spectrum with_symbol(Spectrum s, auto&& symbol, bool odd) {
  apply_symbol(s, symbol, odd);
  return s;
}

inline double minus_k2(int k) { return -static_cast<double>(k) * k; }

// sup-norm of (1 - d_zz) v - B where B is given spectrally.
inline double picard_residual(const Spectrum& v_hat, const Spectrum& forcing) {
  Spectrum r(v_hat.grid());
  for (std::size_t k = 0; k < r.size(); ++k) {
    const double kk = static_cast<double>(k);
    r[k] = (1.0 + kk * kk) * v_hat[k] - forcing[k];
  }
  return sup_norm(to_field(r));
}

// Solves (1 - d_zz) v = B(v) with the fixed point v <- Q B(v). `forcing`
// maps a field v to the spectrum of B(v). A step that raises the residual is
// halved, at most 8 times.
template <class Forcing>
ImplicitSolve picard_solve(const PeriodicGrid& grid, Forcing&& forcing,
                           double tol, int max_iter) {
  RealField v(grid);
  Spectrum v_hat(grid);
  Spectrum b = forcing(v);
  double res = picard_residual(v_hat, b);

  for (int it = 1; it <= max_iter; ++it) {
    const RealField target = to_field(with_symbol(b, q_symbol, false));
    const RealField delta = target - v;
    const double delta_norm = sup_norm(delta);

    double lambda = 1.0;
    RealField candidate = v + delta;
    Spectrum cand_hat = to_spectrum(candidate);
    Spectrum cand_b = forcing(candidate);
    double cand_res = picard_residual(cand_hat, cand_b);
    for (int halvings = 0; !(cand_res <= res) && cand_res > tol && halvings < 8;
         ++halvings) {
      lambda *= 0.5;
      candidate = v + lambda * delta;
      cand_hat = to_spectrum(candidate);
      cand_b = forcing(candidate);
      cand_res = picard_residual(cand_hat, cand_b);
    }
    if (!std::isfinite(cand_res) || (!(cand_res <= res) && cand_res > tol)) {
      throw PicardDiverged(it, std::isfinite(cand_res) ? cand_res : res);
    }

    const bool stalled = cand_res >= 0.5 * res;
    v = std::move(candidate);
    b = std::move(cand_b);
    res = cand_res;
    // Aim for residual <= tol; accept up to 10 tol once roundoff stalls it.
    if (lambda * delta_norm <= tol && (res <= tol || (stalled && res <= 10.0 * tol))) {
      return {std::move(v), res, it};
    }
  }
  throw PicardDiverged(max_iter, res);
}

}  // namespace detail

/// g-model time derivative. The mean of g is projected out first; all
/// products are dealiased.
inline RealField gmodel_rhs(const RealField& g) {
  using namespace detail;
  require_finite(g, "gmodel_rhs input");
  const PeriodicGrid& grid = g.grid();

  Spectrum g_hat = to_spectrum(g);
  const double g_mean = g_hat[0].real();
  g_hat[0] = 0.0;

  const Spectrum ng_hat = with_symbol(g_hat, n_symbol, true);
  const RealField ng = to_field(ng_hat);
  const RealField gzz = to_field(with_symbol(g_hat, minus_k2, false));
  const RealField ngzz = to_field(with_symbol(ng_hat, minus_k2, false));

  RealField square(grid);
  RealField bracket(grid);
  for (std::size_t j = 0; j < grid.n_points(); ++j) {
    const double gj = g[j] - g_mean;
    square[j] = gj * gj;
    bracket[j] = gzz[j] * ng[j] - gj * ngzz[j];
  }
  const Spectrum sq_hat = truncated_spectrum(square);
  const Spectrum br_hat = truncated_spectrum(bracket);

  Spectrum out(grid);
  for (int k = 0; k <= grid.nyquist(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    out[i] = -2.0 * ng_hat[i] - n_symbol(k) * sq_hat[i] +
             2.0 * q_symbol(k) * br_hat[i];
  }
  out[static_cast<std::size_t>(grid.nyquist())] = 0.0;
  return to_field(out);
}

namespace detail {

struct MagmaForcing {
  MagmaForcing(const RealField& u, const ModelSpec& spec)
      : a(u.grid()), b(u.grid()), source(u.grid()) {
    const auto [n, m] = spec.exponents();
    const double p = n - m;
    const RealField uz = derivative(u, 1);
    RealField un(u.grid());
    for (std::size_t j = 0; j < u.size(); ++j) {
      a[j] = std::pow(u[j], p) - 1.0;
      b[j] = m * std::pow(u[j], p - 1.0) * uz[j];
      un[j] = std::pow(u[j], n);
    }
    source = truncated_spectrum(un);
    apply_symbol(source, [](int k) { return Complex{0.0, -static_cast<double>(k)}; },
                 true);
  }

  // -(u^n)_z + ((u^{n-m} - 1) v_z - m u^{n-m-1} u_z v)_z
  Spectrum operator()(const RealField& v) const {
    const RealField vz = derivative(v, 1);
    RealField flux(v.grid());
    for (std::size_t j = 0; j < v.size(); ++j) flux[j] = a[j] * vz[j] - b[j] * v[j];
    Spectrum out = with_symbol(truncated_spectrum(flux),
                               [](int k) { return derivative_symbol(k, 1); }, true);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += source[k];
    return out;
  }

  RealField a;
  RealField b;
  Spectrum source;
};

struct EpsFullForcing {
  EpsFullForcing(const RealField& h, double eps)
      : h(h), hzz(derivative(h, 2)), epsilon(eps), source(h.grid()) {
    const RealField hz = derivative(h, 1);
    source = truncated_spectrum(pointwise(h, hz));
    const Spectrum hz_hat = to_spectrum(hz);
    for (std::size_t k = 0; k < source.size(); ++k) {
      source[k] = -2.0 * hz_hat[k] - 2.0 * eps * source[k];
    }
  }

  // -2 h_z - 2 eps h h_z - eps h_zz w + eps h w_zz
  Spectrum operator()(const RealField& w) const {
    const RealField wzz = derivative(w, 2);
    RealField prod(w.grid());
    for (std::size_t j = 0; j < w.size(); ++j) prod[j] = h[j] * wzz[j] - hzz[j] * w[j];
    Spectrum out = truncated_spectrum(prod);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = source[k] + epsilon * out[k];
    return out;
  }

  const RealField& h;
  RealField hzz;
  double epsilon;
  Spectrum source;
};

inline void require_positive(const RealField& u) {
  const double min_u = *std::min_element(u.values().begin(), u.values().end());
  if (!(min_u > 0.0)) throw NonPositiveU(min_u);
}

}  // namespace detail

/// Solves the conduit/magma relation for v = u_t, reporting the residual and
/// iteration count.
inline ImplicitSolve velocity_solve_detailed(const RealField& u, const ModelSpec& spec) {
  if (!spec.is_conduit_family()) {
    throw std::invalid_argument("velocity_solve: model must be conduit or magma");
  }
  detail::require_finite(u, "velocity_solve input");
  detail::require_positive(u);
  const detail::MagmaForcing forcing(u, spec);
  return detail::picard_solve(u.grid(), forcing, spec.picard_tol,
                              spec.picard_max_iter);
}

inline RealField velocity_solve(const RealField& u, const ModelSpec& spec) {
  return velocity_solve_detailed(u, spec).value;
}

/// Discrete residual v - (u^{n-m} v_z - m u^{n-m-1} u_z v)_z + (u^n)_z with
/// the same operators velocity_solve iterates on.
inline RealField velocity_residual(const RealField& u, const RealField& v,
                                   const ModelSpec& spec) {
  require_same_grid(u.grid(), v.grid());
  detail::require_positive(u);
  const detail::MagmaForcing forcing(u, spec);
  const Spectrum b = forcing(v);
  Spectrum r = to_spectrum(v);
  for (std::size_t k = 0; k < r.size(); ++k) {
    const double kk = static_cast<double>(k);
    r[k] = (1.0 + kk * kk) * r[k] - b[k];
  }
  return to_field(r);
}

inline void check_eps_range(double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) {
    throw std::invalid_argument("epsilon must lie in [0, 1)");
  }
}

/// Solves the eps-expanded conduit relation for h_t.
inline ImplicitSolve eps_full_solve(const RealField& h, double epsilon,
                                    const ModelSpec& spec) {
  check_eps_range(epsilon);
  detail::require_finite(h, "eps_full_rhs input");
  RealField u = epsilon * h;
  u += 1.0;
  detail::require_positive(u);
  const detail::EpsFullForcing forcing(h, epsilon);
  return detail::picard_solve(h.grid(), forcing, spec.picard_tol,
                              spec.picard_max_iter);
}

inline RealField eps_full_rhs(const RealField& h, double epsilon, const ModelSpec& spec) {
  return eps_full_solve(h, epsilon, spec).value;
}

/// h_t - h_tzz + 2 h_z + 2 eps h h_z + eps h_zz h_t - eps h h_tzz.
inline RealField eps_full_residual(const RealField& h, const RealField& ht,
                                   double epsilon) {
  require_same_grid(h.grid(), ht.grid());
  const detail::EpsFullForcing forcing(h, epsilon);
  const Spectrum b = forcing(ht);
  Spectrum r = to_spectrum(ht);
  for (std::size_t k = 0; k < r.size(); ++k) {
    const double kk = static_cast<double>(k);
    r[k] = (1.0 + kk * kk) * r[k] - b[k];
  }
  return to_field(r);
}

/// d/dt of (h0, h1):
///   h0_t = -2 N h0
///   h1_t = -2 N h1 + Q[-2 h0 h0_z + 2 h0_zz N h0 - 2 h0 N h0_zz]
inline CascadeState cascade_rhs(const CascadeState& state) {
  using namespace detail;
  const RealField& h0 = state.h0;
  require_same_grid(h0.grid(), state.h1.grid());
  require_finite(h0, "cascade_rhs h0");
  require_finite(state.h1, "cascade_rhs h1");
  const PeriodicGrid& grid = h0.grid();

  const Spectrum h0_hat = to_spectrum(h0);
  const Spectrum nh0_hat = with_symbol(h0_hat, n_symbol, true);
  const RealField nh0 = to_field(nh0_hat);
  const RealField h0z = to_field(
      with_symbol(h0_hat, [](int k) { return derivative_symbol(k, 1); }, true));
  const RealField h0zz = to_field(with_symbol(h0_hat, minus_k2, false));
  const RealField nh0zz = to_field(with_symbol(nh0_hat, minus_k2, false));

  RealField forcing(grid);
  for (std::size_t j = 0; j < grid.n_points(); ++j) {
    forcing[j] = -2.0 * h0[j] * h0z[j] + 2.0 * h0zz[j] * nh0[j] -
                 2.0 * h0[j] * nh0zz[j];
  }
  Spectrum f_hat = truncated_spectrum(forcing);
  apply_symbol(f_hat, q_symbol, false);

  Spectrum h1_rate = with_symbol(to_spectrum(state.h1), n_symbol, true);
  for (std::size_t k = 0; k < h1_rate.size(); ++k) {
    h1_rate[k] = -2.0 * h1_rate[k] + f_hat[k];
  }
  return {to_field(with_symbol(h0_hat, [](int k) { return -2.0 * n_symbol(k); }, true)),
          to_field(h1_rate)};
}

/// g = h0 + eps h1.
inline RealField reconstruct_g(const CascadeState& state, double epsilon) {
  return state.h0 + epsilon * state.h1;
}

}  // namespace gmodel
