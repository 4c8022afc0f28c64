#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "nhnoise/topology.hpp"

namespace nhnoise {

/// Largest Im(lambda) of the periodic-chain noise Hamiltonian at photon
/// number n. The full 2N x 2N matrix is block diagonal in momentum, so this
/// equals the is_stable value of the real-space matrix.
inline double uniform_max_im_lambda(const LatticeSpec& s, double n) {
  const UniformView u = uniform_view(s, "uniform_max_im_lambda");
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < s.n_sites; ++m) {
    const double k = 2.0 * kPi * static_cast<double>(m) / static_cast<double>(s.n_sites);
    for (cplx l : hn_bloch_eigenvalues(u, n, k)) top = std::max(top, l.imag());
  }
  return top;
}

struct RootInfo {
  double n = 0.0;
  bool stable = false;
  double max_im_lambda = 0.0;
  std::optional<int> braid;  // empty when the grid sits on an exceptional point
};

struct FluxPoint {
  double flux = 0.0;
  std::vector<RootInfo> roots;
};

inline RootInfo analyze_root(const LatticeSpec& s, double n, std::size_t k_count) {
  RootInfo r;
  r.n = n;
  r.max_im_lambda = uniform_max_im_lambda(s, n);
  r.stable = r.max_im_lambda < -kStabilityMargin;
  try {
    r.braid = braid_degree(pbc_bands(s, n, k_count));
  } catch (const NumericalError&) {
    r.braid.reset();
  }
  return r;
}

/// Roots, stability and braid degree for each flux of a monotone grid.
inline std::vector<FluxPoint> sweep_flux(const LatticeSpec& s, const std::vector<double>& flux_grid,
                                         std::size_t k_count = 1024) {
  if (!s.periodic()) throw ParameterError("sweep_flux: requires periodic boundary");
  uniform_view(s, "sweep_flux");
  for (std::size_t i = 1; i < flux_grid.size(); ++i)
    if (!(flux_grid[i] > flux_grid[i - 1])) throw ParameterError("sweep_flux: flux grid must be strictly increasing");
  std::vector<FluxPoint> out;
  out.reserve(flux_grid.size());
  for (double f : flux_grid) {
    FluxPoint p;
    p.flux = f;
    for (double n : pbc_photon_number(s, f)) p.roots.push_back(analyze_root(s, n, k_count));
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0 && hi > lo) || count < 2) throw ParameterError("log_grid: need 0 < lo < hi and count >= 2");
  std::vector<double> g(count);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i)
    g[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  g.back() = hi;
  return g;
}

/// Smallest band separation |lambda_+ - lambda_-| over continuous momentum,
/// refined by Brent minimization around the best grid point.
inline double min_band_separation(const LatticeSpec& s, double n, std::size_t k_count = 1024) {
  const UniformView u = uniform_view(s, "min_band_separation");
  auto sep = [&](double q) {
    const auto ev = hn_bloch_eigenvalues(u, n, -q);
    return std::abs(ev[0] - ev[1]);
  };
  const auto grid = momentum_grid(k_count);
  std::size_t best = 0;
  for (std::size_t j = 1; j < grid.size(); ++j)
    if (sep(grid[j]) < sep(grid[best])) best = j;
  const double h = 2.0 * kPi / static_cast<double>(k_count);
  const auto r = boost::math::tools::brent_find_minima(sep, grid[best] - h, grid[best] + h, 52);
  return std::min(r.second, sep(grid[best]));
}

struct ExceptionalPoint {
  double n = 0.0;
  double q = 0.0;               // Bloch momentum where the bands touch
  double min_separation = 0.0;  // |lambda_+ - lambda_-| relative to the band scale
  bool confirmed = false;       // min_separation < kExceptionalTol after polishing
  int braid_below = 0;
  int braid_above = 0;
};

inline constexpr double kExceptionalTol = 1e-6;

namespace detail {

inline std::optional<int> braid_at(const LatticeSpec& s, double n, std::size_t k_count) {
  try {
    return braid_degree(pbc_bands(s, n, k_count));
  } catch (const NumericalError&) {
    return std::nullopt;
  }
}

inline double band_scale(const LatticeSpec& s, double n, std::size_t k_count) {
  const BandSet b = pbc_bands(s, n, k_count);
  return std::max(curve_scale(b.band(0)), curve_scale(b.band(1)));
}

/// Newton iteration on the discriminant D_k(n)^2 - (beta n)^2 = 0 in the
/// real unknowns (n, k), starting from the bisected braid change.
inline std::pair<double, double> polish_exceptional_point(const UniformView& u, double n, double k) {
  for (int it = 0; it < 50; ++it) {
    const cplx d = u.delta + 2.0 * u.beta * n + bloch_dispersion(u.g, u.kappa, k);
    const cplx f = d * d - u.beta * u.beta * n * n;
    const cplx fn = 2.0 * d * (2.0 * u.beta) - 2.0 * u.beta * u.beta * n;
    const cplx fk = 2.0 * d * cplx(-2.0 * u.g * std::sin(k), -2.0 * u.kappa * std::cos(k));
    const double det = fn.real() * fk.imag() - fk.real() * fn.imag();
    if (det == 0.0) break;
    const double dn = (f.real() * fk.imag() - fk.real() * f.imag()) / det;
    const double dk = (fn.real() * f.imag() - f.real() * fn.imag()) / det;
    n -= dn;
    k -= dk;
    if (std::abs(dn) <= 1e-15 * std::max(1e-300, std::abs(n)) && std::abs(dk) <= 1e-15) break;
  }
  return {n, std::remainder(k, 2.0 * kPi)};
}

inline double argmin_separation_q(const UniformView& u, double n, std::size_t k_count) {
  const auto grid = momentum_grid(k_count);
  double best_q = grid.front(), best = std::numeric_limits<double>::infinity();
  for (double q : grid) {
    const auto ev = hn_bloch_eigenvalues(u, n, -q);
    if (std::abs(ev[0] - ev[1]) < best) {
      best = std::abs(ev[0] - ev[1]);
      best_q = q;
    }
  }
  return best_q;
}

}  // namespace detail

/// Braid changes between photon numbers n_lo < n_hi. Each change is bisected,
/// then polished to the point where the two bands coalesce.
inline std::vector<ExceptionalPoint> exceptional_points_between(const LatticeSpec& s, double n_lo, double n_hi,
                                                                std::size_t steps = 200,
                                                                std::size_t k_count = 1024) {
  const UniformView u = uniform_view(s, "exceptional_points_between");
  std::vector<ExceptionalPoint> out;
  if (!(n_hi > n_lo)) return out;
  double prev_n = n_lo;
  auto prev = detail::braid_at(s, n_lo, k_count);
  for (std::size_t i = 1; i <= steps; ++i) {
    const double n = n_lo + (n_hi - n_lo) * static_cast<double>(i) / static_cast<double>(steps);
    const auto cur = detail::braid_at(s, n, k_count);
    if (prev && cur && *prev != *cur) {
      double a = prev_n, b = n;
      for (int it = 0; it < 80 && b - a > 1e-15 * std::max(1.0, b); ++it) {
        const double m = 0.5 * (a + b);
        const auto v = detail::braid_at(s, m, k_count);
        if (!v) {
          a = b = m;
          break;
        }
        if (*v == *prev) a = m; else b = m;
      }
      const double n0 = 0.5 * (a + b);
      const auto [n_ep, k_ep] =
          detail::polish_exceptional_point(u, n0, -detail::argmin_separation_q(u, n0, k_count));
      ExceptionalPoint e;
      e.n = n_ep;
      e.q = -k_ep;
      const auto ev = hn_bloch_eigenvalues(u, n_ep, k_ep);
      e.min_separation = std::abs(ev[0] - ev[1]) / detail::band_scale(s, n_ep, k_count);
      e.confirmed = e.min_separation < kExceptionalTol && std::abs(n_ep - n0) <= (n_hi - n_lo) / steps;
      e.braid_below = *prev;
      e.braid_above = *cur;
      out.push_back(e);
    }
    if (cur) {
      prev = cur;
      prev_n = n;
    }
  }
  return out;
}

/// Stable roots of a sweep ordered by photon number (the position along the
/// S-shaped response curve).
inline std::vector<RootInfo> stable_roots_by_n(const std::vector<FluxPoint>& sweep) {
  std::vector<RootInfo> out;
  for (const auto& p : sweep)
    for (const auto& r : p.roots)
      if (r.stable) out.push_back(r);
  std::sort(out.begin(), out.end(), [](const RootInfo& a, const RootInfo& b) { return a.n < b.n; });
  return out;
}

/// Braid values along the stable roots with consecutive repeats collapsed.
inline std::vector<int> stable_braid_sequence(const std::vector<FluxPoint>& sweep) {
  std::vector<int> seq;
  for (const auto& r : stable_roots_by_n(sweep)) {
    if (!r.braid) continue;
    if (seq.empty() || seq.back() != *r.braid) seq.push_back(*r.braid);
  }
  return seq;
}

}  // namespace nhnoise
