#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "nhnoise/noise.hpp"

namespace nhnoise {

/// Complex Bloch dispersion 2g cos k - 2i kappa sin k of the Hatano-Nelson hopping.
inline cplx bloch_dispersion(double g, double kappa, double k) {
  return cplx(2.0 * g * std::cos(k), -2.0 * kappa * std::sin(k));
}

/// Momentum-space noise Hamiltonian of a uniform periodic chain with photon
/// number n per site, in the gauge where alpha is real:
///   H_N(k) = -i gamma_tot + i beta n sigma_y + (delta + 2 beta n + w(k)) sigma_z.
/// Here k is the label of the kernel da_k ~ sum_n da_n e^{+ikn}; a plane wave
/// e^{iqn} on the lattice corresponds to k = -q.
inline Eigen::Matrix2cd hn_bloch(const LatticeSpec& s, double n, double k) {
  const UniformView u = uniform_view(s, "hn_bloch");
  const cplx d = u.delta + 2.0 * u.beta * n + bloch_dispersion(u.g, u.kappa, k);
  const cplx loss(0.0, -u.total_loss());
  const double bn = u.beta * n;
  Eigen::Matrix2cd h;
  h << loss + d, bn, -bn, loss - d;
  return h;
}

/// Closed-form eigenvalues -i gamma_tot +/- sqrt(D_k^2 - (beta n)^2).
inline std::array<cplx, 2> hn_bloch_eigenvalues(const UniformView& u, double n, double k) {
  const cplx d = u.delta + 2.0 * u.beta * n + bloch_dispersion(u.g, u.kappa, k);
  const double bn = u.beta * n;
  const cplx root = std::sqrt(d * d - bn * bn);
  const cplx loss(0.0, -u.total_loss());
  return {loss + root, loss - root};
}

struct BandSet {
  std::vector<double> k_grid;  // Bloch momentum q of e^{iqn}, in (-pi, pi]
  std::vector<std::array<cplx, 2>> bands;
  bool exceptional_point_on_grid = false;
  double min_band_separation = 0.0;
  CVec obc_eigenvalues;
  CMat obc_eigenvectors;

  std::vector<cplx> band(std::size_t b) const {
    std::vector<cplx> out;
    out.reserve(bands.size());
    for (const auto& x : bands) out.push_back(x[b]);
    return out;
  }
};

inline std::vector<double> momentum_grid(std::size_t k_count) {
  std::vector<double> k(k_count);
  for (std::size_t j = 0; j < k_count; ++j)
    k[j] = -kPi + 2.0 * kPi * static_cast<double>(j + 1) / static_cast<double>(k_count);
  return k;
}

namespace detail {

inline bool lex_less(cplx a, cplx b) {
  return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
}

/// Orders the pair to continue the previous labels; keeps the incoming order
/// on an exact tie.
inline std::array<cplx, 2> match_pair(const std::array<cplx, 2>& prev, std::array<cplx, 2> next) {
  const double keep = std::abs(next[0] - prev[0]) + std::abs(next[1] - prev[1]);
  const double swap = std::abs(next[1] - prev[0]) + std::abs(next[0] - prev[1]);
  if (swap < keep) std::swap(next[0], next[1]);
  return next;
}

}  // namespace detail

inline constexpr double kEpCollision = 1e-12;

/// Continuity-ordered PBC bands on a uniform grid of Bloch momenta.
inline BandSet pbc_bands(const LatticeSpec& s, double n, std::size_t k_count = 1024) {
  if (k_count < 64) throw ParameterError("pbc_bands: k_count must be >= 64");
  if (!s.periodic()) throw ParameterError("pbc_bands: requires periodic boundary");
  const UniformView u = uniform_view(s, "pbc_bands");
  BandSet out;
  out.k_grid = momentum_grid(k_count);
  out.bands.reserve(k_count);
  double min_sep = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k_count; ++j) {
    auto ev = hn_bloch_eigenvalues(u, n, -out.k_grid[j]);
    if (j == 0) {
      if (detail::lex_less(ev[1], ev[0])) std::swap(ev[0], ev[1]);
    } else {
      ev = detail::match_pair(out.bands.back(), ev);
    }
    min_sep = std::min(min_sep, std::abs(ev[0] - ev[1]));
    out.bands.push_back(ev);
  }
  out.min_band_separation = min_sep;
  out.exceptional_point_on_grid = min_sep < kEpCollision;
  return out;
}

struct ObcSpectrum {
  CVec eigenvalues;
  CMat eigenvectors;  // unit 2-norm columns
};

inline ObcSpectrum obc_spectrum(const CMat& h) {
  Eigen::ComplexEigenSolver<CMat> es(h, true);
  if (es.info() != Eigen::Success) throw NumericalError("obc_spectrum: eigensolver did not converge");
  ObcSpectrum out{es.eigenvalues(), es.eigenvectors()};
  for (Eigen::Index c = 0; c < out.eigenvectors.cols(); ++c) out.eigenvectors.col(c).normalize();
  return out;
}

/// Scale of a closed curve: diagonal of its bounding box (at least tiny > 0).
inline double curve_scale(const std::vector<cplx>& curve) {
  double xl = 1e300, xh = -1e300, yl = 1e300, yh = -1e300;
  for (cplx z : curve) {
    xl = std::min(xl, z.real());
    xh = std::max(xh, z.real());
    yl = std::min(yl, z.imag());
    yh = std::max(yh, z.imag());
  }
  return std::max(std::hypot(xh - xl, yh - yl), 1e-300);
}

/// Smallest distance from `z` to the closed polygon through `curve`.
inline double distance_to_curve(const std::vector<cplx>& curve, cplx z) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t m = curve.size();
  for (std::size_t j = 0; j < m; ++j) {
    const cplx a = curve[j], b = curve[(j + 1) % m];
    const cplx ab = b - a;
    const double len2 = std::norm(ab);
    double t = len2 > 0.0 ? ((z - a) * std::conj(ab)).real() / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, std::abs(z - (a + t * ab)));
  }
  return best;
}

struct WindingResult {
  int winding = 0;
  double raw = 0.0;  // total phase / 2 pi before rounding
};

/// Winding of the closed curve (last point joins the first) around lambda0,
/// counterclockwise positive.
inline WindingResult winding_number_detail(const std::vector<cplx>& curve, cplx lambda0) {
  if (curve.size() < 3) throw ParameterError("winding_number: curve needs at least 3 points");
  const double scale = curve_scale(curve);
  if (distance_to_curve(curve, lambda0) <= 1e-9 * scale)
    throw NumericalError("winding_number: reference point lies on the curve");
  double phase = 0.0;
  const std::size_t m = curve.size();
  for (std::size_t j = 0; j < m; ++j)
    phase += std::arg((curve[(j + 1) % m] - lambda0) / (curve[j] - lambda0));
  WindingResult r;
  r.raw = phase / (2.0 * kPi);
  r.winding = static_cast<int>(std::lround(r.raw));
  if (std::abs(r.raw - r.winding) > 1e-3)
    throw NumericalError("winding_number: rounding defect " + std::to_string(std::abs(r.raw - r.winding)) +
                         " (curve under-resolved)");
  return r;
}

inline int winding_number(const std::vector<cplx>& curve, cplx lambda0) {
  return winding_number_detail(curve, lambda0).winding;
}

/// Point-gap winding of det(H_N(q) - lambda0) over the Brillouin zone: the sum
/// of the band windings. Well defined even when the two bands exchange.
inline int spectral_winding(const BandSet& b, cplx lambda0) {
  std::vector<cplx> det;
  det.reserve(b.bands.size());
  for (const auto& x : b.bands) det.push_back((x[0] - lambda0) * (x[1] - lambda0));
  // The product curve can pass near 0 only if lambda0 is near a band.
  const double d = std::min(distance_to_curve(b.band(0), lambda0), distance_to_curve(b.band(1), lambda0));
  const double scale = std::max(curve_scale(b.band(0)), curve_scale(b.band(1)));
  if (d <= 1e-9 * scale) throw NumericalError("spectral_winding: reference point lies on a band");
  return winding_number(det, 0.0);
}

/// True if each band returns to its own starting point after one traversal.
inline bool bands_close_individually(const BandSet& b) {
  auto closing = detail::match_pair(b.bands.back(), b.bands.front());
  return closing[0] == b.bands.front()[0];
}

/// Braid degree of the two bands: total phase advance of lambda_+ - lambda_-
/// over one traversal in units of pi, i.e. the winding of (lambda_+ - lambda_-)^2
/// around 0. Each strand exchange contributes +-1.
inline int braid_degree(const BandSet& b) {
  const auto n0 = b.band(0), n1 = b.band(1);
  const double scale = std::max({curve_scale(n0), curve_scale(n1), 1e-300});
  std::vector<cplx> disc;
  disc.reserve(b.bands.size());
  double min_sep = std::numeric_limits<double>::infinity();
  for (const auto& x : b.bands) {
    const cplx d = x[0] - x[1];
    min_sep = std::min(min_sep, std::abs(d));
    disc.push_back(d * d);
  }
  if (min_sep <= 1e-9 * scale)
    throw NumericalError("braid_degree: at transition (exceptional point on the momentum grid)");
  return winding_number(disc, 0.0);
}

/// Braid degree directly from two sampled strands (same grid, closed traversal).
inline int braid_degree(const std::vector<cplx>& plus, const std::vector<cplx>& minus) {
  if (plus.size() != minus.size() || plus.size() < 3)
    throw ParameterError("braid_degree: strands must share a grid of >= 3 points");
  BandSet b;
  for (std::size_t j = 0; j < plus.size(); ++j) b.bands.push_back({plus[j], minus[j]});
  return braid_degree(b);
}

struct ModeLocalization {
  double center_of_mass;
  double ipr;
};

/// Site weights |u_i|^2 + |u_{N+i}|^2 (normalized) per eigenvector column.
inline std::vector<ModeLocalization> localization_metrics(const CMat& eigenvectors) {
  if (eigenvectors.rows() % 2 != 0) throw ParameterError("localization_metrics: expected 2N rows");
  const auto n = eigenvectors.rows() / 2;
  std::vector<ModeLocalization> out;
  for (Eigen::Index c = 0; c < eigenvectors.cols(); ++c) {
    RVec w = eigenvectors.col(c).head(n).cwiseAbs2() + eigenvectors.col(c).tail(n).cwiseAbs2();
    w /= w.sum();
    double com = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) com += static_cast<double>(i) * w[i];
    out.push_back({com, w.squaredNorm()});
  }
  return out;
}

/// Uniform periodic chain at photon number n: drive chosen from the cubic,
/// alpha from the closed form. Used whenever a photon number overrides the
/// time-marched steady state.
struct UniformState {
  LatticeSpec spec;
  SteadyState steady;
};

inline UniformState uniform_state_at(const LatticeSpec& s, double n) {
  UniformState u{with_flux(s, flux_for_photon_number(s, n)), {}};
  u.steady = uniform_steady_state(u.spec, n);
  return u;
}

/// OBC spectrum inside the PBC loops: every eigenvalue has non-zero spectral
/// winding or sits within `tol` (relative to loop scale) of a band.
struct InclusionReport {
  bool all_inside = true;
  std::size_t n_outside = 0;
};

inline InclusionReport obc_inside_pbc(const BandSet& b, const CVec& obc, double tol = 1e-6) {
  InclusionReport r;
  const auto b0 = b.band(0), b1 = b.band(1);
  const double scale = std::max(curve_scale(b0), curve_scale(b1));
  for (Eigen::Index i = 0; i < obc.size(); ++i) {
    const double d = std::min(distance_to_curve(b0, obc[i]), distance_to_curve(b1, obc[i]));
    bool inside = d <= tol * scale;
    if (!inside) inside = spectral_winding(b, obc[i]) != 0;
    if (!inside) {
      r.all_inside = false;
      ++r.n_outside;
    }
  }
  return r;
}

}  // namespace nhnoise
