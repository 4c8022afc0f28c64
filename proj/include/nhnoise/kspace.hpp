#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "nhnoise/topology.hpp"

namespace nhnoise {

/// <F_k F_k^dag> rate 2(gamma_tot + 2 kappa sin k) of a uniform chain.
inline double langevin_k_correlator(const LatticeSpec& s, double k) {
  const UniformView u = uniform_view(s, "langevin_k_correlator");
  return 2.0 * (u.total_loss() + 2.0 * u.kappa * std::sin(k));
}

struct BogoliubovResponse {
  double k = 0.0;
  std::vector<double> omega_grid;
  std::vector<cplx> mu;  // response of da_k to F_k
  std::vector<cplx> nu;  // response of da^dag_{-k} to F_k
};

namespace detail {

/// Column 0 of i (omega - H_N(k))^{-1}: (mu, nu).
inline std::array<cplx, 2> response_column(const Eigen::Matrix2cd& h, double omega) {
  const cplx a = omega - h(0, 0), b = -h(0, 1), c = -h(1, 0), d = omega - h(1, 1);
  const cplx det = a * d - b * c;
  if (std::abs(det) == 0.0) throw UnstableError("bogoliubov_coefficients: resonance (singular response)", 0.0);
  return {I * d / det, -I * c / det};
}

inline void require_stable_block(const Eigen::Matrix2cd& h, const char* who) {
  Eigen::ComplexEigenSolver<Eigen::Matrix2cd> es(h, false);
  const double top = es.eigenvalues().imag().maxCoeff();
  if (!(top < -kStabilityMargin))
    throw UnstableError(std::string(who) + ": Bloch block is unstable or marginal", top);
}

}  // namespace detail

inline BogoliubovResponse bogoliubov_coefficients(const LatticeSpec& s, double n, double k,
                                                  const std::vector<double>& omega_grid) {
  const Eigen::Matrix2cd h = hn_bloch(s, n, k);
  detail::require_stable_block(h, "bogoliubov_coefficients");
  BogoliubovResponse r;
  r.k = k;
  r.omega_grid = omega_grid;
  for (double w : omega_grid) {
    const auto col = detail::response_column(h, w);
    r.mu.push_back(col[0]);
    r.nu.push_back(col[1]);
  }
  return r;
}

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
};

struct KspaceOptions {
  double rel_tol = 1e-10;
  unsigned max_depth = 10;
  double omega_factor = 50.0;  // finite window is +-omega_factor x spectral radius
};

namespace detail {

/// Integral over the real line of a Lorentzian-type integrand: Gauss-Kronrod
/// on [-W, W] split at the resonance positions, plus both semi-infinite tails.
template <class F>
QuadratureResult integrate_line(F&& f, const Eigen::Matrix2cd& h, const KspaceOptions& opt) {
  using boost::math::quadrature::gauss_kronrod;
  Eigen::ComplexEigenSolver<Eigen::Matrix2cd> es(h, false);
  const double radius = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-12);
  const double w = opt.omega_factor * radius;
  std::vector<double> cuts{-w};
  for (int i = 0; i < 2; ++i) {
    // Resolve each resonance on its own scale: cuts at p and p +- {1, 10, 100} linewidths.
    const double p = es.eigenvalues()[i].real();
    const double width = std::max(std::abs(es.eigenvalues()[i].imag()), 1e-15 * radius);
    for (double c : {0.0, 1.0, -1.0, 10.0, -10.0, 100.0, -100.0}) {
      const double x = p + c * width;
      if (x > -w && x < w) cuts.push_back(x);
    }
  }
  cuts.push_back(w);
  std::sort(cuts.begin(), cuts.end());
  QuadratureResult r;
  auto add = [&](double a, double b) {
    double err = 0.0;
    r.value += gauss_kronrod<double, 61>::integrate(f, a, b, opt.max_depth, opt.rel_tol, &err);
    r.error += err;
  };
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    if (cuts[i + 1] > cuts[i]) add(cuts[i], cuts[i + 1]);
  add(-std::numeric_limits<double>::infinity(), -w);
  add(w, std::numeric_limits<double>::infinity());
  return r;
}

}  // namespace detail

/// (1/pi) * integral |mu_k + nu_k|^2 d omega.
inline QuadratureResult kspace_intensity_integral(const LatticeSpec& s, double n, double k,
                                                  const KspaceOptions& opt = {}) {
  const Eigen::Matrix2cd h = hn_bloch(s, n, k);
  detail::require_stable_block(h, "covariance_from_k");
  auto f = [&](double w) {
    const auto col = detail::response_column(h, w);
    return std::norm(col[0] + col[1]);
  };
  QuadratureResult r = detail::integrate_line(f, h, opt);
  r.value /= kPi;
  r.error /= kPi;
  return r;
}

struct KCovariance {
  double value = 0.0;
  double imag_residue = 0.0;
  double error = 0.0;
};

/// Per-momentum weights (gamma_tot + 2 kappa sin k) (1/pi) integral |mu + nu|^2
/// at the N physical momenta 2 pi m / N; shared by every lattice offset.
struct KWeights {
  std::vector<double> k;
  std::vector<double> weight;
  std::vector<double> error;
  double photon_number = 0.0;
};

inline KWeights kspace_weights(const LatticeSpec& s, double n, const KspaceOptions& opt = {}) {
  if (!s.periodic()) throw ParameterError("covariance_from_k: requires periodic boundary");
  KWeights w;
  w.photon_number = n;
  const auto nn = s.n_sites;
  for (std::size_t m = 0; m < nn; ++m) {
    const double k = 2.0 * kPi * static_cast<double>(m) / static_cast<double>(nn);
    const double c = 0.5 * langevin_k_correlator(s, k);
    const QuadratureResult q = kspace_intensity_integral(s, n, k, opt);
    w.k.push_back(k);
    w.weight.push_back(c * q.value);
    w.error.push_back(std::abs(c) * q.error);
  }
  return w;
}

inline KCovariance covariance_from_weights(const KWeights& w, long ell) {
  cplx acc = 0.0;
  double err = 0.0, mag = 0.0;
  for (std::size_t m = 0; m < w.k.size(); ++m) {
    acc += std::polar(1.0, w.k[m] * static_cast<double>(ell)) * w.weight[m];
    err += w.error[m];
    mag += std::abs(w.weight[m]);
  }
  const double pref = w.photon_number / static_cast<double>(w.k.size());
  KCovariance r;
  r.value = pref * acc.real();
  r.imag_residue = pref * acc.imag();
  r.error = pref * err;
  if (std::abs(r.imag_residue) > 1e-8 * std::max(pref * mag, 1e-300))
    throw NumericalError("covariance_from_k: imaginary residue " + std::to_string(r.imag_residue) +
                         " exceeds 1e-8 relative");
  return r;
}

/// <dn_m dn_{m+l}> of a uniform periodic chain with photon number n, as the
/// lattice sum over the N physical momenta.
inline KCovariance covariance_from_k_detail(const LatticeSpec& s, double n, long ell,
                                            const KspaceOptions& opt = {}) {
  return covariance_from_weights(kspace_weights(s, n, opt), ell);
}

inline double covariance_from_k(const LatticeSpec& s, double n, long ell, const KspaceOptions& opt = {}) {
  return covariance_from_k_detail(s, n, ell, opt).value;
}

/// Full N x N map C(m, m + l) = covariance_from_k(l), periodic in l.
inline RMat covariance_map_from_k(const LatticeSpec& s, double n, const KspaceOptions& opt = {}) {
  const auto nn = static_cast<Eigen::Index>(s.n_sites);
  const KWeights w = kspace_weights(s, n, opt);
  RVec row(nn);
  for (Eigen::Index l = 0; l < nn; ++l) row[l] = covariance_from_weights(w, static_cast<long>(l)).value;
  RMat c(nn, nn);
  for (Eigen::Index i = 0; i < nn; ++i)
    for (Eigen::Index j = 0; j < nn; ++j) c(i, j) = row[((j - i) % nn + nn) % nn];
  return c;
}

/// Fluctuation quanta <da_k^dag da_k> in momentum mode k:
/// (gamma_tot + 2 kappa sin(-k)) (1/pi) integral |nu_{-k}|^2 d omega.
inline double k_resolved_occupation(const LatticeSpec& s, double n, double k, const KspaceOptions& opt = {}) {
  const Eigen::Matrix2cd h = hn_bloch(s, n, -k);
  detail::require_stable_block(h, "k_resolved_occupation");
  auto f = [&](double w) { return std::norm(detail::response_column(h, w)[1]); };
  const QuadratureResult q = detail::integrate_line(f, h, opt);
  return 0.5 * langevin_k_correlator(s, -k) * q.value / kPi;
}

}  // namespace nhnoise
