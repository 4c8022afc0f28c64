#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "nhnoise/meanfield.hpp"

namespace nhnoise {

/// Linearized fluctuation dynamics dv/dt = A v + G for v = (da, da^dagger),
/// with A = -i H_N and white-noise correlator <G G^dag> = D.
struct NoiseSystem {
  CMat hamiltonian;  // H_N
  CMat drift;        // A = -i H_N
  CMat diffusion;    // D
  std::size_t n_sites = 0;
};

/// Steady-state second moments M = <v v^dagger>.
struct MomentMatrix {
  CMat m;
  std::size_t n_sites = 0;
};

struct StabilityReport {
  bool stable = false;
  double max_im_lambda = 0.0;
};

inline constexpr double kStabilityMargin = 1e-9;

/// A = -i H_N for the lattice linearized about a converged steady state.
inline CMat build_noise_hamiltonian(const LatticeSpec& s, const SteadyState& steady) {
  if (!steady.converged) throw ParameterError("build_noise_hamiltonian: steady state not converged");
  if (steady.size() != s.n_sites) throw ParameterError("build_noise_hamiltonian: size mismatch");
  require_valid(s, "build_noise_hamiltonian");
  return -I * kerr_linearization(s, steady.alpha);
}

inline NoiseSystem make_noise_system(const LatticeSpec& s, const SteadyState& steady) {
  NoiseSystem sys;
  sys.drift = build_noise_hamiltonian(s, steady);
  sys.hamiltonian = I * sys.drift;
  sys.diffusion = build_diffusion(s);
  sys.n_sites = s.n_sites;
  return sys;
}

/// Block-swap permutation applied from both sides: Sigma X Sigma.
inline CMat block_swap(const CMat& x) {
  const auto n = x.rows() / 2;
  CMat out(x.rows(), x.cols());
  out.topLeftCorner(n, n) = x.bottomRightCorner(n, n);
  out.bottomRightCorner(n, n) = x.topLeftCorner(n, n);
  out.topRightCorner(n, n) = x.bottomLeftCorner(n, n);
  out.bottomLeftCorner(n, n) = x.topRightCorner(n, n);
  return out;
}

inline CVec noise_spectrum(const NoiseSystem& sys) {
  Eigen::ComplexEigenSolver<CMat> es(sys.hamiltonian, false);
  if (es.info() != Eigen::Success) throw NumericalError("noise_spectrum: eigensolver did not converge");
  return es.eigenvalues();
}

inline StabilityReport stability_of_spectrum(const CVec& lambda) {
  StabilityReport r;
  r.max_im_lambda = lambda.imag().maxCoeff();
  r.stable = r.max_im_lambda < -kStabilityMargin;
  return r;
}

/// Stable iff every eigenvalue of H_N has Im(lambda) < -1e-9.
inline StabilityReport is_stable(const NoiseSystem& sys) {
  return stability_of_spectrum(noise_spectrum(sys));
}

/// Solves A X + X A^dagger + C = 0 by complex Schur reduction
/// (Bartels-Stewart). A must have no eigenvalue pair with
/// lambda_i + conj(lambda_j) = 0.
inline CMat solve_continuous_lyapunov(const CMat& a, const CMat& c) {
  const auto n = a.rows();
  Eigen::ComplexSchur<CMat> schur(a);
  if (schur.info() != Eigen::Success) throw NumericalError("solve_lyapunov: Schur decomposition failed");
  const CMat& t = schur.matrixT();
  const CMat& q = schur.matrixU();
  const CMat ct = q.adjoint() * c * q;
  // T Y + Y T^dagger = -C~, solved column by column from the right.
  CMat y = CMat::Zero(n, n);
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    CVec rhs = -ct.col(j);
    for (Eigen::Index k = j + 1; k < n; ++k) rhs -= std::conj(t(j, k)) * y.col(k);
    CMat lhs = t;
    lhs.diagonal().array() += std::conj(t(j, j));
    y.col(j) = lhs.triangularView<Eigen::Upper>().solve(rhs);
  }
  return q * y * q.adjoint();
}

/// Steady-state moments of a stable noise system. Refuses marginal or
/// unstable drift with UnstableError carrying max Im(lambda).
inline MomentMatrix solve_lyapunov(const NoiseSystem& sys) {
  const StabilityReport st = is_stable(sys);
  if (!st.stable)
    throw UnstableError("solve_lyapunov: noise Hamiltonian is unstable or marginal (max Im lambda = " +
                            std::to_string(st.max_im_lambda) + ")",
                        st.max_im_lambda);
  CMat m = solve_continuous_lyapunov(sys.drift, sys.diffusion);
  m = 0.5 * (m + m.adjoint());
  const double res = (sys.drift * m + m * sys.drift.adjoint() + sys.diffusion).norm();
  const double scale = std::max(sys.diffusion.norm(), 1e-300);
  if (!(res < 1e-10 * scale))
    throw NumericalError("solve_lyapunov: residual " + std::to_string(res / scale) +
                         " (relative) exceeds 1e-10; system is near-marginal");
  return {m, sys.n_sites};
}

inline constexpr double kDbFloor = 1e-12;

inline double to_db(double ratio) { return 10.0 * std::log10(std::max(ratio, kDbFloor)); }

namespace detail {

inline double quadrature_variance(const MomentMatrix& m, const SteadyState& steady,
                                  std::size_t site, double sign, const char* who) {
  if (site >= m.n_sites || steady.size() != m.n_sites)
    throw ParameterError(std::string(who) + ": site out of range or size mismatch");
  const cplx a = steady.alpha[static_cast<Eigen::Index>(site)];
  if (std::abs(a) == 0.0) throw ParameterError(std::string(who) + ": zero amplitude at site");
  const auto i = static_cast<Eigen::Index>(site);
  const auto n = static_cast<Eigen::Index>(m.n_sites);
  const cplx e2 = std::polar(1.0, -2.0 * std::arg(a));
  return (m.m(i, i) + m.m(n + i, n + i)).real() + sign * 2.0 * (e2 * m.m(i, n + i)).real();
}

}  // namespace detail

/// <X^2> for X = da e^{-i theta} + da^dag e^{i theta}, theta = arg(alpha); vacuum = 1.
inline double amplitude_quadrature_variance(const MomentMatrix& m, const SteadyState& steady,
                                            std::size_t site) {
  return detail::quadrature_variance(m, steady, site, +1.0, "intensity_noise_db");
}

/// <P^2> for P = -i(da e^{-i theta} - da^dag e^{i theta}); vacuum = 1.
inline double phase_quadrature_variance(const MomentMatrix& m, const SteadyState& steady,
                                        std::size_t site) {
  return detail::quadrature_variance(m, steady, site, -1.0, "phase_noise_db");
}

inline double intensity_noise_db(const MomentMatrix& m, const SteadyState& steady, std::size_t site) {
  return to_db(amplitude_quadrature_variance(m, steady, site));
}

inline double phase_noise_db(const MomentMatrix& m, const SteadyState& steady, std::size_t site) {
  return to_db(phase_quadrature_variance(m, steady, site));
}

/// Symmetrized <dn_i dn_j> with dn_i = conj(alpha_i) da_i + alpha_i da_i^dag.
inline RMat covariance_map(const MomentMatrix& m, const SteadyState& steady) {
  const auto n = static_cast<Eigen::Index>(m.n_sites);
  if (steady.size() != m.n_sites) throw ParameterError("covariance_map: size mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(steady.alpha[i]) == 0.0) throw ParameterError("covariance_map: zero amplitude at site");
  CMat c = CMat::Zero(2 * n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = std::conj(steady.alpha[i]);
    c(n + i, i) = steady.alpha[i];
  }
  const CMat full = c.transpose() * m.m * c.conjugate();
  RMat out = full.real();
  return 0.5 * (out + out.transpose());
}

/// Per-site noise summary, the row format of the `noise` report.
struct SiteNoise {
  double photon_number;
  double intensity_db;
  double phase_db;
};

inline std::vector<SiteNoise> site_noise(const MomentMatrix& m, const SteadyState& steady) {
  std::vector<SiteNoise> out;
  for (std::size_t i = 0; i < m.n_sites; ++i)
    out.push_back({std::norm(steady.alpha[static_cast<Eigen::Index>(i)]),
                   intensity_noise_db(m, steady, i), phase_noise_db(m, steady, i)});
  return out;
}

}  // namespace nhnoise
