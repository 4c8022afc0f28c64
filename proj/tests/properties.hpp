#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "fixtures.hpp"

namespace nhnoise::testing {

/// Worst deviations of the structural invariants over a batch of random cases.
struct PropertyTally {
  std::size_t cases = 0;
  std::size_t stable_cases = 0;
  double particle_hole = 0.0;     // max |Sigma conj(H) Sigma + H|
  double spectrum_mirror = 0.0;   // max distance of lambda to the set -conj(lambda), over radius
  double diffusion_min_eig = 0.0; // most negative eigenvalue of D over max |eigenvalue|
  double commutator = 0.0;        // max |M_ij - M_{N+j,N+i} - delta_ij|
  double uncertainty = 1e300;     // min <X^2><P^2>
  std::vector<std::string> failures;

  bool passed() const { return failures.empty(); }
};

inline double mirror_distance(const CVec& ev) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    double best = 1e300;
    for (Eigen::Index j = 0; j < ev.size(); ++j) best = std::min(best, std::abs(ev[j] + std::conj(ev[i])));
    worst = std::max(worst, best);
  }
  return worst;
}

/// Draws random cases until `stable_target` of them have a stable
/// linearization; every drawn case is checked for the spectral invariants.
inline PropertyTally run_property_cases(std::uint64_t seed, std::size_t stable_target) {
  std::mt19937_64 rng(seed);
  PropertyTally t;
  while (t.stable_cases < stable_target) {
    const RandomCase rc = random_case(rng);
    const std::string tag = "case " + std::to_string(t.cases);
    ++t.cases;
    const NoiseSystem sys = make_noise_system(rc.spec, rc.steady);
    const double ph = max_abs(CMat(block_swap(sys.hamiltonian.conjugate()) + sys.hamiltonian));
    t.particle_hole = std::max(t.particle_hole, ph);
    if (ph != 0.0) t.failures.push_back(tag + ": particle-hole identity off by " + std::to_string(ph));

    const CVec ev = noise_spectrum(sys);
    const double radius = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    const double mirror = mirror_distance(ev) / radius;
    t.spectrum_mirror = std::max(t.spectrum_mirror, mirror);
    if (mirror > 1e-8) t.failures.push_back(tag + ": spectrum not mirror symmetric");

    Eigen::SelfAdjointEigenSolver<CMat> es(sys.diffusion);
    const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
    const double low = std::min(0.0, es.eigenvalues().minCoeff() / top);
    t.diffusion_min_eig = std::min(t.diffusion_min_eig, low);
    if (low < -1e-12) t.failures.push_back(tag + ": diffusion not positive semidefinite");

    if (!stability_of_spectrum(ev).stable) continue;
    ++t.stable_cases;
    const MomentMatrix m = solve_lyapunov(sys);
    const auto n = static_cast<Eigen::Index>(rc.spec.n_sites);
    double comm = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        comm = std::max(comm, std::abs(m.m(i, j) - m.m(n + j, n + i) - (i == j ? 1.0 : 0.0)));
    t.commutator = std::max(t.commutator, comm);
    if (comm > 1e-8) t.failures.push_back(tag + ": commutator off by " + std::to_string(comm));
    for (std::size_t i = 0; i < rc.spec.n_sites; ++i) {
      const double u = amplitude_quadrature_variance(m, rc.steady, i) * phase_quadrature_variance(m, rc.steady, i);
      t.uncertainty = std::min(t.uncertainty, u);
      if (u < 1.0 - 1e-9) t.failures.push_back(tag + ": uncertainty product " + std::to_string(u));
    }
  }
  return t;
}

}  // namespace nhnoise::testing
