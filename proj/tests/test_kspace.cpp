#include "support.hpp"

using namespace nhnoise;
using namespace nhnoise::testing;

namespace {

LatticeSpec uniform_ring(std::size_t n_sites, double g, double kappa, double beta, double delta, double eta,
                         std::optional<double> gamma = std::nullopt) {
  UniformParams p;
  p.n_sites = n_sites;
  p.boundary = Boundary::periodic;
  p.g = g;
  p.kappa = kappa;
  p.beta = beta;
  p.delta = delta;
  p.eta = eta;
  p.gamma = gamma;
  p.drive = 1.0;
  return make_uniform(p);
}

double relative_frobenius(const RMat& a, const RMat& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST(LangevinCorrelator, ValuesAtSpecialMomenta) {
  const LatticeSpec s = uniform_ring(8, 0.3, 0.1, 0.0, 0.0, 0.05, 0.4);
  EXPECT_DOUBLE_EQ(langevin_k_correlator(s, 0.0), 2.0 * 0.45);
  LatticeSpec edge = uniform_ring(8, 0.3, 0.1, 0.0, 0.0, 0.0);
  edge.drives.assign(8, 0.0);
  EXPECT_NEAR(langevin_k_correlator(edge, -kPi / 2.0), 0.0, 1e-16);
}

TEST(LangevinCorrelator, MomentumAverageIsSiteRate) {
  const LatticeSpec s = uniform_ring(12, 0.3, 0.17, 0.0, 0.0, 0.05, 0.4);
  const CMat d = build_diffusion(s);
  double sum = 0.0;
  for (std::size_t m = 0; m < 12; ++m) sum += langevin_k_correlator(s, 2.0 * kPi * static_cast<double>(m) / 12.0);
  EXPECT_NEAR(sum, d.topLeftCorner(12, 12).trace().real(), 1e-13);
}

TEST(Bogoliubov, LinearResponseIsLorentzian) {
  const LatticeSpec s = uniform_ring(8, 0.3, 0.1, 0.0, 0.2, 0.05);
  const std::vector<double> w{-3.0, -0.4, 0.0, 0.25, 1.7};
  for (double k : {0.0, 0.9, -2.2}) {
    const auto r = bogoliubov_coefficients(s, 0.7, k, w);
    const cplx lambda = hn_bloch(s, 0.7, k)(0, 0);
    for (std::size_t j = 0; j < w.size(); ++j) {
      EXPECT_EQ(r.nu[j], cplx(0.0));
      EXPECT_LT(std::abs(r.mu[j] - I / (w[j] - lambda)), 1e-14);
    }
  }
}

TEST(Bogoliubov, HighFrequencyLimit) {
  const LatticeSpec s = preset_model("fig3_nhse");
  const double n = find_steady_state(s).photon_numbers.mean();
  const auto r = bogoliubov_coefficients(s, n, 0.4, {1e7, -1e7});
  for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(std::abs(r.omega_grid[j] * r.mu[j]), 1.0, 1e-5);
}

TEST(Bogoliubov, UnstableBlockRejected) {
  EXPECT_THROW(bogoliubov_coefficients(preset_model("fig4_phase"), 0.1, 0.0, {0.0}), UnstableError);
}

TEST(KspaceWeights, ReciprocalLinearWeightIsOne) {
  const LatticeSpec s = uniform_ring(10, 0.3, 0.0, 0.0, 0.1, 0.05, 0.02);
  const KWeights w = kspace_weights(s, 0.5);
  for (std::size_t m = 0; m < w.k.size(); ++m) EXPECT_NEAR(w.weight[m], 1.0, 1e-9);
}

TEST(KspaceCovariance, ReciprocalLinearIsShotNoise) {
  const LatticeSpec s = uniform_ring(10, 0.3, 0.0, 0.0, 0.1, 0.05, 0.02);
  EXPECT_NEAR(covariance_from_k(s, 0.8, 0), 0.8, 1e-8);
  for (long l = 1; l < 10; ++l) EXPECT_NEAR(covariance_from_k(s, 0.8, l), 0.0, 1e-8);
}

TEST(KspaceCovariance, MatchesLyapunovOnRandomRings) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  for (int c = 0; c < 200 && checked < 12; ++c) {
    const double kappa = 0.3 * (u(rng) - 0.5);
    const LatticeSpec s = uniform_ring(3 + rng() % 8, u(rng), kappa, 2.0 * u(rng) - 1.0, 2.0 * u(rng) - 1.0,
                                       0.05 + 0.5 * u(rng), 2.0 * std::abs(kappa) + 0.3 * u(rng));
    const double n = 0.05 + u(rng);
    const UniformState us = uniform_state_at(s, n);
    if (!us.steady.converged) continue;
    const NoiseSystem sys = make_noise_system(us.spec, us.steady);
    if (!is_stable(sys).stable || is_stable(sys).max_im_lambda > -1e-3) continue;
    const RMat lyap = covariance_map(solve_lyapunov(sys), us.steady);
    EXPECT_LT(relative_frobenius(covariance_map_from_k(us.spec, n), lyap), 1e-6) << c;
    ++checked;
  }
  EXPECT_EQ(checked, 12);
}

TEST(KspaceCovariance, MatchesLyapunovOnPreset) {
  const LatticeSpec s = preset_model("fig3_nhse");
  const SteadyState ss = find_steady_state(s);
  const double n = ss.photon_numbers.mean();
  const RMat lyap = covariance_map(solve_lyapunov(make_noise_system(s, ss)), ss);
  EXPECT_LT(relative_frobenius(covariance_map_from_k(s, n), lyap), 1e-6);
}

TEST(KspaceCovariance, KappaReversalReflectsOffsets) {
  const LatticeSpec a = uniform_ring(9, 0.4, 0.1, 1.5, 0.2, 0.1);
  const LatticeSpec b = uniform_ring(9, 0.4, -0.1, 1.5, 0.2, 0.1);
  for (long l = 0; l < 9; ++l) EXPECT_NEAR(covariance_from_k(a, 0.05, l), covariance_from_k(b, 0.05, -l), 1e-9);
}

TEST(KspaceCovariance, ToleranceRefinementWithinErrorEstimate) {
  const LatticeSpec s = preset_model("fig3_nhse");
  const double n = find_steady_state(s).photon_numbers.mean();
  KspaceOptions coarse;
  coarse.rel_tol = 1e-6;
  KspaceOptions fine = coarse;
  fine.rel_tol = 0.5e-6;
  for (long l : {0L, 1L, 5L}) {
    const KCovariance a = covariance_from_k_detail(s, n, l, coarse);
    const KCovariance b = covariance_from_k_detail(s, n, l, fine);
    EXPECT_LT(std::abs(a.value - b.value), a.error);
  }
}

TEST(KspaceCovariance, RequiresPeriodicBoundary) {
  LatticeSpec s = uniform_ring(6, 0.4, 0.1, 1.0, 0.0, 0.1);
  s.boundary = Boundary::open;
  EXPECT_THROW(covariance_from_k(s, 0.1, 0), ParameterError);
}
