#include "support.hpp"

using namespace nhnoise;
using namespace nhnoise::testing;

namespace {

struct Solved {
  LatticeSpec spec;
  SteadyState steady;
  NoiseSystem sys;
  MomentMatrix m;
};

Solved solve(const LatticeSpec& s) {
  const SteadyState ss = find_steady_state(s);
  if (!ss.converged) throw NumericalError("test: steady state did not converge");
  const NoiseSystem sys = make_noise_system(s, ss);
  return {s, ss, sys, solve_lyapunov(sys)};
}

/// Brute-force Lyapunov solve: (I kron A + conj(A) kron I) vec(M) = -vec(D).
CMat kronecker_lyapunov(const CMat& a, const CMat& d) {
  const auto n = a.rows();
  CMat big = CMat::Zero(n * n, n * n);
  for (Eigen::Index j = 0; j < n; ++j) big.block(j * n, j * n, n, n) += a;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) big.block(i * n, j * n, n, n).diagonal().array() += std::conj(a(i, j));
  const CVec x = big.partialPivLu().solve(-Eigen::Map<const CVec>(d.data(), n * n));
  return Eigen::Map<const CMat>(x.data(), n, n);
}

}  // namespace

TEST(NoiseHamiltonian, LinearLimitIsBlockDiagonal) {
  UniformParams p;
  p.n_sites = 5;
  p.g = 0.3;
  p.kappa = 0.1;
  p.delta = 0.2;
  p.eta = 0.1;
  p.drive = 1.0;
  const LatticeSpec s = make_uniform(p);
  const SteadyState ss = find_steady_state(s);
  const NoiseSystem sys = make_noise_system(s, ss);
  EXPECT_EQ(max_abs(CMat(sys.hamiltonian.topRightCorner(5, 5))), 0.0);
  EXPECT_EQ(max_abs(CMat(sys.hamiltonian.bottomLeftCorner(5, 5))), 0.0);
  EXPECT_EQ(max_abs(CMat(sys.hamiltonian.topLeftCorner(5, 5) - linear_hamiltonian(s))), 0.0);
  EXPECT_LT(max_abs(CMat(sys.drift + I * sys.hamiltonian)), 1e-15);
}

TEST(NoiseHamiltonian, KerrBlocks) {
  const LatticeSpec s = preset_model("fig3_nhse");
  const SteadyState ss = find_steady_state(s);
  const CMat h = build_noise_hamiltonian(s, ss) * I;
  const CMat hl = linear_hamiltonian(s);
  for (Eigen::Index i = 0; i < 20; ++i) {
    EXPECT_LT(std::abs(h(i, i) - (hl(i, i) + 2.0 * s.beta[0] * ss.photon_numbers[i])), 1e-12);
    EXPECT_LT(std::abs(h(i, 20 + i) - s.beta[0] * ss.alpha[i] * ss.alpha[i]), 1e-12);
  }
}

TEST(NoiseHamiltonian, ParticleHoleIdentityIsExact) {
  std::mt19937_64 rng(31);
  for (int c = 0; c < 50; ++c) {
    const RandomCase rc = random_case(rng);
    const CMat h = make_noise_system(rc.spec, rc.steady).hamiltonian;
    EXPECT_EQ(max_abs(CMat(block_swap(h.conjugate()) + h)), 0.0);
  }
}

TEST(NoiseHamiltonian, RejectsUnconvergedSteadyState) {
  const LatticeSpec s = single_site(0.0, 0.0, 1.0, 1.0, 1.0);
  EXPECT_THROW(build_noise_hamiltonian(s, make_steady_state(CVec::Ones(1), 1.0, false)), ParameterError);
}

TEST(Lyapunov, SingleLossySiteVacuum) {
  const Solved x = solve(single_site(0.3, 0.2, 0.4, 0.0, 1.0));
  CMat expect = CMat::Zero(2, 2);
  expect(0, 0) = 1.0;
  EXPECT_LT(max_abs(CMat(x.m.m - expect)), 1e-10);
}

TEST(Lyapunov, MatchesKroneckerSolve) {
  std::mt19937_64 rng(37);
  int checked = 0;
  while (checked < 40) {
    const RandomCase rc = random_case(rng);
    const NoiseSystem sys = make_noise_system(rc.spec, rc.steady);
    if (!is_stable(sys).stable) continue;
    const CMat brute = kronecker_lyapunov(sys.drift, sys.diffusion);
    const CMat m = solve_lyapunov(sys).m;
    EXPECT_LT(max_abs(CMat(m - brute)), 1e-8 * std::max(1.0, max_abs(brute)));
    ++checked;
  }
}

TEST(Lyapunov, ResidualAndCommutator) {
  for (const char* name : {"fig2_immunity", "fig3_nhse"}) {
    const Solved x = solve(preset_model(name));
    const CMat res = x.sys.drift * x.m.m + x.m.m * x.sys.drift.adjoint() + x.sys.diffusion;
    EXPECT_LT(res.norm(), 1e-10 * x.sys.diffusion.norm()) << name;
    const auto n = static_cast<Eigen::Index>(x.spec.n_sites);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        EXPECT_NEAR(std::abs(x.m.m(i, j) - x.m.m(n + j, n + i) - (i == j ? 1.0 : 0.0)), 0.0, 1e-8) << name;
    EXPECT_LT(max_abs(CMat(x.m.m - x.m.m.adjoint())), 1e-12 * max_abs(x.m.m)) << name;
  }
}

TEST(Lyapunov, RefusesUnstableDrift) {
  const LatticeSpec s = preset_model("fig4_phase");
  std::optional<double> middle;
  for (double f : log_grid(0.05, 0.2, 200)) {
    const auto r = pbc_photon_number(s, f);
    if (r.size() == 3) {
      middle = r[1];
      break;
    }
  }
  ASSERT_TRUE(middle.has_value());
  const UniformState u = uniform_state_at(s, *middle);
  const NoiseSystem sys = make_noise_system(u.spec, u.steady);
  try {
    solve_lyapunov(sys);
    FAIL() << "expected UnstableError";
  } catch (const UnstableError& e) {
    EXPECT_GE(e.max_growth_rate, 0.0);
  }
}

TEST(NoiseDb, CoherentLinearSiteIsShotNoise) {
  const Solved x = solve(single_site(-0.2, 0.1, 0.3, 0.0, cplx(0.5, 0.5)));
  EXPECT_NEAR(intensity_noise_db(x.m, x.steady, 0), 0.0, 1e-10);
  EXPECT_NEAR(phase_noise_db(x.m, x.steady, 0), 0.0, 1e-10);
}

TEST(NoiseDb, KerrSiteTradesIntensityForPhase) {
  const Solved x = solve(single_site(-0.3, 0.0, 0.02, 5.0, 1.0));
  const double xi = amplitude_quadrature_variance(x.m, x.steady, 0);
  const double pi = phase_quadrature_variance(x.m, x.steady, 0);
  ASSERT_LT(10.0 * std::log10(xi), 0.0);
  EXPECT_GT(10.0 * std::log10(pi), 0.0);
  EXPECT_GE(xi * pi, 1.0 - 1e-12);
}

TEST(NoiseDb, ZeroAmplitudeIsAnError) {
  UniformParams p;
  p.n_sites = 2;
  p.eta = 0.1;
  LatticeSpec s = make_uniform(p);
  s.drives[0] = 1.0;
  const Solved x = solve(s);
  EXPECT_THROW(intensity_noise_db(x.m, x.steady, 1), ParameterError);
  EXPECT_THROW(phase_noise_db(x.m, x.steady, 1), ParameterError);
  EXPECT_THROW(covariance_map(x.m, x.steady), ParameterError);
}

TEST(NoiseDb, FloorClampsLogarithm) { EXPECT_EQ(to_db(0.0), -120.0); }

TEST(CovarianceMap, DecoupledCoherentSites) {
  UniformParams p;
  p.n_sites = 4;
  p.eta = 0.2;
  LatticeSpec s = make_uniform(p);
  s.drives = {1.0, cplx(0, 0.5), 0.3, cplx(-0.7, 0.2)};
  const Solved x = solve(s);
  const RMat c = covariance_map(x.m, x.steady);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j)
      EXPECT_NEAR(c(i, j), i == j ? x.steady.photon_numbers[i] : 0.0, 1e-12);
}

TEST(CovarianceMap, IsSymmetric) {
  const Solved x = solve(preset_model("fig3_nhse"));
  const RMat c = covariance_map(x.m, x.steady);
  EXPECT_EQ((c - c.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Stability, LinearLossyChainIsStable) {
  std::mt19937_64 rng(41);
  for (int c = 0; c < 30; ++c) {
    RandomCase rc = random_case(rng);
    std::fill(rc.spec.beta.begin(), rc.spec.beta.end(), 0.0);
    const SteadyState ss = find_steady_state(rc.spec);
    ASSERT_TRUE(ss.converged);
    EXPECT_TRUE(is_stable(make_noise_system(rc.spec, ss)).stable);
  }
}

TEST(Stability, AgreesWithPerturbedTimeEvolution) {
  const LatticeSpec s = preset_model("fig4_phase");
  std::vector<double> roots;
  for (double f : log_grid(0.05, 0.2, 200)) {
    roots = pbc_photon_number(s, f);
    if (roots.size() == 3) break;
  }
  ASSERT_EQ(roots.size(), 3u);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (double n : roots) {
    const UniformState u = uniform_state_at(s, n);
    const NoiseSystem sys = make_noise_system(u.spec, u.steady);
    const StabilityReport st = is_stable(sys);
    CVec kick(20);
    for (Eigen::Index i = 0; i < 20; ++i) kick[i] = 1e-7 * cplx(nd(rng), nd(rng));
    // Ten e-folding times of the slowest or fastest mode.
    const double t_end = 10.0 / std::max(std::abs(st.max_im_lambda), 1e-4);
    const Trajectory tr = integrate_transient(u.spec, u.steady.alpha + kick, t_end);
    const double before = nhnoise::max_abs(kick);
    const double after = nhnoise::max_abs(CVec(tr.states.back() - u.steady.alpha));
    if (st.stable) EXPECT_LT(after, before) << "n = " << n;
    else EXPECT_GT(after, 100.0 * before) << "n = " << n;
  }
}

TEST(Stability, ExcessNoiseNeverLowersIntensityCovariance) {
  for (const char* name : {"fig2_immunity", "fig3_nhse"}) {
    LatticeSpec s = preset_model(name);
    if (std::string(name) == "fig2_immunity") {
      s.kappa = 0.04;
      std::fill(s.gamma.begin(), s.gamma.end(), minimum_gamma(s.kappa));
    }
    const Solved base = solve(s);
    s.excess_noise.push_back({s.n_sites / 2, 20.0});
    const Solved noisy = solve(s);
    const RMat c0 = covariance_map(base.m, base.steady), c1 = covariance_map(noisy.m, noisy.steady);
    for (Eigen::Index i = 0; i < c0.rows(); ++i)
      EXPECT_GE(c1(i, i), c0(i, i) * (1.0 - 1e-12)) << name << " site " << i;
  }
}

TEST(Stability, UncertaintyBoundOnPresets) {
  for (const char* name : {"fig1_transient", "fig2_immunity", "fig3_nhse"}) {
    const Solved x = solve(preset_model(name));
    for (std::size_t i = 0; i < x.spec.n_sites; ++i)
      EXPECT_GE(amplitude_quadrature_variance(x.m, x.steady, i) * phase_quadrature_variance(x.m, x.steady, i),
                1.0 - 1e-9)
          << name << " site " << i;
  }
  const LatticeSpec s = preset_model("fig4_phase");
  for (auto& [key, value] : preset_parameters("fig4_phase")["photon_numbers"].items()) {
    const UniformState u = uniform_state_at(s, value.get<double>());
    const MomentMatrix m = solve_lyapunov(make_noise_system(u.spec, u.steady));
    for (std::size_t i = 0; i < s.n_sites; ++i)
      EXPECT_GE(amplitude_quadrature_variance(m, u.steady, i) * phase_quadrature_variance(m, u.steady, i),
                1.0 - 1e-9)
          << key;
  }
}
