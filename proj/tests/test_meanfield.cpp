#include <unsupported/Eigen/MatrixFunctions>

#include "support.hpp"

using namespace nhnoise;
using namespace nhnoise::testing;

namespace {

LatticeSpec uniform_chain(std::size_t n, Boundary b, double g, double kappa, double beta, double delta, double eta,
                          cplx drive) {
  UniformParams p;
  p.n_sites = n;
  p.boundary = b;
  p.g = g;
  p.kappa = kappa;
  p.beta = beta;
  p.delta = delta;
  p.eta = eta;
  p.drive = drive;
  return make_uniform(p);
}

}  // namespace

TEST(MeanfieldRhs, UndrivenVacuumIsFixedPoint) {
  const LatticeSpec s = uniform_chain(5, Boundary::periodic, 0.3, 0.1, 1.0, 0.2, 0.1, 0.0);
  EXPECT_EQ(nhnoise::max_abs(meanfield_rhs(s, CVec::Zero(5))), 0.0);
}

TEST(MeanfieldRhs, SingleLossySite) {
  const LatticeSpec s = single_site(0.0, 0.0, 1.0, 0.0, 1.0);
  CVec a(1);
  a[0] = std::sqrt(2.0);
  EXPECT_NEAR(std::abs(meanfield_rhs(s, a)[0]), 0.0, 1e-15);
}

TEST(MeanfieldRhs, RejectsLengthMismatch) {
  const LatticeSpec s = single_site(0.0, 0.0, 1.0, 0.0, 1.0);
  EXPECT_THROW(meanfield_rhs(s, CVec::Zero(2)), ParameterError);
}

TEST(MeanfieldRhs, MatchesComponentFormula) {
  std::mt19937_64 rng(11);
  for (int c = 0; c < 20; ++c) {
    const LatticeSpec s = random_case(rng).spec;
    const auto n = static_cast<Eigen::Index>(s.n_sites);
    CVec a = CVec::Random(n);
    const CVec f = meanfield_rhs(s, a);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      cplx expect = -(s.gamma[k] + s.eta[k]) * a[i] - I * s.delta[k] * a[i] -
                    I * s.beta[k] * std::norm(a[i]) * a[i] + std::sqrt(2.0 * s.eta[k]) * s.drives[k];
      const bool wrap = s.periodic();
      if (i > 0) expect += -I * (s.g - s.kappa) * a[i - 1];
      else if (wrap) expect += -I * (s.g - s.kappa) * a[n - 1];
      if (i + 1 < n) expect += -I * (s.g + s.kappa) * a[i + 1];
      else if (wrap) expect += -I * (s.g + s.kappa) * a[0];
      EXPECT_NEAR(std::abs(f[i] - expect), 0.0, 1e-13);
    }
  }
}

TEST(Transient, LossySiteDecaysExponentially) {
  const LatticeSpec s = single_site(0.4, 0.1, 0.2, 0.0, 0.0);
  TransientOptions o;
  o.n_out = 50;
  const Trajectory tr = integrate_transient(s, CVec::Ones(1), 10.0, o);
  ASSERT_EQ(tr.times.size(), 51u);
  for (std::size_t k = 0; k < tr.times.size(); ++k)
    EXPECT_NEAR(std::abs(tr.states[k][0]), std::exp(-0.3 * tr.times[k]), 1e-6);
}

TEST(Transient, LinearChainMatchesMatrixExponential) {
  LatticeSpec s = uniform_chain(6, Boundary::open, 0.4, 0.15, 0.0, 0.1, 0.2, 0.0);
  s.delta = {0.1, -0.2, 0.3, 0.0, 0.25, -0.1};
  s.drives = {1.0, cplx(0.0, 0.5), 0.0, 0.3, cplx(-0.2, 0.1), 0.8};
  const CMat h = linear_hamiltonian(s);
  CVec drive(6);
  for (Eigen::Index i = 0; i < 6; ++i) drive[i] = std::sqrt(2.0 * s.eta[0]) * s.drives[static_cast<std::size_t>(i)];
  const CVec fixed = (I * h).partialPivLu().solve(drive);
  CVec a0(6);
  a0 << 0.5, cplx(0, 1), -0.3, 0.0, cplx(0.2, -0.4), 1.0;
  TransientOptions o;
  o.n_out = 40;
  const Trajectory tr = integrate_transient(s, a0, 20.0, o);
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const CMat prop = (CMat(-I * h * tr.times[k])).exp();
    const CVec expect = fixed + prop * (a0 - fixed);
    EXPECT_LT(nhnoise::max_abs(CVec(tr.states[k] - expect)), 1e-6) << "t = " << tr.times[k];
  }
}

TEST(Transient, TimesStrictlyIncreasing) {
  const LatticeSpec s = preset_model("fig1_transient");
  const Trajectory tr = integrate_transient(s, CVec::Zero(30), 5.0);
  for (std::size_t k = 1; k < tr.times.size(); ++k) EXPECT_GT(tr.times[k], tr.times[k - 1]);
  EXPECT_THROW(integrate_transient(s, CVec::Zero(30), 0.0), ParameterError);
}

TEST(SteadyState, SingleSiteClosedForm) {
  const LatticeSpec s = single_site(0.35, 0.1, 0.25, 0.0, cplx(0.7, -0.2));
  const SteadyState ss = find_steady_state(s);
  ASSERT_TRUE(ss.converged);
  const cplx expect = std::sqrt(2.0 * 0.25) * cplx(0.7, -0.2) / cplx(0.35, 0.35);
  EXPECT_LT(std::abs(ss.alpha[0] - expect), 1e-10);
  EXPECT_EQ(ss.photon_numbers[0], std::norm(ss.alpha[0]));
}

TEST(SteadyState, LinearLimitEqualsDirectSolve) {
  LatticeSpec s = uniform_chain(8, Boundary::open, 0.5, 0.2, 0.0, 0.0, 0.1, 1.0);
  s.delta = sample_detunings({-0.5, 0.5, 3}, 8);
  s.drives = {1.0, 0.2, cplx(0, 0.5), 0.0, 0.7, cplx(0.3, 0.3), 0.1, 0.9};
  const SteadyState ss = find_steady_state(s);
  ASSERT_TRUE(ss.converged);
  CVec drive(8);
  for (Eigen::Index i = 0; i < 8; ++i) drive[i] = std::sqrt(0.2) * s.drives[static_cast<std::size_t>(i)];
  const CVec direct = (I * linear_hamiltonian(s)).partialPivLu().solve(drive);
  EXPECT_LT(nhnoise::max_abs(CVec(ss.alpha - direct)), 1e-9);
}

TEST(SteadyState, PeriodicChainIsUniformAndSolvesCubic) {
  const LatticeSpec s = preset_model("fig3_nhse");
  const SteadyState ss = find_steady_state(s);
  ASSERT_TRUE(ss.converged);
  const double n = ss.photon_numbers[0];
  for (Eigen::Index i = 1; i < ss.alpha.size(); ++i) EXPECT_LT(std::abs(ss.alpha[i] - ss.alpha[0]), 1e-10);
  EXPECT_LT(pbc_cubic_residual(s, std::norm(s.drives[0]), n), 1e-10);
}

TEST(SteadyState, ConvergedResidualBelowNewtonTolerance) {
  for (const char* name : {"fig1_transient", "fig2_immunity", "fig3_nhse"}) {
    const LatticeSpec s = preset_model(name);
    const SteadyState ss = find_steady_state(s);
    ASSERT_TRUE(ss.converged) << name;
    EXPECT_LT(nhnoise::max_abs(meanfield_rhs(s, ss.alpha)), 1e-10 * drive_scale(s)) << name;
    EXPECT_LT(nhnoise::max_abs(meanfield_rhs(s, ss.alpha)), 1e-8) << name;
  }
}

TEST(SteadyState, NewtonNeverIncreasesResidual) {
  std::mt19937_64 rng(17);
  for (int c = 0; c < 30; ++c) {
    const RandomCase rc = random_case(rng);
    const CVec start = rc.steady.alpha + 0.3 * CVec::Random(rc.steady.alpha.size());
    const double before = nhnoise::max_abs(meanfield_rhs(rc.spec, start));
    double after = 0.0;
    detail::newton_polish(rc.spec, start, 1e-12, 20, after);
    EXPECT_LE(after, before);
  }
}

TEST(PbcPhotonNumber, LinearLimit) {
  const LatticeSpec s = uniform_chain(10, Boundary::periodic, 0.3, 0.1, 0.0, -0.2, 0.05, 1.0);
  const auto r = pbc_photon_number(s, 2.5);
  ASSERT_EQ(r.size(), 1u);
  const double gt = 0.05 + 0.2, d = -0.2 + 0.6;
  EXPECT_NEAR(r[0], 2.0 * 0.05 * 2.5 / (gt * gt + d * d), 1e-14);
}

TEST(PbcPhotonNumber, ZeroFlux) {
  const LatticeSpec s = preset_model("fig4_phase");
  EXPECT_EQ(pbc_photon_number(s, 0.0), std::vector<double>{0.0});
}

TEST(PbcPhotonNumber, RootCountGoesOneThreeOne) {
  const LatticeSpec s = preset_model("fig4_phase");
  std::vector<std::size_t> counts;
  for (double f : log_grid(1e-3, 20.0, 4000)) {
    const std::size_t c = pbc_photon_number(s, f).size();
    if (counts.empty() || counts.back() != c) counts.push_back(c);
  }
  EXPECT_EQ(counts, (std::vector<std::size_t>{1, 3, 1}));
}

TEST(PbcPhotonNumber, RootsSolveCubic) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 0; c < 300; ++c) {
    const double eta = 0.01 + u(rng), flux = 10.0 * u(rng);
    const LatticeSpec s = uniform_chain(4, Boundary::periodic, u(rng), 0.0, 4.0 * u(rng) - 2.0, 2.0 * u(rng) - 1.0,
                                        eta, 1.0);
    for (double n : pbc_photon_number(s, flux)) {
      EXPECT_GE(n, 0.0);
      EXPECT_LT(pbc_cubic_residual(s, flux, n), 1e-12);
    }
  }
}

TEST(SweepFlux, LinearChainHasOneStableRootAndConstantBraid) {
  const LatticeSpec s = uniform_chain(12, Boundary::periodic, 0.05, 0.015, 0.0, -0.3, 0.01, 1.0);
  const auto sweep = sweep_flux(s, log_grid(1e-3, 20.0, 60), 256);
  std::optional<int> braid;
  for (const auto& p : sweep) {
    ASSERT_EQ(p.roots.size(), 1u);
    EXPECT_TRUE(p.roots[0].stable);
    ASSERT_TRUE(p.roots[0].braid.has_value());
    if (!braid) braid = p.roots[0].braid;
    EXPECT_EQ(*p.roots[0].braid, *braid);
  }
}

TEST(SweepFlux, UnstableRootsHaveNonNegativeGrowth) {
  const LatticeSpec s = preset_model("fig4_phase");
  std::size_t unstable = 0;
  for (const auto& p : sweep_flux(s, log_grid(0.03, 0.3, 200), 256))
    for (const auto& r : p.roots)
      if (!r.stable) {
        ++unstable;
        EXPECT_GE(r.max_im_lambda, -kStabilityMargin);
      }
  EXPECT_GT(unstable, 0u);
}

TEST(SweepFlux, RejectsNonMonotoneGrid) {
  const LatticeSpec s = preset_model("fig4_phase");
  EXPECT_THROW(sweep_flux(s, {0.1, 0.05}), ParameterError);
  EXPECT_THROW(sweep_flux(preset_model("fig2_immunity"), {0.1}), ParameterError);
}

TEST(PerturbationResponse, ZeroEpsilonGivesZeroResponse) {
  const LatticeSpec s = preset_model("fig1_transient");
  const SteadyState ss = find_steady_state(s);
  ASSERT_TRUE(ss.converged);
  const ResponseMap r = perturbation_response(s, ss, 15, 0.0, 20.0, 40);
  EXPECT_LT(r.values.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(PerturbationResponse, ReciprocalChainIsMirrorSymmetric) {
  const LatticeSpec s = uniform_chain(15, Boundary::open, 0.6, 0.0, 1.0, 0.2, 0.05, 0.75);
  const SteadyState ss = find_steady_state(s);
  ASSERT_TRUE(ss.converged);
  const ResponseMap r = perturbation_response(s, ss, 7, 0.01, 30.0, 60);
  const RMat mirrored = r.values.rowwise().reverse();
  EXPECT_LT((r.values - mirrored).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(chirality_ratio(r, 7), 1.0, 1e-6);
}

TEST(PerturbationResponse, RejectsBadInput) {
  const LatticeSpec s = single_site(0.0, 0.0, 1.0, 0.0, 1.0);
  const SteadyState bad = make_steady_state(CVec::Ones(1), 1.0, false);
  EXPECT_THROW(perturbation_response(s, bad, 0, 0.1, 1.0), ParameterError);
  const SteadyState ok = find_steady_state(s);
  EXPECT_THROW(perturbation_response(s, ok, 3, 0.1, 1.0), ParameterError);
}
