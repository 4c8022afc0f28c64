#pragma once

#include <random>
#include <string>

#include "nhnoise/nhnoise.hpp"

namespace nhnoise::testing {

inline LatticeSpec single_site(double delta, double gamma, double eta, double beta, cplx drive) {
  UniformParams p;
  p.n_sites = 1;
  p.delta = delta;
  p.gamma = gamma;
  p.eta = eta;
  p.beta = beta;
  p.drive = drive;
  return make_uniform(p);
}

inline LatticeSpec preset_model(const std::string& scenario) {
  return spec_from_json(load_scenario(scenario).model);
}

inline json preset_parameters(const std::string& scenario) { return load_scenario(scenario).parameters; }

inline double max_abs(const CMat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// Random lattice whose drives are chosen so that a random alpha is an exact
/// mean-field fixed point.
struct RandomCase {
  LatticeSpec spec;
  SteadyState steady;
};

inline RandomCase random_case(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double a, double b) { return a + (b - a) * u(rng); };
  LatticeSpec s;
  s.n_sites = 1 + static_cast<std::size_t>(rng() % 6);
  s.boundary = (rng() % 2 == 0) ? Boundary::open : Boundary::periodic;
  s.g = range(0.0, 1.0);
  s.kappa = range(-0.5, 0.5);
  const auto n = static_cast<Eigen::Index>(s.n_sites);
  CVec alpha(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.beta.push_back(range(-2.0, 2.0));
    s.delta.push_back(range(-1.0, 1.0));
    s.eta.push_back(range(0.05, 1.0));
    s.gamma.push_back(minimum_gamma(s.kappa) + range(0.0, 0.5));
    alpha[i] = std::polar(range(0.1, 1.5), range(-kPi, kPi));
  }
  if (rng() % 4 == 0) s.excess_noise.push_back({static_cast<std::size_t>(rng() % s.n_sites), range(0.0, 30.0)});
  // sqrt(2 eta) s = i H alpha + i beta |alpha|^2 alpha.
  const CMat h = linear_hamiltonian_unchecked(s);
  const CVec hv = h * alpha;
  s.drives.resize(s.n_sites);
  for (Eigen::Index i = 0; i < n; ++i)
    s.drives[static_cast<std::size_t>(i)] =
        I * (hv[i] + s.beta[static_cast<std::size_t>(i)] * std::norm(alpha[i]) * alpha[i]) /
        std::sqrt(2.0 * s.eta[static_cast<std::size_t>(i)]);
  const double res = nhnoise::max_abs(meanfield_rhs(s, alpha));
  return {s, make_steady_state(alpha, res, res < 1e-12)};
}

}  // namespace nhnoise::testing
