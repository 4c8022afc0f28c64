#include <cstdio>

#include "nhnoise/nhnoise.hpp"

/// Injects excess noise into the middle of an open Kerr chain and prints the
/// intensity noise at every site with and without non-reciprocal coupling.
int main() {
  using namespace nhnoise;
  for (double kappa : {0.0, 0.04}) {
    UniformParams p;
    p.n_sites = 30;
    p.boundary = Boundary::open;
    p.g = 0.2;
    p.kappa = kappa;
    p.eta = 0.02;
    p.beta = 5.0;
    p.delta = -0.3;
    p.drive = 1.0;
    LatticeSpec clean = make_uniform(p);
    const SteadyState ss = find_steady_state(clean);
    if (!ss.converged) {
      std::fprintf(stderr, "steady state did not converge: %s\n", ss.diagnostic.c_str());
      return 1;
    }
    LatticeSpec noisy = clean;
    noisy.excess_noise = {{15, 20.0}};
    const MomentMatrix m0 = solve_lyapunov(make_noise_system(clean, ss));
    const MomentMatrix m1 = solve_lyapunov(make_noise_system(noisy, ss));
    std::printf("kappa = %.2f\nsite  baseline_db  injected_db\n", kappa);
    for (std::size_t i = 0; i < clean.n_sites; ++i)
      std::printf("%4zu  %11.3f  %11.3f\n", i, intensity_noise_db(m0, ss, i), intensity_noise_db(m1, ss, i));
  }
  return 0;
}
