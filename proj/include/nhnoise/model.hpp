#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "nhnoise/core.hpp"

namespace nhnoise {

enum class Boundary { open, periodic };

inline const char* to_string(Boundary b) {
  return b == Boundary::open ? "open" : "periodic";
}

/// Phase-insensitive excess noise injected through the input port of `site`.
struct ExcessNoise {
  std::size_t site = 0;
  double db = 0.0;
};

/// Thermal occupation added to an input channel carrying `db` of excess
/// noise: symmetric-ordered quadrature noise is 10^(db/10) times vacuum.
inline double excess_occupation(double db) {
  return (std::pow(10.0, db / 10.0) - 1.0) / 2.0;
}

/// Physical description of a driven-dissipative Hatano-Nelson chain with
/// on-site Kerr nonlinearity. All rates are in units of a reference rate.
///
/// Site i couples to its left neighbour with g - kappa and to its right
/// neighbour with g + kappa; kappa > 0 transports excitations leftward.
struct LatticeSpec {
  std::size_t n_sites = 1;
  Boundary boundary = Boundary::open;
  double g = 0.0;
  double kappa = 0.0;
  std::vector<double> beta;
  std::vector<double> delta;
  std::vector<double> eta;
  std::vector<double> gamma;
  std::vector<cplx> drives;
  std::vector<ExcessNoise> excess_noise;
  std::uint64_t rng_seed = 0;

  std::size_t size() const { return n_sites; }
  bool periodic() const { return boundary == Boundary::periodic; }
  double total_loss(std::size_t i) const { return gamma[i] + eta[i]; }
};

/// Smallest on-site loss compatible with a positive bath correlation matrix.
inline double minimum_gamma(double kappa) { return 2.0 * std::abs(kappa); }

struct UniformParams {
  std::size_t n_sites = 1;
  Boundary boundary = Boundary::open;
  double g = 0.0;
  double kappa = 0.0;
  double beta = 0.0;
  double delta = 0.0;
  double eta = 0.0;
  std::optional<double> gamma;  // empty = minimum_gamma(kappa)
  cplx drive = 0.0;
};

inline LatticeSpec make_uniform(const UniformParams& p) {
  LatticeSpec s;
  s.n_sites = p.n_sites;
  s.boundary = p.boundary;
  s.g = p.g;
  s.kappa = p.kappa;
  s.beta.assign(p.n_sites, p.beta);
  s.delta.assign(p.n_sites, p.delta);
  s.eta.assign(p.n_sites, p.eta);
  s.gamma.assign(p.n_sites, p.gamma.value_or(minimum_gamma(p.kappa)));
  s.drives.assign(p.n_sites, p.drive);
  return s;
}

/// True when every per-site array is constant and no excess noise is present.
inline bool is_uniform(const LatticeSpec& s) {
  auto flat = [](const auto& v) {
    return std::all_of(v.begin(), v.end(), [&](const auto& x) { return x == v.front(); });
  };
  return flat(s.beta) && flat(s.delta) && flat(s.eta) && flat(s.gamma) && flat(s.drives) &&
         s.excess_noise.empty();
}

struct RandomDetuningSpec {
  double low = 0.0;
  double high = 0.0;
  std::uint64_t seed = 0;
};

/// Uniform samples on [low, high), reproducible from the seed.
inline std::vector<double> sample_detunings(const RandomDetuningSpec& r, std::size_t n) {
  if (n < 1) throw ParameterError("sample_detunings: n must be >= 1");
  if (!(r.low <= r.high)) throw ParameterError("sample_detunings: low > high");
  std::vector<double> out(n, r.low);
  if (r.low == r.high) return out;
  std::mt19937_64 rng(r.seed);
  // Explicit mapping instead of std::uniform_real_distribution so the stream
  // is identical across standard libraries.
  for (auto& x : out) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    x = r.low + (r.high - r.low) * u;
    if (x >= r.high) x = std::nextafter(r.high, r.low);
  }
  return out;
}

/// Linear, non-Hermitian single-particle Hamiltonian. The mean-field equation
/// of motion reads d(alpha)/dt = -i H alpha - i beta |alpha|^2 alpha + sqrt(2 eta) s.
/// Same chain with every photon number multiplied by `factor`: beta / factor
/// and drives * sqrt(factor). Mean-field dynamics in units of the steady
/// field and linearized noise in dB are unchanged.
inline LatticeSpec with_photon_scale(LatticeSpec s, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw ParameterError("with_photon_scale: factor must be positive");
  for (auto& b : s.beta) b /= factor;
  for (auto& d : s.drives) d *= std::sqrt(factor);
  return s;
}

inline CMat linear_hamiltonian_unchecked(const LatticeSpec& s) {
  const auto n = static_cast<Eigen::Index>(s.n_sites);
  CMat h = CMat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    h(i, i) = cplx(s.delta[i], -(s.gamma[i] + s.eta[i]));
    if (i > 0) h(i, i - 1) += s.g - s.kappa;
    if (i + 1 < n) h(i, i + 1) += s.g + s.kappa;
  }
  if (s.periodic()) {
    h(0, n - 1) += s.g - s.kappa;
    h(n - 1, 0) += s.g + s.kappa;
  }
  return h;
}

/// White-noise correlator D of the Langevin force vector (F, F^dagger):
/// D = [[<F F^dag>, 0], [0, <F^dag F>]]. Dissipative non-reciprocity
/// contributes +-2i kappa between neighbours; inputs add 2 eta (vacuum) and
/// 2 eta n_add on both diagonal blocks for excess noise.
inline CMat build_diffusion_unchecked(const LatticeSpec& s) {
  const auto n = static_cast<Eigen::Index>(s.n_sites);
  CMat d = CMat::Zero(2 * n, 2 * n);
  const cplx up = 2.0 * I * s.kappa;  // <f_i f_{i+1}^dag>
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 2.0 * (s.gamma[i] + s.eta[i]);
    if (i + 1 < n) {
      d(i, i + 1) += up;
      d(i + 1, i) += -up;
    }
  }
  if (s.periodic()) {
    d(n - 1, 0) += up;
    d(0, n - 1) += -up;
  }
  for (const auto& x : s.excess_noise) {
    const auto m = static_cast<Eigen::Index>(x.site);
    const double add = 2.0 * s.eta[x.site] * excess_occupation(x.db);
    d(m, m) += add;
    d(n + m, n + m) += add;
  }
  return d;
}

struct Violation {
  std::string what;
  std::vector<std::size_t> sites;

  std::string message() const {
    std::ostringstream os;
    os << what;
    if (!sites.empty()) {
      os << " at sites ";
      for (std::size_t k = 0; k < sites.size(); ++k) os << (k ? "," : "") << sites[k];
    }
    return os.str();
  }
};

inline constexpr double kTolPsd = 1e-10;

/// Every violated invariant, with site indices. An empty result means valid.
inline std::vector<Violation> validate(const LatticeSpec& s) {
  std::vector<Violation> out;
  const std::size_t n = s.n_sites;
  if (n < 1) {
    out.push_back({"n_sites must be >= 1", {}});
    return out;
  }
  auto check_len = [&](std::size_t len, const char* name) {
    if (len != n) out.push_back({std::string(name) + " length differs from n_sites", {}});
  };
  check_len(s.beta.size(), "beta");
  check_len(s.delta.size(), "delta");
  check_len(s.eta.size(), "eta");
  check_len(s.gamma.size(), "gamma");
  check_len(s.drives.size(), "drives");
  if (!out.empty()) return out;

  if (!std::isfinite(s.g) || !std::isfinite(s.kappa)) out.push_back({"non-finite hopping rate", {}});
  if (s.g < 0.0) out.push_back({"g < 0", {}});

  std::vector<std::size_t> nonfinite, gamma_low, eta_neg, gamma_neg, eta_zero;
  std::vector<bool> fed(n, false);
  for (std::size_t i = 0; i < n; ++i) fed[i] = s.drives[i] != cplx(0.0);
  for (const auto& x : s.excess_noise) {
    if (x.site >= n) {
      out.push_back({"excess noise site out of range", {x.site}});
    } else {
      fed[x.site] = true;
      if (!std::isfinite(x.db)) out.push_back({"non-finite excess noise level", {x.site}});
    }
  }
  const double gmin = minimum_gamma(s.kappa);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(s.beta[i]) || !std::isfinite(s.delta[i]) || !std::isfinite(s.eta[i]) ||
        !std::isfinite(s.gamma[i]) || !std::isfinite(s.drives[i].real()) ||
        !std::isfinite(s.drives[i].imag()))
      nonfinite.push_back(i);
    if (s.eta[i] < 0.0) eta_neg.push_back(i);
    if (s.gamma[i] < 0.0) gamma_neg.push_back(i);
    if (s.gamma[i] < gmin * (1.0 - 1e-12)) gamma_low.push_back(i);
    if (fed[i] && !(s.eta[i] > 0.0)) eta_zero.push_back(i);
  }
  if (!nonfinite.empty()) out.push_back({"non-finite parameter", nonfinite});
  if (!eta_neg.empty()) out.push_back({"eta < 0", eta_neg});
  if (!gamma_neg.empty()) out.push_back({"gamma < 0", gamma_neg});
  if (!gamma_low.empty()) out.push_back({"gamma < 2|kappa|", gamma_low});
  if (!eta_zero.empty()) out.push_back({"eta must be > 0 on driven or noise-injected sites", eta_zero});
  if (!out.empty()) return out;

  const CMat d = build_diffusion_unchecked(s);
  Eigen::SelfAdjointEigenSolver<CMat> es(d, Eigen::EigenvaluesOnly);
  const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  if (es.eigenvalues().minCoeff() < -kTolPsd * top)
    out.push_back({"bath correlation matrix is not positive semi-definite", {}});
  return out;
}

inline void require_valid(const LatticeSpec& s, const char* who) {
  const auto v = validate(s);
  if (v.empty()) return;
  std::string msg = std::string(who) + ": invalid lattice spec:";
  for (const auto& x : v) msg += " [" + x.message() + "]";
  throw ParameterError(msg);
}

inline CMat linear_hamiltonian(const LatticeSpec& s) {
  require_valid(s, "linear_hamiltonian");
  return linear_hamiltonian_unchecked(s);
}

inline CMat build_diffusion(const LatticeSpec& s) {
  require_valid(s, "build_diffusion");
  CMat d = build_diffusion_unchecked(s);
  Eigen::SelfAdjointEigenSolver<CMat> es(d, Eigen::EigenvaluesOnly);
  const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  if (es.eigenvalues().minCoeff() < -kTolPsd * top)
    throw NumericalError("build_diffusion: diffusion matrix not positive semi-definite");
  return d;
}

}  // namespace nhnoise
