#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "nhnoise/integrator.hpp"
#include "nhnoise/model.hpp"

namespace nhnoise {

struct SteadyState {
  CVec alpha;
  RVec photon_numbers;
  double residual_norm = 0.0;
  bool converged = false;
  std::string diagnostic;

  std::size_t size() const { return static_cast<std::size_t>(alpha.size()); }
};

inline SteadyState make_steady_state(CVec alpha, double residual, bool converged,
                                     std::string diagnostic = {}) {
  SteadyState s;
  s.photon_numbers = alpha.cwiseAbs2();
  s.alpha = std::move(alpha);
  s.residual_norm = residual;
  s.converged = converged;
  s.diagnostic = std::move(diagnostic);
  return s;
}

struct Trajectory {
  std::vector<double> times;
  std::vector<CVec> states;
};

/// Precomputed mean-field vector field; cheap to copy into integrators.
class MeanFieldSystem {
 public:
  explicit MeanFieldSystem(const LatticeSpec& s)
      : n_(static_cast<Eigen::Index>(s.n_sites)),
        periodic_(s.periodic()),
        left_(s.g - s.kappa),
        right_(s.g + s.kappa),
        diag_(n_),
        beta_(n_),
        drive_(n_) {
    for (Eigen::Index i = 0; i < n_; ++i) {
      diag_[i] = cplx(s.delta[i], -(s.gamma[i] + s.eta[i]));
      beta_[i] = s.beta[i];
      drive_[i] = std::sqrt(2.0 * s.eta[i]) * s.drives[i];
    }
  }

  Eigen::Index size() const { return n_; }
  const CVec& drive_term() const { return drive_; }

  CVec operator()(double, const CVec& a) const { return rhs(a); }

  CVec rhs(const CVec& a) const {
    CVec out(n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      cplx h = (diag_[i] + beta_[i] * std::norm(a[i])) * a[i];
      if (i > 0) h += left_ * a[i - 1];
      if (i + 1 < n_) h += right_ * a[i + 1];
      out[i] = -I * h + drive_[i];
    }
    if (periodic_) {
      out[0] += -I * left_ * a[n_ - 1];
      out[n_ - 1] += -I * right_ * a[0];
    }
    return out;
  }

 private:
  Eigen::Index n_;
  bool periodic_;
  double left_, right_;
  CVec diag_;
  RVec beta_;
  CVec drive_;
};

/// d(alpha)/dt of the noise-free Kerr lattice.
inline CVec meanfield_rhs(const LatticeSpec& s, const CVec& a) {
  if (static_cast<std::size_t>(a.size()) != s.n_sites)
    throw ParameterError("meanfield_rhs: state length differs from n_sites");
  return MeanFieldSystem(s).rhs(a);
}

/// Linearization of the Kerr lattice about alpha, in the doubled basis
/// (delta a, delta a^dagger): H = [[U, V], [-V*, -U*]] with
/// U = H_lin + 2 beta |alpha|^2 and V = beta alpha^2 on the diagonal.
inline CMat kerr_linearization(const LatticeSpec& s, const CVec& alpha) {
  const auto n = static_cast<Eigen::Index>(s.n_sites);
  CMat u = linear_hamiltonian_unchecked(s);
  CVec v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    u(i, i) += 2.0 * s.beta[i] * std::norm(alpha[i]);
    v[i] = s.beta[i] * alpha[i] * alpha[i];
  }
  CMat h = CMat::Zero(2 * n, 2 * n);
  h.topLeftCorner(n, n) = u;
  h.bottomRightCorner(n, n) = -u.conjugate();
  for (Eigen::Index i = 0; i < n; ++i) {
    h(i, n + i) = v[i];
    h(n + i, i) = -std::conj(v[i]);
  }
  return h;
}

struct TransientOptions {
  IntegratorOptions integrator{};
  std::size_t n_out = 0;  // 0 = record every accepted step
};

/// Deterministic mean-field trajectory from `initial` over [0, t_end].
inline Trajectory integrate_transient(const LatticeSpec& s, const CVec& initial, double t_end,
                                      const TransientOptions& opt = {}) {
  if (!(t_end > 0.0)) throw ParameterError("integrate_transient: t_end must be > 0");
  require_valid(s, "integrate_transient");
  if (static_cast<std::size_t>(initial.size()) != s.n_sites)
    throw ParameterError("integrate_transient: initial state length differs from n_sites");
  Trajectory tr;
  tr.times.push_back(0.0);
  tr.states.push_back(initial);
  Dopri5 stepper(MeanFieldSystem(s), initial, 0.0, opt.integrator);
  if (opt.n_out == 0) {
    stepper.advance_to(t_end, [&](double t, const CVec& y, const CVec&) {
      tr.times.push_back(t);
      tr.states.push_back(y);
      return true;
    });
  } else {
    for (std::size_t k = 1; k <= opt.n_out; ++k) {
      const double tk = t_end * static_cast<double>(k) / static_cast<double>(opt.n_out);
      stepper.advance_to(tk);
      tr.times.push_back(tk);
      tr.states.push_back(stepper.state());
    }
  }
  return tr;
}

struct SteadyStateOptions {
  std::optional<CVec> initial;      // default: pump from the ground state
  std::optional<double> t_max;      // default: 1e3 / min(gamma + eta)
  double ss_rel_tol = 1e-6;         // time-march stop, relative to drive scale
  double newton_rel_tol = 1e-10;    // Newton target, same scaling
  std::size_t max_newton = 60;
  IntegratorOptions integrator{};
};

/// max(|sqrt(2 eta) s|_inf, 1): the scale used for convergence tolerances.
inline double drive_scale(const LatticeSpec& s) {
  double m = 0.0;
  for (std::size_t i = 0; i < s.n_sites; ++i)
    m = std::max(m, std::sqrt(2.0 * s.eta[i]) * std::abs(s.drives[i]));
  return std::max(m, 1.0);
}

namespace detail {

/// Damped Newton on the 2N real unknowns (written in the doubled complex
/// basis). Never accepts an iterate with a larger residual.
inline CVec newton_polish(const LatticeSpec& s, CVec a, double target, std::size_t max_iter,
                          double& residual) {
  const MeanFieldSystem f(s);
  const auto n = static_cast<Eigen::Index>(s.n_sites);
  CVec r = f.rhs(a);
  residual = max_abs(r);
  for (std::size_t it = 0; it < max_iter && residual >= target; ++it) {
    // d(alpha)/dt linearizes to -i H (d, d*); solve -i H x = -(r, r*).
    const CMat jac = -I * kerr_linearization(s, a);
    CVec rhs(2 * n);
    rhs.head(n) = -r;
    rhs.tail(n) = -r.conjugate();
    const CVec step = jac.partialPivLu().solve(rhs);
    const CVec d = step.head(n);
    if (!d.allFinite()) break;
    double t = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      const CVec trial = a + t * d;
      const CVec rt = f.rhs(trial);
      const double res = max_abs(rt);
      if (res < residual) {
        a = trial;
        r = rt;
        residual = res;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  return a;
}

}  // namespace detail

/// Time-marches from the ground state (or `opt.initial`) until the residual
/// drops below the time-march tolerance, then polishes with Newton.
inline SteadyState find_steady_state(const LatticeSpec& s, const SteadyStateOptions& opt = {}) {
  require_valid(s, "find_steady_state");
  const auto n = static_cast<Eigen::Index>(s.n_sites);
  const double scale = drive_scale(s);
  const double tol_ss = opt.ss_rel_tol * scale;
  const double tol_newton = opt.newton_rel_tol * scale;
  double min_loss = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.n_sites; ++i) min_loss = std::min(min_loss, s.total_loss(i));
  const double t_max = opt.t_max.value_or(1e3 / std::max(min_loss, 1e-300));

  CVec start = opt.initial.value_or(CVec::Zero(n));
  if (start.size() != n) throw ParameterError("find_steady_state: initial state length differs from n_sites");

  const MeanFieldSystem f(s);
  double residual = max_abs(f.rhs(start));
  bool marched = residual < tol_ss;
  CVec a = start;
  if (!marched) {
    Dopri5 stepper(f, start, 0.0, opt.integrator);
    try {
      stepper.advance_to(t_max, [&](double, const CVec&, const CVec& dydt) {
        return max_abs(dydt) >= tol_ss;
      });
    } catch (const NumericalError& e) {
      a = stepper.state();
      return make_steady_state(a, max_abs(f.rhs(a)), false,
                               std::string("time march failed: ") + e.what());
    }
    a = stepper.state();
    residual = max_abs(f.rhs(a));
    marched = residual < tol_ss;
  }
  if (!marched) {
    return make_steady_state(a, residual, false,
                             "time march did not settle before t_max (oscillating or slow); "
                             "residual " + std::to_string(residual));
  }
  double polished = residual;
  a = detail::newton_polish(s, a, tol_newton, opt.max_newton, polished);
  const bool ok = polished < tol_newton;
  return make_steady_state(a, polished, ok, ok ? "" : "Newton refinement stalled");
}

/// Uniform parameters read from site 0 after checking the spec is uniform.
struct UniformView {
  double g, kappa, beta, delta, eta, gamma;
  cplx drive;
  double total_loss() const { return gamma + eta; }
};

inline UniformView uniform_view(const LatticeSpec& s, const char* who) {
  require_valid(s, who);
  if (!is_uniform(s)) throw ParameterError(std::string(who) + ": requires site-uniform parameters");
  return {s.g, s.kappa, s.beta[0], s.delta[0], s.eta[0], s.gamma[0], s.drives[0]};
}

/// Non-negative roots n of the periodic-chain steady-state cubic
///   [gamma_tot^2 + (delta + beta n + 2g)^2] n = 2 eta flux,
/// sorted ascending. The Kerr shift beta*n is the one carried by the
/// mean-field equation of motion.
inline std::vector<double> pbc_photon_number(const LatticeSpec& s, double flux) {
  const UniformView u = uniform_view(s, "pbc_photon_number");
  if (!s.periodic()) throw ParameterError("pbc_photon_number: requires periodic boundary");
  if (!(flux >= 0.0)) throw ParameterError("pbc_photon_number: flux must be >= 0");
  const double gt = u.total_loss();
  const double d = u.delta + 2.0 * u.g;
  const double c = 2.0 * u.eta * flux;
  if (c == 0.0) return {0.0};
  const double c3 = u.beta * u.beta, c2 = 2.0 * u.beta * d, c1 = gt * gt + d * d;
  auto p = [&](double x) { return ((c3 * x + c2) * x + c1) * x - c; };
  auto dp = [&](double x) { return (3.0 * c3 * x + 2.0 * c2) * x + c1; };
  if (c3 == 0.0) return {c / c1};

  // p(n) >= gt^2 n - c, so every root lies in [0, c / gt^2].
  const double upper = c / (gt * gt);
  std::vector<double> knots{0.0};
  const double disc = c2 * c2 - 3.0 * c3 * c1;
  if (disc > 0.0) {
    const double sq = std::sqrt(disc);
    for (double x : {(-c2 - sq) / (3.0 * c3), (-c2 + sq) / (3.0 * c3)})
      if (x > 0.0 && x < upper) knots.push_back(x);
  }
  knots.push_back(upper);

  std::vector<double> roots;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    double lo = knots[k], hi = knots[k + 1];
    double plo = p(lo), phi = p(hi);
    if (plo == 0.0) {
      roots.push_back(lo);
      continue;
    }
    if (plo * phi > 0.0) continue;
    // p is monotone on [lo, hi]: safeguarded Newton with a bisection fallback.
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      const double px = p(x);
      if (px == 0.0) break;
      if ((px < 0.0) == (plo < 0.0)) lo = x; else hi = x;
      const double dx = dp(x);
      double nx = dx != 0.0 ? x - px / dx : 0.5 * (lo + hi);
      if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
      if (std::abs(nx - x) <= 1e-16 * std::max(1.0, std::abs(x))) {
        x = nx;
        break;
      }
      x = nx;
    }
    roots.push_back(x);
  }
  std::sort(roots.begin(), roots.end());
  std::vector<double> unique;
  for (double r : roots)
    if (unique.empty() || std::abs(r - unique.back()) > 1e-12 * std::max(1.0, r)) unique.push_back(r);
  return unique;
}

/// Residual of the periodic-chain cubic at n, relative to (2 eta flux + 1).
inline double pbc_cubic_residual(const LatticeSpec& s, double flux, double n) {
  const UniformView u = uniform_view(s, "pbc_cubic_residual");
  const double gt = u.total_loss();
  const double det = u.delta + u.beta * n + 2.0 * u.g;
  return std::abs((gt * gt + det * det) * n - 2.0 * u.eta * flux) / (2.0 * u.eta * flux + 1.0);
}

/// Copy of a uniform spec with every drive set to sqrt(flux) (zero phase).
inline LatticeSpec with_flux(LatticeSpec s, double flux) {
  std::fill(s.drives.begin(), s.drives.end(), cplx(std::sqrt(flux), 0.0));
  return s;
}

/// Drive flux |s|^2 at which the periodic-chain cubic has root n.
inline double flux_for_photon_number(const LatticeSpec& s, double n) {
  const UniformView u = uniform_view(s, "flux_for_photon_number");
  if (!(n >= 0.0)) throw ParameterError("flux_for_photon_number: n must be >= 0");
  if (!(u.eta > 0.0)) throw ParameterError("flux_for_photon_number: eta must be > 0");
  const double gt = u.total_loss();
  const double det = u.delta + u.beta * n + 2.0 * u.g;
  return n * (gt * gt + det * det) / (2.0 * u.eta);
}

/// Uniform steady state on a periodic chain with photon number n, built from
/// the closed form alpha = sqrt(2 eta) s / (gamma_tot + i (delta + beta n + 2g)).
inline SteadyState uniform_steady_state(const LatticeSpec& s, double n) {
  const UniformView u = uniform_view(s, "uniform_steady_state");
  if (!s.periodic()) throw ParameterError("uniform_steady_state: requires periodic boundary");
  const cplx a = std::sqrt(2.0 * u.eta) * u.drive /
                 cplx(u.total_loss(), u.delta + u.beta * n + 2.0 * u.g);
  CVec alpha = CVec::Constant(static_cast<Eigen::Index>(s.n_sites), a);
  const double res = max_abs(MeanFieldSystem(s).rhs(alpha));
  const double tol = 1e-10 * drive_scale(s);
  return make_steady_state(alpha, res, res < tol, res < tol ? "" : "photon number is not a root");
}

/// Fractional photon-number response (n_i(t) - n_i(0)) / n_i(0) after
/// scaling alpha_site by (1 + epsilon). Rows are output times.
struct ResponseMap {
  std::vector<double> times;
  RMat values;
};

inline ResponseMap perturbation_response(const LatticeSpec& s, const SteadyState& steady,
                                         std::size_t site, double epsilon, double t_end,
                                         std::size_t n_out = 400,
                                         const IntegratorOptions& integ = {}) {
  if (!steady.converged) throw ParameterError("perturbation_response: steady state not converged");
  if (site >= s.n_sites) throw ParameterError("perturbation_response: site out of range");
  if (steady.size() != s.n_sites) throw ParameterError("perturbation_response: size mismatch");
  const RVec n0 = steady.alpha.cwiseAbs2();
  if (n0.minCoeff() <= 0.0) throw ParameterError("perturbation_response: zero photon number on some site");
  CVec start = steady.alpha;
  start[static_cast<Eigen::Index>(site)] *= (1.0 + epsilon);
  TransientOptions to;
  to.integrator = integ;
  to.n_out = n_out;
  const Trajectory tr = integrate_transient(s, start, t_end, to);
  ResponseMap out;
  out.times = tr.times;
  out.values.resize(static_cast<Eigen::Index>(tr.times.size()), n0.size());
  for (std::size_t k = 0; k < tr.times.size(); ++k)
    out.values.row(static_cast<Eigen::Index>(k)) =
        ((tr.states[k].cwiseAbs2() - n0).array() / n0.array()).transpose();
  return out;
}

/// Time-integrated |response| summed over sites left of `site`, divided by
/// the same quantity right of it (trapezoid rule over the output grid).
inline double chirality_ratio(const ResponseMap& r, std::size_t site) {
  const auto cols = r.values.cols();
  RVec integral = RVec::Zero(cols);
  for (std::size_t k = 1; k < r.times.size(); ++k) {
    const double dt = r.times[k] - r.times[k - 1];
    integral += 0.5 * dt *
                (r.values.row(static_cast<Eigen::Index>(k)).cwiseAbs() +
                 r.values.row(static_cast<Eigen::Index>(k - 1)).cwiseAbs())
                    .transpose();
  }
  const auto m = static_cast<Eigen::Index>(site);
  const double left = integral.head(m).sum();
  const double right = integral.tail(cols - m - 1).sum();
  return left / right;
}

}  // namespace nhnoise
