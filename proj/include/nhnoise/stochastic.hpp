#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <thread>
#include <vector>

#include <Eigen/Eigenvalues>

#include "nhnoise/noise.hpp"

namespace nhnoise {

/// B with B B^dagger = D, keeping eigen-directions above the numerical rank threshold.
inline CMat noise_factor(const CMat& d) {
  if ((d - d.adjoint()).norm() > 1e-12 * std::max(d.norm(), 1e-300))
    throw ParameterError("noise_factor: diffusion matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<CMat> es(d);
  const RVec& ev = es.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  if (ev.minCoeff() < -kTolPsd * top) throw ParameterError("noise_factor: invalid diffusion (negative eigenvalue)");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] > 1e-12 * top) keep.push_back(i);
  CMat b(d.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c)
    b.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]) * std::sqrt(ev[keep[c]]);
  return b;
}

struct EnsembleResult {
  CMat moment_estimate;
  RMat standard_errors;
  std::size_t n_trajectories = 0;
  std::uint64_t seed = 0;
  double dt = 0.0;
  double t_relax = 0.0;
  double t_collect = 0.0;
  std::size_t basin_escapes = 0;  // nonlinear runs only
  std::size_t diverged = 0;       // nonlinear runs only; excluded from the averages
};

struct MonteCarloOptions {
  double dt = 0.0;         // 0 = 0.02 / spectral radius
  double t_relax = 0.0;    // 0 = 10 / slowest decay rate
  double t_collect = 0.0;  // 0 = 50 / slowest decay rate
  std::size_t n_traj = 4096;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

namespace detail {

/// Independent per-trajectory stream derived from (seed, index).
inline std::mt19937_64 trajectory_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

/// Complex Gaussian increments with E[dW dW^dag] = dt I.
inline void fill_increment(std::mt19937_64& rng, std::normal_distribution<double>& nd, double sd, CVec& dw) {
  for (Eigen::Index i = 0; i < dw.size(); ++i) {
    const double re = nd(rng), im = nd(rng);
    dw[i] = cplx(re * sd, im * sd);
  }
}

struct RateScales {
  double radius;
  double slowest;
};

inline RateScales rate_scales(const CMat& drift) {
  Eigen::ComplexEigenSolver<CMat> es(drift, false);
  const CVec& ev = es.eigenvalues();
  return {ev.cwiseAbs().maxCoeff(), -ev.real().maxCoeff()};
}

inline MonteCarloOptions resolve_defaults(MonteCarloOptions o, const RateScales& r) {
  if (o.dt <= 0.0) o.dt = 0.02 / r.radius;
  if (o.t_relax <= 0.0) o.t_relax = 10.0 / r.slowest;
  if (o.t_collect <= 0.0) o.t_collect = 50.0 / r.slowest;
  if (o.n_traj < 2) throw ParameterError("montecarlo: need at least 2 trajectories");
  if (o.threads == 0) o.threads = 1;
  return o;
}

/// Runs `traj(index) -> CMat` for every trajectory across worker threads and
/// reduces in index order, so the result does not depend on scheduling.
template <class Traj>
EnsembleResult ensemble(const MonteCarloOptions& o, Eigen::Index dim, Traj&& traj) {
  std::vector<CMat> per(o.n_traj);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= o.n_traj || failed.load()) return;
      try {
        per[i] = traj(i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  const unsigned nt = std::min<unsigned>(o.threads, static_cast<unsigned>(o.n_traj));
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  // Trajectories that returned non-finite moments are dropped and counted.
  std::vector<const CMat*> used;
  for (const auto& m : per)
    if (m.allFinite()) used.push_back(&m);
  if (used.size() < 2) throw NumericalError("montecarlo: fewer than 2 trajectories stayed finite");
  EnsembleResult r;
  const Eigen::Index cols = used.front()->cols();
  r.moment_estimate = CMat::Zero(dim, cols);
  for (const CMat* m : used) r.moment_estimate += *m;
  const double k = static_cast<double>(used.size());
  r.moment_estimate /= k;
  RMat var = RMat::Zero(dim, cols);
  for (const CMat* m : used) var += (*m - r.moment_estimate).cwiseAbs2();
  var /= (k - 1.0);
  r.standard_errors = (var / k).cwiseSqrt().cwiseMax(1e-300);
  r.diverged = per.size() - used.size();
  r.n_trajectories = used.size();
  r.seed = o.seed;
  r.dt = o.dt;
  r.t_relax = o.t_relax;
  r.t_collect = o.t_collect;
  return r;
}

}  // namespace detail

namespace detail {

/// Euler-Maruyama ensemble for dv = A v dt + B dW. Each trajectory starts at
/// v = 0, discards t_relax, time-averages v v^dagger over t_collect and maps
/// the average through `transform` (a linear map, so the ensemble mean is the
/// transform of the mean moment).
template <class Transform>
EnsembleResult simulate_linear_impl(const NoiseSystem& sys, MonteCarloOptions opt, Transform&& transform) {
  const StabilityReport st = is_stable(sys);
  if (!st.stable) throw UnstableError("simulate_linear: unstable drift", st.max_im_lambda);
  const auto scales = rate_scales(sys.drift);
  opt = resolve_defaults(opt, scales);
  if (!(opt.dt < 0.1 / scales.radius)) throw ParameterError("simulate_linear: dt must be < 0.1 / spectral radius");
  const CMat b = noise_factor(sys.diffusion);
  const Eigen::Index dim = sys.drift.rows();
  const CMat step = CMat::Identity(dim, dim) + opt.dt * sys.drift;
  const auto n_relax = static_cast<std::size_t>(std::ceil(opt.t_relax / opt.dt));
  const auto n_collect = static_cast<std::size_t>(std::ceil(opt.t_collect / opt.dt));
  const double sd = std::sqrt(opt.dt / 2.0);
  const double blowup = 1e6 * std::sqrt(std::max(sys.diffusion.trace().real(), 1e-300) / scales.slowest);

  auto traj = [&](std::size_t index) {
    auto rng = trajectory_rng(opt.seed, index);
    std::normal_distribution<double> nd(0.0, 1.0);
    CVec v = CVec::Zero(dim), dw(b.cols()), next(dim);
    CMat acc = CMat::Zero(dim, dim);
    for (std::size_t s = 0; s < n_relax + n_collect; ++s) {
      fill_increment(rng, nd, sd, dw);
      next.noalias() = step * v;
      next.noalias() += b * dw;
      v.swap(next);
      if (s >= n_relax) acc.noalias() += v * v.adjoint();
      if ((s & 1023) == 0 && !(max_abs(v) < blowup))
        throw UnstableError("simulate_linear: trajectory diverged", st.max_im_lambda);
    }
    return CMat(transform(CMat(acc / static_cast<double>(n_collect))));
  };
  const CMat probe = transform(CMat::Zero(dim, dim));
  return ensemble(opt, probe.rows(), traj);
}

}  // namespace detail

/// Ensemble estimate of M = <v v^dagger> with elementwise standard errors.
inline EnsembleResult simulate_linear(const NoiseSystem& sys, MonteCarloOptions opt = {}) {
  return detail::simulate_linear_impl(sys, opt, [](const CMat& m) { return m; });
}

/// Ensemble estimate of the intensity covariance map <dn_i dn_j> (real part
/// stored in a complex matrix) with standard errors taken across trajectories.
inline EnsembleResult simulate_linear_covariance(const NoiseSystem& sys, const SteadyState& steady,
                                                 MonteCarloOptions opt = {}) {
  return detail::simulate_linear_impl(sys, opt, [&](const CMat& m) {
    return CMat(covariance_map(MomentMatrix{m, sys.n_sites}, steady).cast<cplx>());
  });
}

/// Symmetric-order diffusion of a single complex field: the average of the
/// a-block of D and the transposed a^dagger-block.
inline CMat symmetric_diffusion(const NoiseSystem& sys) {
  const Eigen::Index n = static_cast<Eigen::Index>(sys.n_sites);
  return 0.5 * (CMat(sys.diffusion.topLeftCorner(n, n)) + CMat(sys.diffusion.bottomRightCorner(n, n)).transpose());
}

/// Truncated Wigner simulation of the full nonlinear Langevin equation
///   da = (-i H a - i beta (|a|^2 - 1) a + sqrt(2 eta) s) dt + dxi,
/// with circular complex noise <dxi dxi^dagger> = symmetric_diffusion dt.
/// The Kerr rotation is applied exactly each step, the rest by Euler-Maruyama.
/// Moments of v = (da, da*) are mapped from symmetric to the ordering of the
/// linear theory by adding +1/2 on the a-block and -1/2 on the a^dagger-block.
/// Trajectories whose time-averaged field sits more than a tenth of the
/// smallest |alpha| away from the steady state count as basin escapes; trajectories reaching 1e3 max|alpha| are counted as diverged and
/// excluded.
inline EnsembleResult simulate_nonlinear(const LatticeSpec& spec, const SteadyState& steady,
                                         MonteCarloOptions opt = {}) {
  if (!steady.converged) throw ParameterError("simulate_nonlinear: steady state not converged");
  const NoiseSystem sys = make_noise_system(spec, steady);
  const StabilityReport st = is_stable(sys);
  if (!st.stable) throw UnstableError("simulate_nonlinear: unstable linearization", st.max_im_lambda);
  const auto scales = detail::rate_scales(sys.drift);
  if (opt.dt <= 0.0) opt.dt = 0.005 / scales.radius;
  opt = detail::resolve_defaults(opt, scales);
  if (!(opt.dt < 0.1 / scales.radius)) throw ParameterError("simulate_nonlinear: dt must be < 0.1 / spectral radius");
  const CMat b = noise_factor(symmetric_diffusion(sys));
  const auto n = static_cast<Eigen::Index>(spec.n_sites);
  const Eigen::Index dim = 2 * n;
  const CMat h = linear_hamiltonian_unchecked(spec);
  CVec beta(n), drive(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    beta[i] = spec.beta[i];
    drive[i] = std::sqrt(2.0 * spec.eta[i]) * spec.drives[i];
  }
  const double escape = 0.1 * steady.alpha.cwiseAbs().minCoeff();
  const double diverge = 1e3 * std::max(1.0, steady.alpha.cwiseAbs().maxCoeff());
  const auto n_relax = static_cast<std::size_t>(std::ceil(opt.t_relax / opt.dt));
  const auto n_collect = static_cast<std::size_t>(std::ceil(opt.t_collect / opt.dt));
  const double sd = std::sqrt(opt.dt / 2.0);
  std::vector<char> escaped(opt.n_traj, 0);

  // Per trajectory: second moments of y = (a - alpha, conj) in the left
  // block and the mean of y in the last column.
  auto traj = [&](std::size_t index) {
    auto rng = detail::trajectory_rng(opt.seed, index);
    std::normal_distribution<double> nd(0.0, 1.0);
    CVec a = steady.alpha, dw(b.cols()), y(dim);
    CMat acc = CMat::Zero(dim, dim + 1);
    for (std::size_t s = 0; s < n_relax + n_collect; ++s) {
      for (Eigen::Index i = 0; i < n; ++i) a[i] *= std::exp(-I * (beta[i] * (std::norm(a[i]) - 1.0) * opt.dt));
      detail::fill_increment(rng, nd, sd, dw);
      a += opt.dt * (drive - I * (h * a)) + b * dw;
      if (!(max_abs(a) < diverge)) {
        escaped[index] = 1;
        return CMat(CMat::Constant(dim, dim + 1, cplx(std::nan(""), 0.0)));
      }
      if (s >= n_relax) {
        y.head(n) = a - steady.alpha;
        y.tail(n) = y.head(n).conjugate();
        acc.leftCols(dim).noalias() += y * y.adjoint();
        acc.col(dim) += y;
      }
    }
    acc /= static_cast<double>(n_collect);
    if (max_abs(CVec(acc.col(dim).head(n))) > escape) escaped[index] = 1;
    return acc;
  };

  EnsembleResult r = detail::ensemble(opt, dim, traj);
  const CVec shift = r.moment_estimate.col(dim);
  CMat m = CMat(r.moment_estimate.leftCols(dim)) - shift * shift.adjoint();
  m.topLeftCorner(n, n) += 0.5 * CMat::Identity(n, n);
  m.bottomRightCorner(n, n) -= 0.5 * CMat::Identity(n, n);
  r.moment_estimate = m;
  r.standard_errors = RMat(r.standard_errors.leftCols(dim));
  r.basin_escapes = static_cast<std::size_t>(std::count(escaped.begin(), escaped.end(), 1));
  return r;
}

/// |estimate - exact| <= k * SE elementwise, with an absolute floor relative
/// to the largest exact entry for entries that vanish identically.
inline bool within_sigma(const EnsembleResult& r, const CMat& exact, double k = 3.0) {
  const double floor = 1e-12 * std::max(exact.cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index i = 0; i < exact.rows(); ++i)
    for (Eigen::Index j = 0; j < exact.cols(); ++j)
      if (std::abs(r.moment_estimate(i, j) - exact(i, j)) > k * r.standard_errors(i, j) + floor) return false;
  return true;
}

}  // namespace nhnoise
