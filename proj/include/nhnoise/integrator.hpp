#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nhnoise/core.hpp"

namespace nhnoise {

struct IntegratorOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  double initial_step = 0.0;  // 0 = pick from the rhs scale
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 100'000'000;
};

/// Adaptive Dormand-Prince 5(4) stepper for complex vector ODEs y' = f(t, y).
/// Keeps its step size between calls so a run can be split across output times.
template <class Rhs>
class Dopri5 {
 public:
  Dopri5(Rhs f, CVec y0, double t0, IntegratorOptions opts = {})
      : f_(std::move(f)), y_(std::move(y0)), t_(t0), opts_(opts) {
    k1_ = f_(t_, y_);
  }

  double time() const { return t_; }
  const CVec& state() const { return y_; }
  const CVec& derivative() const { return k1_; }
  std::size_t accepted_steps() const { return accepted_; }

  /// Advances to exactly t_target. `on_step(t, y, dydt)` runs after every
  /// accepted step; returning false stops early. Returns true if t_target
  /// was reached.
  template <class OnStep>
  bool advance_to(double t_target, OnStep&& on_step) {
    if (t_target <= t_) return true;
    if (h_ <= 0.0) h_ = pick_initial_step(t_target - t_);
    while (t_ < t_target) {
      if (accepted_ + rejected_ >= opts_.max_steps)
        throw NumericalError("Dopri5: step budget exhausted at t=" + fmt(t_));
      double h = std::min({h_, opts_.max_step, t_target - t_});
      const bool last = (h == t_target - t_);
      const double err = trial_step(h);
      if (!(err <= 1.0)) {
        ++rejected_;
        const double shrink = std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.2;
        h_ = h * shrink;
        if (h_ < 1e-14 * std::max(1.0, std::abs(t_)))
          throw NumericalError("Dopri5: step size underflow (stiff or divergent) at t=" + fmt(t_));
        continue;
      }
      ++accepted_;
      t_ = last ? t_target : t_ + h;
      y_.swap(ynew_);
      k1_.swap(k7_);
      const double grow = err == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
      if (!last || grow < 1.0) h_ = h * grow;
      if (!on_step(t_, y_, k1_)) return t_ >= t_target;
    }
    return true;
  }

  bool advance_to(double t_target) {
    return advance_to(t_target, [](double, const CVec&, const CVec&) { return true; });
  }

 private:
  static std::string fmt(double x) {
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
  }

  double pick_initial_step(double span) const {
    if (opts_.initial_step > 0.0) return opts_.initial_step;
    const double scale = std::max(max_abs(k1_), 1e-12);
    const double ynorm = std::max(max_abs(y_), 1.0);
    return std::min(span, 1e-2 * ynorm / scale);
  }

  double trial_step(double h) {
    constexpr double a21 = 1.0 / 5.0;
    constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
    constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
    constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                     a54 = -212.0 / 729.0;
    constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                     a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
    constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                     b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
    constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                     e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

    const CVec& k1 = k1_;
    CVec k2 = f_(t_ + h / 5.0, y_ + h * a21 * k1);
    CVec k3 = f_(t_ + 3.0 * h / 10.0, y_ + h * (a31 * k1 + a32 * k2));
    CVec k4 = f_(t_ + 4.0 * h / 5.0, y_ + h * (a41 * k1 + a42 * k2 + a43 * k3));
    CVec k5 = f_(t_ + 8.0 * h / 9.0, y_ + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    CVec k6 = f_(t_ + h, y_ + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    ynew_ = y_ + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    k7_ = f_(t_ + h, ynew_);
    const CVec err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7_);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
      const double sc = opts_.atol + opts_.rtol * std::max(std::abs(y_[i]), std::abs(ynew_[i]));
      worst = std::max(worst, std::abs(err[i]) / sc);
    }
    if (!ynew_.allFinite()) return std::numeric_limits<double>::infinity();
    return worst;
  }

  Rhs f_;
  CVec y_, ynew_, k1_, k7_;
  double t_;
  double h_ = 0.0;
  IntegratorOptions opts_;
  std::size_t accepted_ = 0, rejected_ = 0;
};

}  // namespace nhnoise
