#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nhnoise {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

inline constexpr cplx I{0.0, 1.0};
inline constexpr double kPi = 3.14159265358979323846;

// Error hierarchy. Parameter and config errors are usage problems; the rest
// are physics failures (unstable system, solver breakdown).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParameterError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct UnstableError : Error {
  UnstableError(const std::string& what, double max_growth)
      : Error(what), max_growth_rate(max_growth) {}
  double max_growth_rate;
};

struct NumericalError : Error {
  using Error::Error;
};

inline double max_abs(const CVec& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

}  // namespace nhnoise
