#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace spinmeas {

using cplx = std::complex<double>;

// One coherent-state parameter per bath mode.
using MultimodeConfig = Eigen::VectorXcd;

// M configurations stacked row-wise (M x N).
using ConfigSet = Eigen::MatrixXcd;

using Spinor = Eigen::Vector2cd;
using SpinDensity = Eigen::Matrix2cd;

inline constexpr cplx I{0.0, 1.0};

struct BlochVector {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm_squared() const { return x * x + y * y + z * z; }
};

// Bad dimensions or inconsistent operands.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Invalid physical/config values.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Singular metric, step underflow, non-finite state.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace spinmeas
