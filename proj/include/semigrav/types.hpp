#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace semigrav {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline constexpr Complex kI{0.0, 1.0};

/// Raised for malformed inputs: bad grid parameters, mismatched dimensions,
/// invalid kernels and the like.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when the configuration-space dimension N^(d*P) exceeds the cap.
class DimensionCapExceeded : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Raised when a stochastic or deterministic step would be too coarse to be
/// trusted (relative update or spectral-radius guard tripped).
class StepSizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a sampled branch has (numerically) vanishing probability.
class DegenerateOutcome : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace semigrav
