#pragma once

#include <functional>

#include "semigrav/grid.hpp"
#include "semigrav/types.hpp"

namespace semigrav {

/// Grid wave function with continuum normalisation sum |psi_i|^2 dx^(dP) = 1.
class WaveFunction {
 public:
  WaveFunction(GridSpec grid, Vector amplitudes);

  /// Samples f on every configuration (positions of all particles) and
  /// normalises.
  static WaveFunction from_function(const GridSpec& grid,
                                    const std::function<Complex(const std::vector<double>&)>& f);
  /// Normalised Gaussian packet for a single particle.
  static WaveFunction gaussian(const GridSpec& grid, double centre, double width,
                               double momentum = 0.0);
  /// Builds psi from a unit-norm coefficient vector (inverse of unit_vector()).
  static WaveFunction from_unit_vector(const GridSpec& grid, const Vector& unit);
  /// Tensor product of single-particle states, particle 0 first.
  static WaveFunction product(const std::vector<WaveFunction>& factors);

  const GridSpec& grid() const { return grid_; }
  const Vector& amplitudes() const { return amplitudes_; }
  Vector& amplitudes() { return amplitudes_; }

  double norm_squared() const;
  void normalize();
  /// Coefficients with the cell measure folded in, so that the Euclidean norm
  /// is 1. Matrices in this library act on these coefficients.
  Vector unit_vector() const;
  /// |<this|other>|^2.
  double overlap(const WaveFunction& other) const;
  /// Probability per configuration, sums to 1.
  RealVector probabilities() const;

 private:
  GridSpec grid_;
  Vector amplitudes_;
};

/// Density matrix over the configuration basis (matrix trace is 1).
class DensityMatrix {
 public:
  DensityMatrix(GridSpec grid, Matrix matrix);

  static DensityMatrix from_pure(const WaveFunction& psi);

  const GridSpec& grid() const { return grid_; }
  const Matrix& matrix() const { return matrix_; }
  Matrix& matrix() { return matrix_; }

  /// Hermiticity 1e-10, unit trace 1e-8, eigenvalues >= -1e-10.
  void validate() const;

 private:
  GridSpec grid_;
  Matrix matrix_;
};

/// max |A - A^dagger| over elements.
double hermiticity_defect(const Matrix& a);
double min_eigenvalue(const Matrix& hermitian);
/// Outer product |v><v| of a unit vector.
Matrix projector(const Vector& v);

}  // namespace semigrav
