#pragma once

#include <memory>
#include <mutex>
#include <vector>

#include "semigrav/grid.hpp"
#include "semigrav/state.hpp"
#include "semigrav/types.hpp"

namespace semigrav {

/// Spectral kinetic matrix p^2/(2m) on an N-point periodic lattice.
/// The Nyquist mode of an even lattice carries k = pi/dx.
RealMatrix kinetic_matrix(int points, double spacing, double mass, double hbar);
/// Spectral momentum matrix (Hermitian; Nyquist mode set to zero).
Matrix momentum_matrix(int points, double spacing, double hbar);

/// Applies a single-particle N x N matrix to the given particle's axis of a
/// configuration-space vector (in place).
void apply_on_axis(const Matrix& single, int particle, const GridSpec& grid, Vector& v);
/// Same, acting on every column of a configuration-space matrix.
void apply_on_axis(const Matrix& single, int particle, const GridSpec& grid, Matrix& m);

/// H0 = sum_l p_l^2/(2 m_l) + V_ext, stored in Kronecker-structured form.
class Hamiltonian {
 public:
  Hamiltonian(GridSpec grid, std::vector<RealMatrix> kinetic, RealVector potential);

  const GridSpec& grid() const { return grid_; }
  const RealVector& potential() const { return potential_; }
  const std::vector<RealMatrix>& kinetic() const { return kinetic_; }

  Vector apply(const Vector& v) const;
  Matrix apply(const Matrix& m) const;
  /// [H, rho].
  Matrix commutator(const Matrix& rho) const;
  Matrix dense() const;
  /// Largest |eigenvalue| bound (sum of per-axis spectral radii + max |V|).
  double spectral_radius() const;

  /// exp(-i H t / hbar) v. Exact: per-axis eigenbases when V_ext vanishes,
  /// a cached dense eigendecomposition up to dimension 1024, RK4 beyond.
  Vector propagate(const Vector& v, double t, double hbar) const;
  /// Dense exp(-i H t / hbar); dimension at most 1024.
  Matrix propagator(double t, double hbar) const;

 private:
  struct AxisSpectrum {
    RealMatrix vectors;
    RealVector values;
  };

  GridSpec grid_;
  std::vector<RealMatrix> kinetic_;
  RealVector potential_;
  bool has_potential_ = false;
  struct LazySpectrum {
    std::once_flag once;
    AxisSpectrum spectrum;
  };

  const AxisSpectrum& full_spectrum() const;

  std::vector<AxisSpectrum> axes_;
  std::shared_ptr<LazySpectrum> full_ = std::make_shared<LazySpectrum>();
};

/// build_hamiltonian with every particle dynamical. `dynamic` (optional) marks
/// which particles carry a kinetic term; frozen particles act as static
/// pointers.
Hamiltonian build_hamiltonian(const GridSpec& grid, const PhysicalConstants& constants,
                              const RealVector& external_potential,
                              const std::vector<bool>& dynamic = {});
Hamiltonian build_free_hamiltonian(const GridSpec& grid, const PhysicalConstants& constants,
                                   const std::vector<bool>& dynamic = {});

/// Normalised discrete Gaussian weights w[k] of width r_c on minimum-image
/// offsets k (sum_k w[k] = 1).
RealVector smearing_weights(const GridSpec& grid, double r_c);
/// Circular convolution with the normalised Gaussian of width r_c.
RealVector smear(const RealVector& field, const GridSpec& grid, double r_c);

/// 3-D Coulomb kernel convolved twice with a Gaussian of width r_c, as a
/// function of separation: erf(r / 2 r_c) / r, with value 1/(sqrt(pi) r_c) at 0.
double regularized_coulomb_value(double r, double r_c);
enum class Separation {
  /// Minimum-image distances: circulant and translation covariant on the
  /// ring, but not positive definite.
  Periodic,
  /// Plain |i - j| dx: samples a positive-definite function, so the table is
  /// positive definite; not translation covariant across the seam.
  Open,
};
/// K(x_i, x_j); symmetric with finite diagonal.
RealMatrix regularized_coulomb(const GridSpec& grid, double r_c,
                               Separation separation = Separation::Periodic);

/// Diagonal mass-density operators. Column a holds the diagonal entry for
/// configuration a; row i corresponds to grid point x_i.
struct MassDensityField {
  RealMatrix bare;     // M(x_i) = sum_l m_l [x_l = x_i] / dx
  RealMatrix smeared;  // M_rc(x_i) = sum_l m_l w(x_i - x_l) / dx
};
MassDensityField build_mass_density(const GridSpec& grid, const PhysicalConstants& constants,
                                    double r_c);

/// Position operator of one particle (diagonal, centred coordinates).
RealVector position_diagonal(const GridSpec& grid, int particle);

struct Expectation {
  Complex value;
  /// |Im| when the operator is Hermitian; reported, not thrown.
  double imaginary_residual = 0.0;
};
Expectation expectation(const WaveFunction& psi, const Matrix& op);
Expectation expectation(const DensityMatrix& rho, const Matrix& op);
double expectation_diagonal(const WaveFunction& psi, const RealVector& diag);
double expectation_diagonal(const DensityMatrix& rho, const RealVector& diag);

/// Reduced state of the listed particles (ascending order preserved).
DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<int>& keep);
/// Raw form for Kronecker-ordered matrices with per-subsystem dimensions.
Matrix partial_trace(const Matrix& rho, const std::vector<int>& dims, const std::vector<int>& keep);

}  // namespace semigrav
