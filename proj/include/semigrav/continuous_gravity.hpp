#pragma once

#include <optional>
#include <string>

#include "semigrav/grid.hpp"
#include "semigrav/measurement.hpp"
#include "semigrav/operators.hpp"
#include "semigrav/types.hpp"

// Continuous measurement of the smeared mass density at every grid point with
// Newtonian feedback of the measured signal.
//
// Grid convention: spatial integrals become sums weighted by dx, so a
// continuum kernel Gamma(x, y) enters the measurement as the matrix
// dx^2 Gamma(x_i, x_j), a delta function becomes delta_ij / dx, and the noise
// covariance stays Gamma^{-1}(x, y) dt with the continuum inverse.
//
// The DP kernel and the feedback potential share the open-separation Coulomb
// table: the periodic table is not positive definite, and the DP kernel must
// be, so states should stay clear of the seam at the box edge.

namespace semigrav {

enum class KernelKind { CSL, DP, Custom };

struct NoiseKernel {
  KernelKind kind = KernelKind::Custom;
  RealMatrix table;    // Gamma(x_i, x_j) in continuum normalisation
  RealMatrix inverse;  // continuum inverse: table^{-1} / dx^2
  double condition = 0.0;
  // CSL parameters
  double gamma = 0.0;
  double nucleon_mass = 0.0;
  // DP parameters
  double G = 0.0;
  double hbar = 1.0;

  /// (4 gamma / m_N^2) delta_ij / dx.
  static NoiseKernel csl(const GridSpec& grid, double gamma, double nucleon_mass);
  /// (2 G / hbar) K_reg(x_i, x_j) on open separations.
  static NoiseKernel dp(const GridSpec& grid, const PhysicalConstants& constants, double r_c);
  static NoiseKernel custom(const GridSpec& grid, RealMatrix table);

  std::string label() const;
};

struct ContinuousGravityParams {
  GridSpec grid;
  PhysicalConstants constants;
  double r_c = 1.0;
  double dt = 1e-3;

  void validate() const;
};

/// O^j = M_rc(x_j), correlation dx^2 Gamma, no feedback.
ContinuousMeasurementSpec build_mass_measurement_spec(const ContinuousGravityParams& params,
                                                      const NoiseKernel& kernel);

struct GravitationalFeedbackSpec {
  ContinuousMeasurementSpec spec;
  /// Row j: diagonal of Phi_rc(x_j) = -G sum_i dx K_reg(x_j, x_i) M_rc(x_i)
  /// (open separations).
  RealMatrix potential;
};

/// Adds K_j = dx Phi_rc(x_j) to a mass-density measurement.
GravitationalFeedbackSpec build_feedback_spec(const ContinuousMeasurementSpec& measurement,
                                              const ContinuousGravityParams& params);

/// Averaged dynamics of the measurement-plus-feedback model:
///   -i/hbar [H0 + V, rho] - 1/8 sum Gamma [M_rc, [M_rc, rho]]
///   - 1/(2 hbar^2) sum Gamma^{-1} [Phi_rc, [Phi_rc, rho]]
/// with V = -(G/2) sum_ij dx^2 M_rc(x_i) M_rc(x_j) K_reg(x_i, x_j).
class GravityGenerator {
 public:
  explicit GravityGenerator(GravitationalFeedbackSpec spec,
                            std::optional<Hamiltonian> h0 = std::nullopt);

  const GravitationalFeedbackSpec& feedback_spec() const { return spec_; }
  const std::optional<Hamiltonian>& hamiltonian() const { return h0_; }
  /// Diagonal of the pair potential V.
  const RealVector& pair_potential() const { return pair_; }

  Matrix operator()(const Matrix& rho) const;
  Matrix von_neumann_term(const Matrix& rho) const;
  Matrix potential_term(const Matrix& rho) const;
  Matrix measurement_term(const Matrix& rho) const;
  Matrix feedback_term(const Matrix& rho) const;

 private:
  GravitationalFeedbackSpec spec_;
  std::optional<Hamiltonian> h0_;
  RealVector pair_;
};

struct DecoherenceRates {
  double measurement;
  double feedback;
  double total;
};
/// Decay rates of the coherence rho_ab between two configurations.
DecoherenceRates decoherence_rates(const GravitationalFeedbackSpec& spec, std::size_t config_a,
                                   std::size_t config_b);

}  // namespace semigrav
