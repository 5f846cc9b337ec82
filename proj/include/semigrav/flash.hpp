#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "semigrav/grid.hpp"
#include "semigrav/operators.hpp"
#include "semigrav/random.hpp"
#include "semigrav/state.hpp"
#include "semigrav/types.hpp"

// Discrete flash model: every particle undergoes Poisson-timed weak position
// measurements, and each outcome x_f sources an instantaneous Newtonian kick on
// all particles.

namespace semigrav {

struct FlashModelParams {
  double rate = 1.0;  // lambda per particle
  double r_c = 1.0;
  PhysicalConstants constants;
  GridSpec grid;
  /// Keep the l' = l term in the kick phase.
  bool include_self_kick = true;

  void validate() const;
};

struct FlashEvent {
  double time = 0.0;
  int cell = 0;  // x_f as a grid cell
  int particle = 0;

  bool operator==(const FlashEvent&) const = default;
};

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<Vector> states;  // unit coefficient vectors at `times`
  std::vector<FlashEvent> flashes;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
};

/// Waiting time ~ Exp(P lambda); the flashing particle is uniform.
std::pair<double, int> sample_next_flash(double t_now, const FlashModelParams& params, Rng& rng);

/// Diagonal of L_l(x_f) = c exp(-(x_l - x_f)^2 / (2 r_c^2)). The normaliser
/// c = (dx sum_k exp(-(k dx)^2 / r_c^2))^{-1/2} makes sum_f dx L^dagger L = 1
/// exactly on the lattice.
RealVector collapse_operator(int cell, int particle, const FlashModelParams& params);
double collapse_normalizer(const FlashModelParams& params);

/// Phase (G / lambda hbar) sum_l' m_l m_l' K_reg(x_f, x_l') per configuration.
RealVector kick_phase(int cell, int particle, const FlashModelParams& params);
/// Diagonal of the kick unitary exp(i kick_phase).
Vector kick_unitary(int cell, int particle, const FlashModelParams& params);

/// r_G = G m^2 / (hbar lambda) in simulation length units.
double gravitational_radius(double mass, double rate, const PhysicalConstants& constants);
/// Same, reported in metres through constants.units.
double gravitational_radius_si(double mass, double rate, const PhysicalConstants& constants);
/// Direct SI evaluation for a mass in kg and a rate in 1/s.
double gravitational_radius_si(double mass_kg, double rate_per_s);

/// Outcome density P(x_f) = dx ||L_l(x_f) psi||^2 over cells (sums to 1).
RealVector flash_position_distribution(const Vector& psi, int particle,
                                       const FlashModelParams& params);
int sample_flash_position(const Vector& psi, int particle, const FlashModelParams& params,
                          Rng& rng);

/// psi -> U L psi / ||U L psi||. Throws DegenerateOutcome for a null branch.
Vector apply_flash(const Vector& psi, const FlashEvent& event, const FlashModelParams& params);
WaveFunction apply_flash(const WaveFunction& psi, const FlashEvent& event,
                         const FlashModelParams& params);

/// Alternates exact H0 propagation with flashes. States are recorded every
/// `dt` from 0 to T; dt * ||H0|| / hbar must not exceed 10.
TrajectoryRecord evolve_flash_trajectory(const Vector& psi0, const Hamiltonian& h0, double T,
                                         double dt, const FlashModelParams& params, Rng& rng);

/// Averaged dynamics
///   d rho/dt = -i/hbar [H0, rho] + lambda (sum_l sum_f dx C rho C^dagger - P rho)
/// with C = U L. Every collapse-and-kick contribution is diagonal in the
/// configuration basis, so the dissipator is a Hadamard product with a
/// precomputed kernel.
class FlashGenerator {
 public:
  FlashGenerator(FlashModelParams params, Hamiltonian h0);

  const FlashModelParams& params() const { return params_; }
  const Hamiltonian& hamiltonian() const { return h0_; }

  Matrix operator()(const Matrix& rho) const;
  /// -i/hbar [H0, rho].
  Matrix von_neumann_term(const Matrix& rho) const;
  /// lambda (sum dx L rho L - P rho): the kick-free collapse part.
  Matrix collapse_term(const Matrix& rho) const;
  /// First order in G of the kick: -i/hbar sum_l sum_f dx [V_f, L rho L] with
  /// V_f = -G sum_l' m_l m_l' K_reg(x_f, x_l').
  Matrix effective_potential_term(const Matrix& rho) const;

  const Matrix& dissipator_kernel() const { return kernel_; }

 private:
  FlashModelParams params_;
  Hamiltonian h0_;
  Matrix kernel_;             // sum dx (C)_a (C)_b^*
  RealMatrix collapse_;       // sum dx L_a L_b
  RealMatrix potential_;      // sum dx L_a L_b (V_f(a) - V_f(b))
};

/// Smoothed pair kernel seen by particle 1 when particle 2 sits at a cell:
/// W(x1, x2) = sum_f dx L(x_f - x2)^2 K_reg(x_f - x1).
double flash_pair_kernel(int cell1, int cell2, const FlashModelParams& params);

}  // namespace semigrav
