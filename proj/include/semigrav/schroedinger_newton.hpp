#pragma once

#include <functional>
#include <vector>

#include "semigrav/grid.hpp"
#include "semigrav/operators.hpp"
#include "semigrav/state.hpp"
#include "semigrav/types.hpp"

// Nonlinear baseline: the Newtonian potential is sourced by the expectation
// value of the mass density.

namespace semigrav {

struct SNParams {
  PhysicalConstants constants;
  double r_c = 1.0;
  GridSpec grid;
  double dt = 1e-3;
  /// Particles without a kinetic term (empty: all dynamical).
  std::vector<bool> dynamic;

  void validate() const;
};

/// Newtonian field Phi(x_i) = -G sum_l m_l sum_y P_l(y) K_reg(x_i, y) sourced
/// by <M>, where P_l is the position distribution of particle l.
RealVector sn_field(const Vector& psi, const SNParams& params);
/// Configuration-space potential V(a) = sum_l m_l Phi(x_l(a)). For one
/// particle this is -G m^2 sum_y |psi(y)|^2 dy K_reg(x, y).
RealVector sn_potential(const Vector& psi, const SNParams& params);
RealVector sn_potential(const WaveFunction& psi, const SNParams& params);

/// <H0> + (1/2) <V[psi]>. The 1/2 avoids double counting the pair energy in
/// the quadratic functional and makes this the conserved quantity of the flow.
double sn_energy(const Vector& psi, const Hamiltonian& h0, const SNParams& params);

/// 2 <|x|> for particle `particle`: the blob separation of a state symmetric
/// about the origin.
double inter_blob_distance(const Vector& psi, const GridSpec& grid, int particle = 0);

struct SNRecord {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<double> distance;
  std::vector<double> energy;
};

/// Strang splitting: half potential kick, exact kinetic step, half kick with
/// the potential recomputed from the updated density. Records every
/// `record_every` steps. Requires dt * max|V| / hbar <= 1.
SNRecord evolve_sn(const Vector& psi0, double T, const SNParams& params, int record_every = 1);
/// Endpoint only.
Vector evolve_sn_final(const Vector& psi0, double T, const SNParams& params);

}  // namespace semigrav
