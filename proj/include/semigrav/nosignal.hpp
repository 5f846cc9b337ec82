#pragma once

#include <functional>
#include <optional>
#include <string>

#include "semigrav/continuous_gravity.hpp"
#include "semigrav/flash.hpp"
#include "semigrav/master_equation.hpp"
#include "semigrav/schroedinger_newton.hpp"

// Alice (particle 0) and Bob (particle 1) share an entangled state. Bob either
// idles or measures his particle in the position basis at t = 0 and forgets
// the result. Alice compares her reduced state at time T across the two cases.

namespace semigrav {

enum class NoSignallingModel { Flash, Continuous, SchroedingerNewton };
enum class BobAction { None, Measure };

NoSignallingModel parse_nosignal_model(const std::string& name);
std::string to_string(NoSignallingModel model);

/// Everything needed to evolve the two-particle scenario under each model.
/// Bob's particle carries no kinetic term, so his position basis is a pointer
/// basis that the dynamics never rotates.
struct NoSignallingSetup {
  GridSpec grid;               // two particles
  PhysicalConstants constants; // masses {alice, bob}
  double r_c = 1.0;
  double T = 1.0;
  double dt = 1e-3;            // RK4 step for linear models, split step for SN
  double flash_rate = 1.0;
  bool include_self_kick = true;
  /// Continuous model kernel: DP by default.
  std::optional<NoiseKernel> kernel;

  void validate() const;
};

struct NoSignallingResult {
  Matrix alice_idle;
  Matrix alice_measured;
  double trace_distance = 0.0;
};

/// Dephasing of particle `particle` in its position basis.
Matrix dephase_particle(const Matrix& rho, const GridSpec& grid, int particle);

/// Apply a single-particle Kraus channel to particle `particle`.
Matrix apply_local_channel(const Matrix& rho, const GridSpec& grid, int particle,
                           const std::vector<Matrix>& kraus);

/// Averaged linear generator of the flash or continuous model (with H0) for
/// the setup.
Generator linear_generator(NoSignallingModel model, const NoSignallingSetup& setup);

/// Alice's reduced state after evolving `rho0` preprocessed by Bob's channel
/// under a linear generator.
Matrix alice_after(const Generator& generator, const Matrix& rho0, const NoSignallingSetup& setup,
                   const std::function<Matrix(const Matrix&)>& bob_channel);

/// Runs both scenarios. For the linear models the density matrix evolves
/// under the averaged generator; for SN the measured scenario evolves each
/// Bob-position branch under SN and mixes the results.
NoSignallingResult no_signalling_test(NoSignallingModel model, const Vector& psi0,
                                      const NoSignallingSetup& setup);

/// (|L>|b0> + |R>|b1>)/sqrt 2 with Alice's Gaussian blobs at -/+ separation/2
/// and Bob's orthogonal pointer cells b0, b1.
Vector entangled_blob_state(const GridSpec& grid, double separation, double width, int bob_cell0,
                            int bob_cell1);

}  // namespace semigrav
