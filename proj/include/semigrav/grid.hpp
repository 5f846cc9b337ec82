#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "semigrav/types.hpp"

namespace semigrav {

/// Periodic 1-D lattice shared by every particle. Configuration index
/// a = sum_l i_l * N^(P-1-l), so particle 0 is the most significant digit and
/// operators on a product space read as A (x) B with A acting on particle 0.
struct GridSpec {
  int dimension = 1;
  int points = 32;
  double spacing = 1.0;
  int particles = 1;
  std::size_t dimension_cap = 4096;

  /// Throws InvalidArgument or DimensionCapExceeded.
  void validate() const;

  std::size_t hilbert_dim() const;
  double length() const { return points * spacing; }
  /// dx^(d*P): the integration weight of one configuration cell.
  double measure() const;

  /// Cell centre, centred so that index N/2 sits at x = 0.
  double position(int cell) const { return (cell - points / 2) * spacing; }
  /// Nearest cell to x, wrapped into [0, N).
  int cell_of(double x) const;
  /// Minimum-image distance between two cells.
  double periodic_distance(int i, int j) const;
  /// Signed minimum-image displacement x_i - x_j.
  double periodic_displacement(int i, int j) const;

  /// Cell of particle l in configuration a.
  int cell(std::size_t config, int particle) const;
  std::vector<int> cells(std::size_t config) const;
  std::size_t config_index(const std::vector<int>& cells) const;

  /// Same lattice with a different particle count (used by partial traces).
  GridSpec with_particles(int count) const;

  bool operator==(const GridSpec& other) const = default;
};

/// Maps simulation units to SI for reporting only.
struct UnitSystem {
  double length_m = 1.0;
  double time_s = 1.0;
  double mass_kg = 1.0;
};

namespace si {
inline constexpr double kGravitationalConstant = 6.67430e-11;  // m^3 kg^-1 s^-2
inline constexpr double kHbar = 1.054571817e-34;              // J s
inline constexpr double kProtonMass = 1.67262192369e-27;      // kg
inline constexpr double kElectronMass = 9.1093837015e-31;     // kg
inline constexpr double kNucleonMass = 1.66053906660e-27;     // kg (atomic mass unit)
}  // namespace si

struct PhysicalConstants {
  double G = 0.0;
  double hbar = 1.0;
  std::vector<double> masses{1.0};
  UnitSystem units;

  void validate() const;
  double total_mass() const;
};

}  // namespace semigrav
