#include "semigrav/grid.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace semigrav {

void GridSpec::validate() const {
  if (dimension != 1) {
    throw InvalidArgument("only 1-D lattices are supported (dimension = " +
                          std::to_string(dimension) + ")");
  }
  if (points < 4) {
    throw InvalidArgument("grid needs at least 4 points per axis, got " + std::to_string(points));
  }
  if (!(spacing > 0.0) || !std::isfinite(spacing)) {
    throw InvalidArgument("grid spacing must be positive and finite");
  }
  if (particles < 1) {
    throw InvalidArgument("particle count must be >= 1");
  }
  // N^P computed in floating point first so that absurd requests do not wrap.
  const double dim = std::pow(static_cast<double>(points), dimension * particles);
  if (dim > static_cast<double>(dimension_cap)) {
    std::ostringstream msg;
    msg << "Hilbert dimension " << points << "^(" << dimension << "*" << particles
        << ") = " << dim << " exceeds the cap of " << dimension_cap;
    throw DimensionCapExceeded(msg.str());
  }
}

std::size_t GridSpec::hilbert_dim() const {
  std::size_t dim = 1;
  for (int l = 0; l < particles * dimension; ++l) dim *= static_cast<std::size_t>(points);
  return dim;
}

double GridSpec::measure() const { return std::pow(spacing, dimension * particles); }

int GridSpec::cell_of(double x) const {
  const long raw = std::lround(x / spacing) + points / 2;
  return static_cast<int>(((raw % points) + points) % points);
}

double GridSpec::periodic_displacement(int i, int j) const {
  int k = ((i - j) % points + points) % points;
  if (k > points / 2) k -= points;
  return k * spacing;
}

double GridSpec::periodic_distance(int i, int j) const {
  return std::abs(periodic_displacement(i, j));
}

int GridSpec::cell(std::size_t config, int particle) const {
  for (int l = particles - 1; l > particle; --l) config /= static_cast<std::size_t>(points);
  return static_cast<int>(config % static_cast<std::size_t>(points));
}

std::vector<int> GridSpec::cells(std::size_t config) const {
  std::vector<int> out(particles);
  for (int l = particles - 1; l >= 0; --l) {
    out[l] = static_cast<int>(config % static_cast<std::size_t>(points));
    config /= static_cast<std::size_t>(points);
  }
  return out;
}

std::size_t GridSpec::config_index(const std::vector<int>& c) const {
  std::size_t a = 0;
  for (int v : c) a = a * static_cast<std::size_t>(points) + static_cast<std::size_t>(v);
  return a;
}

GridSpec GridSpec::with_particles(int count) const {
  GridSpec g = *this;
  g.particles = count;
  return g;
}

void PhysicalConstants::validate() const {
  if (!(G >= 0.0)) throw InvalidArgument("G must be >= 0");
  if (!(hbar > 0.0)) throw InvalidArgument("hbar must be > 0");
  if (masses.empty()) throw InvalidArgument("at least one particle mass is required");
  for (double m : masses) {
    if (!(m > 0.0)) throw InvalidArgument("particle masses must be > 0");
  }
}

double PhysicalConstants::total_mass() const {
  return std::accumulate(masses.begin(), masses.end(), 0.0);
}

}  // namespace semigrav
