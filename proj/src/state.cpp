#include "semigrav/state.hpp"

#include <cmath>

namespace semigrav {

WaveFunction::WaveFunction(GridSpec grid, Vector amplitudes)
    : grid_(std::move(grid)), amplitudes_(std::move(amplitudes)) {
  grid_.validate();
  if (static_cast<std::size_t>(amplitudes_.size()) != grid_.hilbert_dim()) {
    throw InvalidArgument("wave function length does not match the grid dimension");
  }
}

WaveFunction WaveFunction::from_function(
    const GridSpec& grid, const std::function<Complex(const std::vector<double>&)>& f) {
  grid.validate();
  const std::size_t dim = grid.hilbert_dim();
  Vector amp(dim);
  std::vector<double> x(grid.particles);
  for (std::size_t a = 0; a < dim; ++a) {
    const auto c = grid.cells(a);
    for (int l = 0; l < grid.particles; ++l) x[l] = grid.position(c[l]);
    amp[static_cast<Eigen::Index>(a)] = f(x);
  }
  WaveFunction psi(grid, std::move(amp));
  psi.normalize();
  return psi;
}

WaveFunction WaveFunction::gaussian(const GridSpec& grid, double centre, double width,
                                    double momentum) {
  if (grid.particles != 1) throw InvalidArgument("gaussian() builds single-particle states");
  return from_function(grid, [&](const std::vector<double>& x) {
    // Minimum-image offset keeps the packet periodic.
    double d = std::remainder(x[0] - centre, grid.length());
    return std::exp(-d * d / (4.0 * width * width)) * std::exp(kI * momentum * x[0]);
  });
}

WaveFunction WaveFunction::from_unit_vector(const GridSpec& grid, const Vector& unit) {
  return WaveFunction(grid, unit / std::sqrt(grid.measure()));
}

WaveFunction WaveFunction::product(const std::vector<WaveFunction>& factors) {
  if (factors.empty()) throw InvalidArgument("product of zero states");
  GridSpec grid = factors.front().grid();
  Vector amp = factors.front().amplitudes();
  for (std::size_t k = 1; k < factors.size(); ++k) {
    const auto& f = factors[k];
    if (f.grid().points != grid.points || f.grid().spacing != grid.spacing) {
      throw InvalidArgument("product factors must share a lattice");
    }
    Vector next(amp.size() * f.amplitudes().size());
    for (Eigen::Index i = 0; i < amp.size(); ++i) {
      next.segment(i * f.amplitudes().size(), f.amplitudes().size()) = amp[i] * f.amplitudes();
    }
    amp = std::move(next);
    grid.particles += f.grid().particles;
  }
  return WaveFunction(grid, std::move(amp));
}

double WaveFunction::norm_squared() const { return amplitudes_.squaredNorm() * grid_.measure(); }

void WaveFunction::normalize() {
  const double n2 = norm_squared();
  if (!(n2 > 0.0) || !std::isfinite(n2)) throw DegenerateOutcome("cannot normalise a null state");
  amplitudes_ /= std::sqrt(n2);
}

Vector WaveFunction::unit_vector() const { return amplitudes_ * std::sqrt(grid_.measure()); }

double WaveFunction::overlap(const WaveFunction& other) const {
  return std::norm(amplitudes_.dot(other.amplitudes_) * grid_.measure());
}

RealVector WaveFunction::probabilities() const {
  return amplitudes_.cwiseAbs2() * grid_.measure();
}

DensityMatrix::DensityMatrix(GridSpec grid, Matrix matrix)
    : grid_(std::move(grid)), matrix_(std::move(matrix)) {
  grid_.validate();
  const auto dim = static_cast<Eigen::Index>(grid_.hilbert_dim());
  if (matrix_.rows() != dim || matrix_.cols() != dim) {
    throw InvalidArgument("density matrix shape does not match the grid dimension");
  }
}

DensityMatrix DensityMatrix::from_pure(const WaveFunction& psi) {
  return DensityMatrix(psi.grid(), projector(psi.unit_vector()));
}

void DensityMatrix::validate() const {
  if (hermiticity_defect(matrix_) > 1e-10) throw InvalidArgument("density matrix not Hermitian");
  if (std::abs(matrix_.trace() - Complex(1.0)) > 1e-8) {
    throw InvalidArgument("density matrix trace differs from 1");
  }
  if (min_eigenvalue(matrix_) < -1e-10) throw InvalidArgument("density matrix not PSD");
}

double hermiticity_defect(const Matrix& a) { return (a - a.adjoint()).cwiseAbs().maxCoeff(); }

double min_eigenvalue(const Matrix& hermitian) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Matrix projector(const Vector& v) { return v * v.adjoint(); }

}  // namespace semigrav
