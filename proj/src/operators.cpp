#include "semigrav/operators.hpp"

#include <cmath>
#include <numbers>

namespace semigrav {

namespace {

double wavenumber(int n, int points, double spacing) {
  const int wrapped = (n <= points / 2) ? n : n - points;
  return 2.0 * std::numbers::pi * wrapped / (points * spacing);
}

void require_dims(const GridSpec& grid, Eigen::Index rows) {
  if (static_cast<std::size_t>(rows) != grid.hilbert_dim()) {
    throw InvalidArgument("operand dimension does not match the grid");
  }
}

}  // namespace

RealMatrix kinetic_matrix(int points, double spacing, double mass, double hbar) {
  if (points < 2 || !(spacing > 0.0) || !(mass > 0.0)) {
    throw InvalidArgument("kinetic_matrix: need points >= 2, spacing > 0, mass > 0");
  }
  RealVector energy(points);
  for (int n = 0; n < points; ++n) {
    const double k = wavenumber(n, points, spacing);
    energy[n] = hbar * hbar * k * k / (2.0 * mass);
  }
  RealMatrix t(points, points);
  for (int i = 0; i < points; ++i) {
    for (int j = 0; j < points; ++j) {
      double s = 0.0;
      for (int n = 0; n < points; ++n) {
        s += energy[n] * std::cos(2.0 * std::numbers::pi * n * (i - j) / points);
      }
      t(i, j) = s / points;
    }
  }
  return t;
}

Matrix momentum_matrix(int points, double spacing, double hbar) {
  Matrix p = Matrix::Zero(points, points);
  for (int i = 0; i < points; ++i) {
    for (int j = 0; j < points; ++j) {
      Complex s = 0.0;
      for (int n = 0; n < points; ++n) {
        if (points % 2 == 0 && n == points / 2) continue;
        const double k = wavenumber(n, points, spacing);
        s += hbar * k * std::exp(kI * (2.0 * std::numbers::pi * n * (i - j) / points));
      }
      p(i, j) = s / static_cast<double>(points);
    }
  }
  return p;
}

void apply_on_axis(const Matrix& single, int particle, const GridSpec& grid, Vector& v) {
  const Eigen::Index n = grid.points;
  Eigen::Index stride = 1;
  for (int l = grid.particles - 1; l > particle; --l) stride *= n;
  const Eigen::Index block = n * stride;
  const Matrix st = single.transpose();
  for (Eigen::Index outer = 0; outer < v.size(); outer += block) {
    Eigen::Map<Matrix> x(v.data() + outer, stride, n);
    x = (x * st).eval();
  }
}

void apply_on_axis(const Matrix& single, int particle, const GridSpec& grid, Matrix& m) {
  const Eigen::Index n = grid.points;
  Eigen::Index stride = 1;
  for (int l = grid.particles - 1; l > particle; --l) stride *= n;
  const Eigen::Index block = n * stride;
  const Matrix st = single.transpose();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    Complex* col = m.data() + c * m.rows();
    for (Eigen::Index outer = 0; outer < m.rows(); outer += block) {
      Eigen::Map<Matrix> x(col + outer, stride, n);
      x = (x * st).eval();
    }
  }
}

Hamiltonian::Hamiltonian(GridSpec grid, std::vector<RealMatrix> kinetic, RealVector potential)
    : grid_(std::move(grid)), kinetic_(std::move(kinetic)), potential_(std::move(potential)) {
  grid_.validate();
  if (static_cast<int>(kinetic_.size()) != grid_.particles) {
    throw InvalidArgument("one kinetic matrix per particle is required");
  }
  require_dims(grid_, potential_.size());
  has_potential_ = potential_.size() > 0 && potential_.cwiseAbs().maxCoeff() > 0.0;
  for (const auto& t : kinetic_) {
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(t);
    axes_.push_back({es.eigenvectors(), es.eigenvalues()});
  }
}

Vector Hamiltonian::apply(const Vector& v) const {
  Vector out = potential_.cast<Complex>().cwiseProduct(v);
  for (int l = 0; l < grid_.particles; ++l) {
    if (kinetic_[l].cwiseAbs().maxCoeff() == 0.0) continue;
    Vector w = v;
    apply_on_axis(kinetic_[l].cast<Complex>(), l, grid_, w);
    out += w;
  }
  return out;
}

Matrix Hamiltonian::apply(const Matrix& m) const {
  Matrix out = potential_.cast<Complex>().asDiagonal() * m;
  for (int l = 0; l < grid_.particles; ++l) {
    if (kinetic_[l].cwiseAbs().maxCoeff() == 0.0) continue;
    Matrix w = m;
    apply_on_axis(kinetic_[l].cast<Complex>(), l, grid_, w);
    out += w;
  }
  return out;
}

Matrix Hamiltonian::commutator(const Matrix& rho) const {
  const Matrix h_rho = apply(rho);
  // rho H = (H rho^dagger)^dagger for Hermitian H.
  const Matrix rho_h = apply(Matrix(rho.adjoint())).adjoint();
  return h_rho - rho_h;
}

Matrix Hamiltonian::dense() const {
  const auto dim = static_cast<Eigen::Index>(grid_.hilbert_dim());
  return apply(Matrix(Matrix::Identity(dim, dim)));
}

double Hamiltonian::spectral_radius() const {
  double r = potential_.size() ? potential_.cwiseAbs().maxCoeff() : 0.0;
  for (const auto& ax : axes_) r += ax.values.cwiseAbs().maxCoeff();
  return r;
}

const Hamiltonian::AxisSpectrum& Hamiltonian::full_spectrum() const {
  std::call_once(full_->once, [this] {
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(dense().real());
    full_->spectrum = {es.eigenvectors(), es.eigenvalues()};
  });
  return full_->spectrum;
}

Vector Hamiltonian::propagate(const Vector& v, double t, double hbar) const {
  if (!has_potential_) {
    Vector out = v;
    for (int l = 0; l < grid_.particles; ++l) {
      const auto& ax = axes_[l];
      if (ax.values.cwiseAbs().maxCoeff() == 0.0) continue;
      Vector phases = (ax.values * (-t / hbar)).unaryExpr([](double x) { return std::exp(kI * x); });
      const Matrix u = ax.vectors.cast<Complex>() * phases.asDiagonal() *
                       ax.vectors.transpose().cast<Complex>();
      apply_on_axis(u, l, grid_, out);
    }
    return out;
  }
  if (grid_.hilbert_dim() <= 1024) {
    const auto& sp = full_spectrum();
    const Matrix vecs = sp.vectors.cast<Complex>();
    Vector coeff = vecs.adjoint() * v;
    for (Eigen::Index k = 0; k < coeff.size(); ++k) {
      coeff[k] *= std::exp(-kI * sp.values[k] * t / hbar);
    }
    return vecs * coeff;
  }
  // RK4 with h * ||H|| / hbar <= 0.2.
  const double radius = spectral_radius();
  const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(t) * radius / (0.2 * hbar))));
  const double h = t / steps;
  Vector y = v;
  auto f = [&](const Vector& z) -> Vector { return (-kI / hbar) * apply(z); };
  for (int s = 0; s < steps; ++s) {
    const Vector k1 = f(y);
    const Vector k2 = f(y + 0.5 * h * k1);
    const Vector k3 = f(y + 0.5 * h * k2);
    const Vector k4 = f(y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

Matrix Hamiltonian::propagator(double t, double hbar) const {
  if (grid_.hilbert_dim() > 1024) throw DimensionCapExceeded("dense propagator limited to dimension 1024");
  if (!has_potential_) {
    const auto dim = static_cast<Eigen::Index>(grid_.hilbert_dim());
    Matrix u = Matrix::Identity(dim, dim);
    for (int l = 0; l < grid_.particles; ++l) {
      const auto& ax = axes_[l];
      if (ax.values.cwiseAbs().maxCoeff() == 0.0) continue;
      Vector phases = (ax.values * (-t / hbar)).unaryExpr([](double x) { return std::exp(kI * x); });
      const Matrix single = ax.vectors.cast<Complex>() * phases.asDiagonal() *
                            ax.vectors.transpose().cast<Complex>();
      apply_on_axis(single, l, grid_, u);
    }
    return u;
  }
  const auto& sp = full_spectrum();
  const Matrix vecs = sp.vectors.cast<Complex>();
  Vector phases(sp.values.size());
  for (Eigen::Index k = 0; k < phases.size(); ++k) phases[k] = std::exp(-kI * sp.values[k] * t / hbar);
  return vecs * phases.asDiagonal() * vecs.adjoint();
}

Hamiltonian build_hamiltonian(const GridSpec& grid, const PhysicalConstants& constants,
                              const RealVector& external_potential,
                              const std::vector<bool>& dynamic) {
  grid.validate();
  constants.validate();
  if (static_cast<int>(constants.masses.size()) != grid.particles) {
    throw InvalidArgument("one mass per particle is required");
  }
  if (!dynamic.empty() && static_cast<int>(dynamic.size()) != grid.particles) {
    throw InvalidArgument("dynamic mask must list every particle");
  }
  std::vector<RealMatrix> kinetic;
  for (int l = 0; l < grid.particles; ++l) {
    if (!dynamic.empty() && !dynamic[l]) {
      kinetic.push_back(RealMatrix::Zero(grid.points, grid.points));
    } else {
      kinetic.push_back(kinetic_matrix(grid.points, grid.spacing, constants.masses[l], constants.hbar));
    }
  }
  RealVector v = external_potential.size() ? external_potential
                                           : RealVector(RealVector::Zero(grid.hilbert_dim()));
  return Hamiltonian(grid, std::move(kinetic), std::move(v));
}

Hamiltonian build_free_hamiltonian(const GridSpec& grid, const PhysicalConstants& constants,
                                   const std::vector<bool>& dynamic) {
  return build_hamiltonian(grid, constants, RealVector(), dynamic);
}

RealVector smearing_weights(const GridSpec& grid, double r_c) {
  if (!(r_c > 0.0)) throw InvalidArgument("smearing width r_c must be > 0");
  RealVector w(grid.points);
  for (int k = 0; k < grid.points; ++k) {
    const double d = grid.periodic_distance(k, 0);
    w[k] = std::exp(-d * d / (2.0 * r_c * r_c));
  }
  return w / w.sum();
}

RealVector smear(const RealVector& field, const GridSpec& grid, double r_c) {
  if (field.size() != grid.points) throw InvalidArgument("smear: field length must equal N");
  const RealVector w = smearing_weights(grid, r_c);
  RealVector out = RealVector::Zero(grid.points);
  for (int i = 0; i < grid.points; ++i) {
    for (int j = 0; j < grid.points; ++j) {
      out[i] += w[((i - j) % grid.points + grid.points) % grid.points] * field[j];
    }
  }
  return out;
}

double regularized_coulomb_value(double r, double r_c) {
  if (!(r_c > 0.0)) throw InvalidArgument("regularisation length r_c must be > 0");
  r = std::abs(r);
  const double a = 2.0 * r_c;
  if (r < 1e-8 * r_c) {
    // erf(u)/r ~ (2/sqrt(pi)) (1/a) (1 - u^2/3)
    const double u = r / a;
    return 2.0 / (std::sqrt(std::numbers::pi) * a) * (1.0 - u * u / 3.0);
  }
  return std::erf(r / a) / r;
}

RealMatrix regularized_coulomb(const GridSpec& grid, double r_c, Separation separation) {
  grid.validate();
  RealMatrix k(grid.points, grid.points);
  for (int i = 0; i < grid.points; ++i) {
    for (int j = 0; j < grid.points; ++j) {
      const double r = separation == Separation::Periodic ? grid.periodic_distance(i, j)
                                                          : std::abs(i - j) * grid.spacing;
      k(i, j) = regularized_coulomb_value(r, r_c);
    }
  }
  return k;
}

MassDensityField build_mass_density(const GridSpec& grid, const PhysicalConstants& constants,
                                    double r_c) {
  grid.validate();
  constants.validate();
  if (static_cast<int>(constants.masses.size()) != grid.particles) {
    throw InvalidArgument("one mass per particle is required");
  }
  const RealVector w = smearing_weights(grid, r_c);
  const auto dim = static_cast<Eigen::Index>(grid.hilbert_dim());
  MassDensityField field{RealMatrix::Zero(grid.points, dim), RealMatrix::Zero(grid.points, dim)};
  const double inv_dx = 1.0 / grid.spacing;
  for (Eigen::Index a = 0; a < dim; ++a) {
    const auto cells = grid.cells(static_cast<std::size_t>(a));
    for (int l = 0; l < grid.particles; ++l) {
      const double m = constants.masses[l];
      field.bare(cells[l], a) += m * inv_dx;
      for (int i = 0; i < grid.points; ++i) {
        const int off = ((i - cells[l]) % grid.points + grid.points) % grid.points;
        field.smeared(i, a) += m * w[off] * inv_dx;
      }
    }
  }
  return field;
}

RealVector position_diagonal(const GridSpec& grid, int particle) {
  const auto dim = static_cast<Eigen::Index>(grid.hilbert_dim());
  RealVector x(dim);
  for (Eigen::Index a = 0; a < dim; ++a) {
    x[a] = grid.position(grid.cell(static_cast<std::size_t>(a), particle));
  }
  return x;
}

Expectation expectation(const WaveFunction& psi, const Matrix& op) {
  require_dims(psi.grid(), op.rows());
  if (op.rows() != op.cols()) throw InvalidArgument("expectation: operator must be square");
  const Vector u = psi.unit_vector();
  const Complex value = u.dot(op * u);
  const bool hermitian = hermiticity_defect(op) <= 1e-10;
  return {value, hermitian ? std::abs(value.imag()) : 0.0};
}

Expectation expectation(const DensityMatrix& rho, const Matrix& op) {
  require_dims(rho.grid(), op.rows());
  if (op.rows() != op.cols()) throw InvalidArgument("expectation: operator must be square");
  const Complex value = (rho.matrix() * op).trace();
  const bool hermitian = hermiticity_defect(op) <= 1e-10;
  return {value, hermitian ? std::abs(value.imag()) : 0.0};
}

double expectation_diagonal(const WaveFunction& psi, const RealVector& diag) {
  require_dims(psi.grid(), diag.size());
  return psi.probabilities().dot(diag);
}

double expectation_diagonal(const DensityMatrix& rho, const RealVector& diag) {
  require_dims(rho.grid(), diag.size());
  return rho.matrix().diagonal().real().dot(diag);
}

Matrix partial_trace(const Matrix& rho, const std::vector<int>& dims, const std::vector<int>& keep) {
  const int parts = static_cast<int>(dims.size());
  Eigen::Index total = 1;
  for (int d : dims) total *= d;
  if (rho.rows() != total || rho.cols() != total) {
    throw InvalidArgument("partial_trace: matrix does not match subsystem dimensions");
  }
  std::vector<bool> kept(parts, false);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const int p = keep[k];
    if (p < 0 || p >= parts || kept[p] || (k > 0 && keep[k - 1] >= p)) {
      throw InvalidArgument("partial_trace: keep list must be strictly increasing valid indices");
    }
    kept[p] = true;
  }
  Eigen::Index reduced = 1;
  for (int p = 0; p < parts; ++p) {
    if (kept[p]) reduced *= dims[p];
  }

  auto digits = [&](Eigen::Index a) {
    std::vector<int> d(parts);
    for (int p = parts - 1; p >= 0; --p) {
      d[p] = static_cast<int>(a % dims[p]);
      a /= dims[p];
    }
    return d;
  };
  std::vector<Eigen::Index> kept_index(total), traced_index(total);
  for (Eigen::Index a = 0; a < total; ++a) {
    const auto d = digits(a);
    Eigen::Index k = 0, t = 0;
    for (int p = 0; p < parts; ++p) {
      if (kept[p]) {
        k = k * dims[p] + d[p];
      } else {
        t = t * dims[p] + d[p];
      }
    }
    kept_index[a] = k;
    traced_index[a] = t;
  }
  Matrix out = Matrix::Zero(reduced, reduced);
  for (Eigen::Index b = 0; b < total; ++b) {
    for (Eigen::Index a = 0; a < total; ++a) {
      if (traced_index[a] == traced_index[b]) out(kept_index[a], kept_index[b]) += rho(a, b);
    }
  }
  return out;
}

DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<int>& keep) {
  const auto& grid = rho.grid();
  if (grid.particles < 2) throw InvalidArgument("partial_trace needs at least two particles");
  if (keep.empty()) throw InvalidArgument("partial_trace: keep at least one particle");
  std::vector<int> dims(grid.particles, grid.points);
  return DensityMatrix(grid.with_particles(static_cast<int>(keep.size())),
                       partial_trace(rho.matrix(), dims, keep));
}

}  // namespace semigrav
