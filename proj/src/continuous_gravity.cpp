#include "semigrav/continuous_gravity.hpp"

#include <cmath>

namespace semigrav {

namespace {

constexpr double kMaxCondition = 1e12;

NoiseKernel finish_kernel(NoiseKernel k, const GridSpec& grid) {
  grid.validate();
  const auto& t = k.table;
  if (t.rows() != grid.points || t.cols() != grid.points) {
    throw InvalidArgument("kernel table must be N x N for the grid");
  }
  if ((t - t.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, t.cwiseAbs().maxCoeff())) {
    throw InvalidArgument("noise kernel must be symmetric within 1e-12");
  }
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(0.5 * (t + t.transpose()));
  const RealVector& ev = es.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) {
    throw InvalidArgument("noise kernel must be positive definite (min eigenvalue " +
                          std::to_string(ev.minCoeff()) + ")");
  }
  k.condition = ev.maxCoeff() / ev.minCoeff();
  if (k.condition > kMaxCondition) {
    throw InvalidArgument("noise kernel condition number " + std::to_string(k.condition) +
                          " exceeds 1e12");
  }
  const double dx2 = grid.spacing * grid.spacing;
  k.inverse = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose() / dx2;
  return k;
}

}  // namespace

NoiseKernel NoiseKernel::csl(const GridSpec& grid, double gamma, double nucleon_mass) {
  if (!(gamma > 0.0) || !(nucleon_mass > 0.0)) {
    throw InvalidArgument("CSL kernel needs gamma > 0 and m_N > 0");
  }
  grid.validate();
  NoiseKernel k;
  k.kind = KernelKind::CSL;
  k.gamma = gamma;
  k.nucleon_mass = nucleon_mass;
  k.table = RealMatrix::Identity(grid.points, grid.points) *
            (4.0 * gamma / (nucleon_mass * nucleon_mass) / grid.spacing);
  return finish_kernel(std::move(k), grid);
}

NoiseKernel NoiseKernel::dp(const GridSpec& grid, const PhysicalConstants& constants, double r_c) {
  constants.validate();
  if (!(constants.G > 0.0)) throw InvalidArgument("DP kernel needs G > 0");
  NoiseKernel k;
  k.kind = KernelKind::DP;
  k.G = constants.G;
  k.hbar = constants.hbar;
  k.table = (2.0 * constants.G / constants.hbar) * regularized_coulomb(grid, r_c, Separation::Open);
  return finish_kernel(std::move(k), grid);
}

NoiseKernel NoiseKernel::custom(const GridSpec& grid, RealMatrix table) {
  NoiseKernel k;
  k.kind = KernelKind::Custom;
  k.table = std::move(table);
  return finish_kernel(std::move(k), grid);
}

std::string NoiseKernel::label() const {
  switch (kind) {
    case KernelKind::CSL: return "CSL";
    case KernelKind::DP: return "DP";
    case KernelKind::Custom: return "custom";
  }
  return "custom";
}

void ContinuousGravityParams::validate() const {
  grid.validate();
  constants.validate();
  if (static_cast<int>(constants.masses.size()) != grid.particles) {
    throw InvalidArgument("one mass per particle is required");
  }
  if (!(r_c > 0.0)) throw InvalidArgument("r_c must be > 0");
  if (!(dt > 0.0)) throw InvalidArgument("dt must be > 0");
}

ContinuousMeasurementSpec build_mass_measurement_spec(const ContinuousGravityParams& params,
                                                      const NoiseKernel& kernel) {
  params.validate();
  if (kernel.table.rows() != params.grid.points) {
    throw InvalidArgument("noise kernel is defined on a different grid");
  }
  const MassDensityField field = build_mass_density(params.grid, params.constants, params.r_c);
  const double dx2 = params.grid.spacing * params.grid.spacing;
  return ContinuousMeasurementSpec::diagonal(field.smeared, dx2 * kernel.table, RealMatrix(),
                                             params.dt, params.constants.hbar);
}

GravitationalFeedbackSpec build_feedback_spec(const ContinuousMeasurementSpec& measurement,
                                              const ContinuousGravityParams& params) {
  params.validate();
  if (!measurement.is_diagonal() || measurement.count() != params.grid.points ||
      static_cast<std::size_t>(measurement.dim()) != params.grid.hilbert_dim()) {
    throw InvalidArgument("feedback needs a mass-density measurement on the same grid");
  }
  const double dx = params.grid.spacing;
  const RealMatrix k_reg = regularized_coulomb(params.grid, params.r_c, Separation::Open);
  RealMatrix phi = (-params.constants.G * dx) * (k_reg * measurement.observable_diagonals());
  auto spec = ContinuousMeasurementSpec::diagonal(measurement.observable_diagonals(),
                                                  measurement.correlation(), dx * phi,
                                                  measurement.dt(), measurement.hbar());
  if (params.constants.G == 0.0) {
    spec = spec.without_feedback();
  }
  return {std::move(spec), std::move(phi)};
}

GravityGenerator::GravityGenerator(GravitationalFeedbackSpec spec, std::optional<Hamiltonian> h0)
    : spec_(std::move(spec)), h0_(std::move(h0)) {
  const auto& s = spec_.spec;
  if (h0_ && static_cast<Eigen::Index>(h0_->grid().hilbert_dim()) != s.dim()) {
    throw InvalidArgument("Hamiltonian dimension does not match the feedback spec");
  }
  // V_a = 1/2 sum_j k^j_a o^j_a.
  pair_ = 0.5 * s.feedback_diagonals().cwiseProduct(s.observable_diagonals()).colwise().sum().transpose();
}

Matrix GravityGenerator::von_neumann_term(const Matrix& rho) const {
  if (!h0_) return Matrix::Zero(rho.rows(), rho.cols());
  return (-kI / spec_.spec.hbar()) * h0_->commutator(rho);
}

Matrix GravityGenerator::potential_term(const Matrix& rho) const {
  Matrix out(rho.rows(), rho.cols());
  const Complex f = -kI / spec_.spec.hbar();
  for (Eigen::Index b = 0; b < rho.cols(); ++b) {
    for (Eigen::Index a = 0; a < rho.rows(); ++a) out(a, b) = f * (pair_[a] - pair_[b]) * rho(a, b);
  }
  return out;
}

Matrix GravityGenerator::measurement_term(const Matrix& rho) const {
  return (-0.125) * spec_.spec.diagonal_tables().measurement.cast<Complex>().cwiseProduct(rho);
}

Matrix GravityGenerator::feedback_term(const Matrix& rho) const {
  if (!spec_.spec.has_feedback()) return Matrix::Zero(rho.rows(), rho.cols());
  const double hbar = spec_.spec.hbar();
  return (-0.5 / (hbar * hbar)) * spec_.spec.diagonal_tables().feedback.cast<Complex>().cwiseProduct(rho);
}

Matrix GravityGenerator::operator()(const Matrix& rho) const {
  if (rho.rows() != spec_.spec.dim() || rho.cols() != spec_.spec.dim()) {
    throw InvalidArgument("density matrix dimension does not match the generator");
  }
  const auto& t = spec_.spec.diagonal_tables();
  const double hbar = spec_.spec.hbar();
  const double fb = spec_.spec.has_feedback() ? 0.5 / (hbar * hbar) : 0.0;
  Matrix out = von_neumann_term(rho);
  for (Eigen::Index b = 0; b < rho.cols(); ++b) {
    for (Eigen::Index a = 0; a < rho.rows(); ++a) {
      const Complex factor(-0.125 * t.measurement(a, b) - fb * t.feedback(a, b),
                           -(pair_[a] - pair_[b]) / hbar);
      out(a, b) += factor * rho(a, b);
    }
  }
  return out;
}

DecoherenceRates decoherence_rates(const GravitationalFeedbackSpec& spec, std::size_t config_a,
                                   std::size_t config_b) {
  const auto& s = spec.spec;
  const auto dim = static_cast<std::size_t>(s.dim());
  if (config_a >= dim || config_b >= dim) throw InvalidArgument("configuration index out of range");
  const auto a = static_cast<Eigen::Index>(config_a);
  const auto b = static_cast<Eigen::Index>(config_b);
  // Single-entry evaluation of the pair forms, avoiding the full tables.
  const RealVector dobs = s.observable_diagonals().col(a) - s.observable_diagonals().col(b);
  const RealVector dfb = s.feedback_diagonals().col(a) - s.feedback_diagonals().col(b);
  const double hbar = s.hbar();
  DecoherenceRates r{};
  r.measurement = 0.125 * dobs.dot(s.correlation() * dobs);
  r.feedback = s.has_feedback() ? 0.5 / (hbar * hbar) * dfb.dot(s.inverse_correlation() * dfb) : 0.0;
  r.total = r.measurement + r.feedback;
  return r;
}

}  // namespace semigrav
