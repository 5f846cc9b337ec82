#include "semigrav/flash.hpp"

#include <cmath>
#include <numeric>

namespace semigrav {

namespace {

void require_state(const FlashModelParams& params, Eigen::Index size) {
  if (static_cast<std::size_t>(size) != params.grid.hilbert_dim()) {
    throw InvalidArgument("state dimension does not match the flash model grid");
  }
}

void require_event(const FlashModelParams& params, int cell, int particle) {
  if (cell < 0 || cell >= params.grid.points) throw InvalidArgument("flash position is off the grid");
  if (particle < 0 || particle >= params.grid.particles) {
    throw InvalidArgument("flash particle index out of range");
  }
}

// Single-particle profile exp(-d^2 / 2 r_c^2) times c, indexed by minimum-image offset.
RealVector collapse_profile(const FlashModelParams& params) {
  const auto& g = params.grid;
  const double c = collapse_normalizer(params);
  RealVector w(g.points);
  for (int k = 0; k < g.points; ++k) {
    const double d = g.periodic_distance(k, 0);
    w[k] = c * std::exp(-d * d / (2.0 * params.r_c * params.r_c));
  }
  return w;
}

int offset(int i, int j, int n) { return ((i - j) % n + n) % n; }

}  // namespace

void FlashModelParams::validate() const {
  grid.validate();
  constants.validate();
  if (!(rate > 0.0)) throw InvalidArgument("flash rate lambda must be > 0");
  if (!(r_c > 0.0)) throw InvalidArgument("flash width r_c must be > 0");
  if (static_cast<int>(constants.masses.size()) != grid.particles) {
    throw InvalidArgument("one mass per particle is required");
  }
}

std::pair<double, int> sample_next_flash(double t_now, const FlashModelParams& params, Rng& rng) {
  if (!(params.rate > 0.0)) throw InvalidArgument("flash rate lambda must be > 0");
  std::exponential_distribution<double> wait(params.rate * params.grid.particles);
  std::uniform_int_distribution<int> who(0, params.grid.particles - 1);
  const double t = t_now + wait(rng);
  return {t, who(rng)};
}

double collapse_normalizer(const FlashModelParams& params) {
  const auto& g = params.grid;
  double s = 0.0;
  for (int k = 0; k < g.points; ++k) {
    const double d = g.periodic_distance(k, 0);
    s += std::exp(-d * d / (params.r_c * params.r_c));
  }
  return 1.0 / std::sqrt(g.spacing * s);
}

RealVector collapse_operator(int cell, int particle, const FlashModelParams& params) {
  params.validate();
  require_event(params, cell, particle);
  const RealVector w = collapse_profile(params);
  const auto dim = static_cast<Eigen::Index>(params.grid.hilbert_dim());
  RealVector l(dim);
  for (Eigen::Index a = 0; a < dim; ++a) {
    l[a] = w[offset(params.grid.cell(static_cast<std::size_t>(a), particle), cell, params.grid.points)];
  }
  return l;
}

RealVector kick_phase(int cell, int particle, const FlashModelParams& params) {
  params.validate();
  require_event(params, cell, particle);
  const auto& g = params.grid;
  const auto& c = params.constants;
  const auto dim = static_cast<Eigen::Index>(g.hilbert_dim());
  RealVector phase = RealVector::Zero(dim);
  if (c.G == 0.0) return phase;
  RealVector k(g.points);
  for (int i = 0; i < g.points; ++i) {
    k[i] = regularized_coulomb_value(g.periodic_distance(cell, i), params.r_c);
  }
  const double scale = c.G / (params.rate * c.hbar);
  for (Eigen::Index a = 0; a < dim; ++a) {
    const auto cells = g.cells(static_cast<std::size_t>(a));
    double s = 0.0;
    for (int lp = 0; lp < g.particles; ++lp) {
      if (lp == particle && !params.include_self_kick) continue;
      s += c.masses[particle] * c.masses[lp] * k[cells[lp]];
    }
    phase[a] = scale * s;
  }
  return phase;
}

Vector kick_unitary(int cell, int particle, const FlashModelParams& params) {
  const RealVector phase = kick_phase(cell, particle, params);
  Vector u(phase.size());
  for (Eigen::Index a = 0; a < phase.size(); ++a) u[a] = std::exp(kI * phase[a]);
  return u;
}

double gravitational_radius(double mass, double rate, const PhysicalConstants& constants) {
  if (!(rate > 0.0)) throw InvalidArgument("rate must be > 0");
  if (mass < 0.0) throw InvalidArgument("mass must be >= 0");
  return constants.G * mass * mass / (constants.hbar * rate);
}

double gravitational_radius_si(double mass, double rate, const PhysicalConstants& constants) {
  return gravitational_radius(mass, rate, constants) * constants.units.length_m;
}

double gravitational_radius_si(double mass_kg, double rate_per_s) {
  if (!(rate_per_s > 0.0)) throw InvalidArgument("rate must be > 0");
  if (mass_kg < 0.0) throw InvalidArgument("mass must be >= 0");
  return si::kGravitationalConstant * mass_kg * mass_kg / (si::kHbar * rate_per_s);
}

RealVector flash_position_distribution(const Vector& psi, int particle,
                                       const FlashModelParams& params) {
  params.validate();
  require_state(params, psi.size());
  require_event(params, 0, particle);
  const auto& g = params.grid;
  RealVector marginal = RealVector::Zero(g.points);
  for (Eigen::Index a = 0; a < psi.size(); ++a) {
    marginal[g.cell(static_cast<std::size_t>(a), particle)] += std::norm(psi[a]);
  }
  const RealVector w = collapse_profile(params);
  RealVector p = RealVector::Zero(g.points);
  for (int f = 0; f < g.points; ++f) {
    for (int i = 0; i < g.points; ++i) p[f] += w[offset(i, f, g.points)] * w[offset(i, f, g.points)] * marginal[i];
    p[f] *= g.spacing;
  }
  return p;
}

int sample_flash_position(const Vector& psi, int particle, const FlashModelParams& params,
                          Rng& rng) {
  const RealVector p = flash_position_distribution(psi, particle, params);
  const double total = p.sum();
  if (!(total > 0.0)) throw DegenerateOutcome("flash outcome distribution vanishes");
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  for (int f = 0; f < p.size(); ++f) {
    acc += p[f];
    if (u < acc) return f;
  }
  return static_cast<int>(p.size()) - 1;
}

Vector apply_flash(const Vector& psi, const FlashEvent& event, const FlashModelParams& params) {
  require_state(params, psi.size());
  const RealVector l = collapse_operator(event.cell, event.particle, params);
  Vector out = l.cast<Complex>().cwiseProduct(psi);
  const double n = out.norm();
  if (!(n > 1e-150)) throw DegenerateOutcome("flash branch has vanishing probability");
  out /= n;
  if (params.constants.G != 0.0) out = out.cwiseProduct(kick_unitary(event.cell, event.particle, params));
  return out;
}

WaveFunction apply_flash(const WaveFunction& psi, const FlashEvent& event,
                         const FlashModelParams& params) {
  return WaveFunction::from_unit_vector(psi.grid(), apply_flash(psi.unit_vector(), event, params));
}

TrajectoryRecord evolve_flash_trajectory(const Vector& psi0, const Hamiltonian& h0, double T,
                                         double dt, const FlashModelParams& params, Rng& rng) {
  params.validate();
  require_state(params, psi0.size());
  if (!(T >= 0.0) || !(dt > 0.0)) throw InvalidArgument("need T >= 0 and dt > 0");
  const double hbar = params.constants.hbar;
  if (dt * h0.spectral_radius() / hbar > 10.0) {
    throw StepSizeError("dt * ||H0|| / hbar exceeds 10; reduce the sampling step");
  }
  const int samples = static_cast<int>(std::llround(T / dt));
  if (std::abs(samples * dt - T) > 1e-9 * std::max(1.0, T)) {
    throw InvalidArgument("T must be an integer multiple of dt");
  }

  TrajectoryRecord rec;
  Vector psi = psi0 / psi0.norm();
  double t = 0.0;
  rec.times.push_back(0.0);
  rec.states.push_back(psi);
  auto [t_flash, who] = sample_next_flash(0.0, params, rng);
  for (int s = 1; s <= samples; ++s) {
    const double t_sample = s * dt;
    while (t_flash <= t_sample) {
      psi = h0.propagate(psi, t_flash - t, hbar);
      t = t_flash;
      FlashEvent ev{t_flash, sample_flash_position(psi, who, params, rng), who};
      psi = apply_flash(psi, ev, params);
      rec.flashes.push_back(ev);
      std::tie(t_flash, who) = sample_next_flash(t, params, rng);
    }
    psi = h0.propagate(psi, t_sample - t, hbar);
    psi /= psi.norm();
    t = t_sample;
    rec.times.push_back(t_sample);
    rec.states.push_back(psi);
  }
  return rec;
}

FlashGenerator::FlashGenerator(FlashModelParams params, Hamiltonian h0)
    : params_(std::move(params)), h0_(std::move(h0)) {
  params_.validate();
  if (!(h0_.grid() == params_.grid)) throw InvalidArgument("Hamiltonian grid differs from the model grid");
  const auto& g = params_.grid;
  const auto dim = static_cast<Eigen::Index>(g.hilbert_dim());
  const Eigen::Index flashes = static_cast<Eigen::Index>(g.particles) * g.points;
  Matrix columns(dim, flashes);
  RealMatrix l_columns(dim, flashes);
  RealMatrix v_columns(dim, flashes);
  const double sq = std::sqrt(g.spacing);
  const double to_potential = -params_.rate * params_.constants.hbar;  // V_f = -lambda hbar phase
  for (int l = 0; l < g.particles; ++l) {
    for (int f = 0; f < g.points; ++f) {
      const Eigen::Index col = static_cast<Eigen::Index>(l) * g.points + f;
      const RealVector lv = collapse_operator(f, l, params_);
      const RealVector phase = kick_phase(f, l, params_);
      l_columns.col(col) = sq * lv;
      v_columns.col(col) = to_potential * phase;
      for (Eigen::Index a = 0; a < dim; ++a) columns(a, col) = sq * lv[a] * std::exp(kI * phase[a]);
    }
  }
  kernel_ = columns * columns.adjoint();
  collapse_ = l_columns * l_columns.transpose();
  // sum_f dx L_a L_b (V_f(a) - V_f(b)) = (L.V) L^T - L (L.V)^T
  const RealMatrix lv = l_columns.cwiseProduct(v_columns);
  potential_ = lv * l_columns.transpose() - l_columns * lv.transpose();
}

Matrix FlashGenerator::von_neumann_term(const Matrix& rho) const {
  return (-kI / params_.constants.hbar) * h0_.commutator(rho);
}

Matrix FlashGenerator::collapse_term(const Matrix& rho) const {
  return params_.rate * (collapse_.cast<Complex>().cwiseProduct(rho) -
                         static_cast<double>(params_.grid.particles) * rho);
}

Matrix FlashGenerator::effective_potential_term(const Matrix& rho) const {
  return (-kI / params_.constants.hbar) * potential_.cast<Complex>().cwiseProduct(rho);
}

Matrix FlashGenerator::operator()(const Matrix& rho) const {
  if (rho.rows() != kernel_.rows() || rho.cols() != kernel_.cols()) {
    throw InvalidArgument("density matrix dimension does not match the flash generator");
  }
  return von_neumann_term(rho) +
         params_.rate * (kernel_.cwiseProduct(rho) - static_cast<double>(params_.grid.particles) * rho);
}

double flash_pair_kernel(int cell1, int cell2, const FlashModelParams& params) {
  const auto& g = params.grid;
  const RealVector w = collapse_profile(params);
  double s = 0.0;
  for (int f = 0; f < g.points; ++f) {
    const double l = w[offset(f, cell2, g.points)];
    s += g.spacing * l * l * regularized_coulomb_value(g.periodic_distance(f, cell1), params.r_c);
  }
  return s;
}

}  // namespace semigrav
