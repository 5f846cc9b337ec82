#include "semigrav/schroedinger_newton.hpp"

#include <cmath>

namespace semigrav {

namespace {

Vector apply_phase(const Vector& psi, const RealVector& v, double t, double hbar) {
  Vector out(psi.size());
  for (Eigen::Index a = 0; a < psi.size(); ++a) out[a] = psi[a] * std::exp(-kI * v[a] * t / hbar);
  return out;
}

}  // namespace

void SNParams::validate() const {
  grid.validate();
  constants.validate();
  if (static_cast<int>(constants.masses.size()) != grid.particles) {
    throw InvalidArgument("one mass per particle is required");
  }
  if (!(r_c > 0.0)) throw InvalidArgument("r_c must be > 0");
  if (!(dt > 0.0)) throw InvalidArgument("dt must be > 0");
  if (!dynamic.empty() && static_cast<int>(dynamic.size()) != grid.particles) {
    throw InvalidArgument("dynamic mask must list every particle");
  }
}

RealVector sn_field(const Vector& psi, const SNParams& params) {
  params.validate();
  const auto& g = params.grid;
  if (static_cast<std::size_t>(psi.size()) != g.hilbert_dim()) {
    throw InvalidArgument("state dimension does not match the grid");
  }
  // <M(y)> dy = sum_l m_l P_l(y)
  RealVector mass = RealVector::Zero(g.points);
  for (Eigen::Index a = 0; a < psi.size(); ++a) {
    const double p = std::norm(psi[a]);
    if (p == 0.0) continue;
    const auto cells = g.cells(static_cast<std::size_t>(a));
    for (int l = 0; l < g.particles; ++l) mass[cells[l]] += params.constants.masses[l] * p;
  }
  mass /= psi.squaredNorm();
  return -params.constants.G * (regularized_coulomb(g, params.r_c) * mass);
}

RealVector sn_potential(const Vector& psi, const SNParams& params) {
  const RealVector phi = sn_field(psi, params);
  const auto& g = params.grid;
  RealVector v(psi.size());
  for (Eigen::Index a = 0; a < psi.size(); ++a) {
    const auto cells = g.cells(static_cast<std::size_t>(a));
    double s = 0.0;
    for (int l = 0; l < g.particles; ++l) s += params.constants.masses[l] * phi[cells[l]];
    v[a] = s;
  }
  return v;
}

RealVector sn_potential(const WaveFunction& psi, const SNParams& params) {
  return sn_potential(psi.unit_vector(), params);
}

double sn_energy(const Vector& psi, const Hamiltonian& h0, const SNParams& params) {
  const Vector u = psi / psi.norm();
  const double kinetic = u.dot(h0.apply(u)).real();
  const RealVector v = sn_potential(u, params);
  return kinetic + 0.5 * u.cwiseAbs2().dot(v);
}

double inter_blob_distance(const Vector& psi, const GridSpec& grid, int particle) {
  double s = 0.0;
  for (Eigen::Index a = 0; a < psi.size(); ++a) {
    s += std::norm(psi[a]) * std::abs(grid.position(grid.cell(static_cast<std::size_t>(a), particle)));
  }
  return 2.0 * s / psi.squaredNorm();
}

SNRecord evolve_sn(const Vector& psi0, double T, const SNParams& params, int record_every) {
  params.validate();
  if (!(T >= 0.0) || record_every < 1) throw InvalidArgument("need T >= 0 and record_every >= 1");
  const long steps = std::lround(T / params.dt);
  if (std::abs(steps * params.dt - T) > 1e-9 * std::max(1.0, T)) {
    throw InvalidArgument("T must be an integer multiple of dt");
  }
  const double hbar = params.constants.hbar;
  const double dt = params.dt;
  const Hamiltonian h0 = build_free_hamiltonian(params.grid, params.constants, params.dynamic);
  const bool dense = params.grid.hilbert_dim() <= 1024;
  const Matrix u_kin = dense ? h0.propagator(dt, hbar) : Matrix();

  Vector psi = psi0 / psi0.norm();
  SNRecord rec;
  auto record = [&](double t) {
    rec.times.push_back(t);
    rec.states.push_back(psi);
    rec.distance.push_back(inter_blob_distance(psi, params.grid));
    rec.energy.push_back(sn_energy(psi, h0, params));
  };
  record(0.0);
  RealVector v = sn_potential(psi, params);
  if (dt * v.cwiseAbs().maxCoeff() / hbar > 1.0) {
    throw StepSizeError("dt * max|V| / hbar exceeds 1; reduce dt");
  }
  for (long s = 1; s <= steps; ++s) {
    psi = apply_phase(psi, v, 0.5 * dt, hbar);
    psi = dense ? Vector(u_kin * psi) : h0.propagate(psi, dt, hbar);
    v = sn_potential(psi, params);
    psi = apply_phase(psi, v, 0.5 * dt, hbar);
    if (s % record_every == 0 || s == steps) record(s * dt);
  }
  return rec;
}

Vector evolve_sn_final(const Vector& psi0, double T, const SNParams& params) {
  const long steps = std::lround(T / params.dt);
  SNParams p = params;
  return evolve_sn(psi0, T, p, static_cast<int>(std::max(1L, steps))).states.back();
}

}  // namespace semigrav
