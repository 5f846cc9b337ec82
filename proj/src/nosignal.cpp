#include "semigrav/nosignal.hpp"

#include <cmath>
#include <memory>

namespace semigrav {

namespace {

void require_pair(const GridSpec& grid) {
  if (grid.particles != 2) throw InvalidArgument("the no-signalling scenario needs exactly two particles");
}

Hamiltonian alice_only_hamiltonian(const NoSignallingSetup& s) {
  return build_free_hamiltonian(s.grid, s.constants, {true, false});
}

Matrix alice_reduced(const Matrix& rho, const GridSpec& grid) {
  return partial_trace(rho, {grid.points, grid.points}, {0});
}

}  // namespace

NoSignallingModel parse_nosignal_model(const std::string& name) {
  if (name == "flash") return NoSignallingModel::Flash;
  if (name == "continuous") return NoSignallingModel::Continuous;
  if (name == "sn") return NoSignallingModel::SchroedingerNewton;
  throw InvalidArgument("unknown model '" + name + "' (expected flash, continuous or sn)");
}

std::string to_string(NoSignallingModel model) {
  switch (model) {
    case NoSignallingModel::Flash: return "flash";
    case NoSignallingModel::Continuous: return "continuous";
    case NoSignallingModel::SchroedingerNewton: return "sn";
  }
  return "flash";
}

void NoSignallingSetup::validate() const {
  grid.validate();
  require_pair(grid);
  constants.validate();
  if (constants.masses.size() != 2) throw InvalidArgument("two masses are required");
  if (!(r_c > 0.0) || !(T >= 0.0) || !(dt > 0.0) || !(flash_rate > 0.0)) {
    throw InvalidArgument("no-signalling setup needs r_c, dt, flash_rate > 0 and T >= 0");
  }
}

Matrix dephase_particle(const Matrix& rho, const GridSpec& grid, int particle) {
  Matrix out = rho;
  for (Eigen::Index b = 0; b < rho.cols(); ++b) {
    const int cb = grid.cell(static_cast<std::size_t>(b), particle);
    for (Eigen::Index a = 0; a < rho.rows(); ++a) {
      if (grid.cell(static_cast<std::size_t>(a), particle) != cb) out(a, b) = 0.0;
    }
  }
  return out;
}

Matrix apply_local_channel(const Matrix& rho, const GridSpec& grid, int particle,
                           const std::vector<Matrix>& kraus) {
  Matrix out = Matrix::Zero(rho.rows(), rho.cols());
  for (const auto& k : kraus) {
    Matrix left = rho;
    apply_on_axis(k, particle, grid, left);  // (1 x K) rho
    Matrix right = left.adjoint();
    apply_on_axis(k, particle, grid, right);
    out += right.adjoint();  // (1 x K) rho (1 x K)^dagger
  }
  return out;
}

Generator linear_generator(NoSignallingModel model, const NoSignallingSetup& s) {
  s.validate();
  Hamiltonian h0 = alice_only_hamiltonian(s);
  if (model == NoSignallingModel::Flash) {
    FlashModelParams p{s.flash_rate, s.r_c, s.constants, s.grid, s.include_self_kick};
    auto gen = std::make_shared<FlashGenerator>(p, std::move(h0));
    return [gen](const Matrix& rho) { return (*gen)(rho); };
  }
  if (model == NoSignallingModel::Continuous) {
    ContinuousGravityParams p{s.grid, s.constants, s.r_c, s.dt};
    const NoiseKernel kernel = s.kernel ? *s.kernel : NoiseKernel::dp(s.grid, s.constants, s.r_c);
    const auto meas = build_mass_measurement_spec(p, kernel);
    auto gen = std::make_shared<GravityGenerator>(build_feedback_spec(meas, p), std::move(h0));
    return [gen](const Matrix& rho) { return (*gen)(rho); };
  }
  throw InvalidArgument("the SN model has no linear generator");
}

Matrix alice_after(const Generator& generator, const Matrix& rho0, const NoSignallingSetup& setup,
                   const std::function<Matrix(const Matrix&)>& bob_channel) {
  const Matrix start = bob_channel ? bob_channel(rho0) : rho0;
  return alice_reduced(integrate_to(generator, start, setup.T, setup.dt), setup.grid);
}

NoSignallingResult no_signalling_test(NoSignallingModel model, const Vector& psi0,
                                      const NoSignallingSetup& setup) {
  setup.validate();
  if (static_cast<std::size_t>(psi0.size()) != setup.grid.hilbert_dim()) {
    throw InvalidArgument("state does not match the two-particle grid");
  }
  const Vector psi = psi0 / psi0.norm();
  NoSignallingResult r;
  if (model != NoSignallingModel::SchroedingerNewton) {
    const Generator gen = linear_generator(model, setup);
    const Matrix rho0 = projector(psi);
    r.alice_idle = alice_after(gen, rho0, setup, {});
    r.alice_measured = alice_after(gen, rho0, setup, [&](const Matrix& rho) {
      return dephase_particle(rho, setup.grid, 1);
    });
  } else {
    SNParams p{setup.constants, setup.r_c, setup.grid, setup.dt, {true, false}};
    r.alice_idle = alice_reduced(projector(evolve_sn_final(psi, setup.T, p)), setup.grid);
    r.alice_measured = Matrix::Zero(setup.grid.points, setup.grid.points);
    for (int b = 0; b < setup.grid.points; ++b) {
      Vector branch = Vector::Zero(psi.size());
      for (Eigen::Index a = 0; a < psi.size(); ++a) {
        if (setup.grid.cell(static_cast<std::size_t>(a), 1) == b) branch[a] = psi[a];
      }
      const double weight = branch.squaredNorm();
      if (weight < 1e-14) continue;
      const Vector out = evolve_sn_final(branch / std::sqrt(weight), setup.T, p);
      r.alice_measured += weight * alice_reduced(projector(out), setup.grid);
    }
  }
  r.trace_distance = trace_distance(r.alice_idle, r.alice_measured);
  return r;
}

Vector entangled_blob_state(const GridSpec& grid, double separation, double width, int bob_cell0,
                            int bob_cell1) {
  require_pair(grid);
  if (bob_cell0 == bob_cell1) throw InvalidArgument("Bob's pointer cells must differ");
  const GridSpec single = grid.with_particles(1);
  const Vector left = WaveFunction::gaussian(single, -0.5 * separation, width).unit_vector();
  const Vector right = WaveFunction::gaussian(single, 0.5 * separation, width).unit_vector();
  Vector psi = Vector::Zero(static_cast<Eigen::Index>(grid.hilbert_dim()));
  for (int i = 0; i < grid.points; ++i) {
    psi[grid.config_index({i, bob_cell0})] += left[i];
    psi[grid.config_index({i, bob_cell1})] += right[i];
  }
  return psi / psi.norm();
}

}  // namespace semigrav
