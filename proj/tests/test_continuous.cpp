#include <doctest.h>

#include <cmath>
#include <numbers>

#include <unsupported/Eigen/MatrixFunctions>

#include "helpers.hpp"
#include "semigrav/continuous_gravity.hpp"
#include "semigrav/master_equation.hpp"

using namespace semigrav;
using testing::max_abs;

namespace {

ContinuousGravityParams make_params(int n, double dx, int particles, double G, double r_c, double dt = 1e-3) {
  ContinuousGravityParams p;
  p.grid.points = n;
  p.grid.spacing = dx;
  p.grid.particles = particles;
  p.constants.G = G;
  p.constants.masses.assign(particles, 1.0);
  p.r_c = r_c;
  p.dt = dt;
  return p;
}

GravitationalFeedbackSpec dp_spec(const ContinuousGravityParams& p) {
  return build_feedback_spec(build_mass_measurement_spec(p, NoiseKernel::dp(p.grid, p.constants, p.r_c)), p);
}

Matrix coherence(std::size_t dim, std::size_t a, std::size_t b) {
  Matrix rho = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  rho(a, a) = rho(b, b) = rho(a, b) = rho(b, a) = 0.5;
  return rho;
}

}  // namespace

TEST_SUITE("continuous-gravity") {
  TEST_CASE("total signal has mean (sum of masses) dt") {
    auto p = make_params(8, 0.5, 2, 0.0, 0.5, 1e-3);
    p.constants.masses = {1.3, 0.4};
    const auto spec = build_mass_measurement_spec(p, NoiseKernel::csl(p.grid, 2.0, 1.0));
    Rng rng(1);
    const Matrix rho = testing::random_density(rng, 64);
    const int n = 20000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double total = make_signal(rho, spec, sample_noise(spec, rng)).dR.sum() * p.grid.spacing;
      sum += total;
      sq += total * total;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(mean - 1.7 * p.dt) < 4.0 * sd / std::sqrt(n));
  }

  TEST_CASE("CSL coherence decay between far-apart points matches the continuum overlap integral") {
    const double gamma = 1.5, mN = 0.8, m = 1.2, rc = 1.0;
    auto p = make_params(64, 0.25, 1, 0.0, rc);
    p.constants.masses = {m};
    const auto spec = build_feedback_spec(build_mass_measurement_spec(p, NoiseKernel::csl(p.grid, gamma, mN)), p);
    const GravityGenerator gen(spec);
    const std::size_t a = 16, b = 48;
    const Matrix out = gen.measurement_term(coherence(64, a, b));
    // (1/8)(4 gamma / m_N^2) m^2 int (g_a - g_b)^2 dx with int g^2 = 1 / (2 sqrt(pi) r_c).
    const double rate = 0.125 * (4 * gamma / (mN * mN)) * m * m * 2.0 / (2.0 * std::sqrt(std::numbers::pi) * rc);
    CHECK(-out(a, b).real() / 0.5 == doctest::Approx(rate).epsilon(1e-6));
    CHECK(decoherence_rates(spec, a, b).measurement == doctest::Approx(rate).epsilon(1e-6));
  }

  TEST_CASE("scaling Gamma by c scales the noise variance by 1/c") {
    const auto p = make_params(8, 1.0, 1, 0.0, 1.0);
    const auto spec = build_mass_measurement_spec(p, NoiseKernel::csl(p.grid, 1.0, 1.0));
    const auto scaled = spec.with_scaled_correlation(4.0);
    CHECK(max_abs((scaled.noise_factor() * scaled.noise_factor().transpose() -
                   0.25 * spec.noise_factor() * spec.noise_factor().transpose())
                      .cast<Complex>()) < 1e-12);
    Rng r1(2), r2(2);
    double v1 = 0.0, v2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      v1 += sample_noise(spec, r1).squaredNorm();
      v2 += sample_noise(scaled, r2).squaredNorm();
    }
    CHECK(v2 / v1 == doctest::Approx(0.25).epsilon(1e-10));
  }

  TEST_CASE("G = 0 gives vanishing feedback") {
    const auto p = make_params(8, 1.0, 1, 0.0, 1.0);
    const auto spec = build_feedback_spec(build_mass_measurement_spec(p, NoiseKernel::csl(p.grid, 1.0, 1.0)), p);
    CHECK(spec.potential.cwiseAbs().maxCoeff() == 0.0);
    for (int j = 0; j < spec.spec.count(); ++j) CHECK(max_abs(spec.spec.feedback(j)) == 0.0);
  }

  TEST_CASE("feedback potential of a localised mass is the smeared Coulomb field") {
    auto p = make_params(16, 1.0, 1, 0.7, 1.0);
    p.constants.masses = {2.0};
    const auto spec = dp_spec(p);
    const int x0 = 6;
    const RealVector w = smearing_weights(p.grid, p.r_c);
    const RealMatrix k = regularized_coulomb(p.grid, p.r_c, Separation::Open);
    for (int j = 0; j < 16; ++j) {
      double direct = 0.0;
      for (int i = 0; i < 16; ++i) direct += k(j, i) * w[((i - x0) % 16 + 16) % 16];
      direct *= -0.7 * 2.0;
      CHECK(spec.potential(j, x0) == doctest::Approx(direct).epsilon(1e-12));
    }
    // Far from the source the extra smearing is a small correction to -G m K_reg.
    CHECK(spec.potential(14, x0) == doctest::Approx(-0.7 * 2.0 * k(14, x0)).epsilon(0.01));
    CHECK(pure_potential_condition(spec.spec).residual <= 1e-10);
  }

  TEST_CASE("gravity generator agrees with the generic averaged feedback generator") {
    for (int particles : {1, 2}) {
      auto p = make_params(particles == 1 ? 16 : 8, 1.0, particles, 0.6, 1.0);
      if (particles == 2) p.constants.masses = {1.0, 1.8};
      const auto spec = dp_spec(p);
      const GravityGenerator gen(spec);
      Rng rng(3);
      const auto dim = static_cast<Eigen::Index>(p.grid.hilbert_dim());
      const Matrix rho = testing::random_density(rng, dim);
      CHECK(max_abs(gen(rho) - averaged_feedback_generator(rho, spec.spec)) <= 1e-10);
      CHECK(max_abs(gen(rho) - gen.potential_term(rho) - gen.measurement_term(rho) - gen.feedback_term(rho)) <
            1e-12);
    }
  }

  TEST_CASE("pair potential carries G/2 and reproduces -G m1 m2 / r") {
    // r_c well below the separations, so the smearing corrections (relative
    // size r_c^2 / r^2) stay far under the tolerance.
    auto p = make_params(32, 0.5, 2, 0.9, 0.25);
    p.constants.masses = {1.0, 2.5};
    const auto spec = build_feedback_spec(build_mass_measurement_spec(p, NoiseKernel::csl(p.grid, 1.0, 1.0)), p);
    const GravityGenerator gen(spec);
    const GridSpec& g = p.grid;
    const std::size_t far = g.config_index({g.cell_of(-6.0), g.cell_of(6.0)});
    const std::size_t near = g.config_index({g.cell_of(-3.0), g.cell_of(3.0)});
    const double dv = gen.pair_potential()[far] - gen.pair_potential()[near];
    const double direct = -0.9 * 1.0 * 2.5 * (1.0 / 12.0 - 1.0 / 6.0);
    CHECK(std::abs(dv / direct - 1.0) < 0.02);
    // The G (instead of G/2) mutation would double it.
    CHECK(std::abs(2.0 * dv / direct - 1.0) > 0.5);
    const Matrix term = gen.potential_term(coherence(g.hilbert_dim(), far, near));
    CHECK(std::abs(term(far, near) - (-kI * dv * 0.5)) < 1e-12);
  }

  TEST_CASE("decoherence rates: zero at zero separation, equal terms for the DP kernel") {
    const auto p = make_params(16, 1.0, 1, 0.4, 1.0);
    const auto spec = dp_spec(p);
    const DecoherenceRates same = decoherence_rates(spec, 5, 5);
    CHECK(same.measurement == 0.0);
    CHECK(same.feedback == 0.0);
    CHECK(same.total == 0.0);
    for (std::size_t b : {6u, 9u, 12u}) {
      const DecoherenceRates r = decoherence_rates(spec, 4, b);
      CHECK(r.measurement > 0.0);
      CHECK(std::abs(r.measurement / r.feedback - 1.0) <= 1e-9);
      CHECK(r.total == doctest::Approx(r.measurement + r.feedback));
    }
  }

  TEST_CASE("decoherence rates match the fitted decay of the averaged dynamics") {
    auto p = make_params(16, 1.0, 2, 0.5, 1.0);
    p.constants.masses = {1.0, 0.7};
    const auto spec = dp_spec(p);
    const GravityGenerator gen(spec);
    const std::size_t a = p.grid.config_index({5, 9}), b = p.grid.config_index({10, 7});
    const double rate = decoherence_rates(spec, a, b).total;
    const double T = 1.0 / rate;
    const ReferenceSeries s = reference_integrate(gen, coherence(p.grid.hilbert_dim(), a, b), T, T / 200, 20);
    double st = 0, sy = 0, stt = 0, sty = 0;
    const int n = static_cast<int>(s.times.size());
    for (int i = 0; i < n; ++i) {
      const double t = s.times[i], y = std::log(std::abs(s.states[i](a, b)));
      st += t;
      sy += y;
      stt += t * t;
      sty += t * y;
    }
    const double fitted = -(n * sty - st * sy) / (n * stt - st * st);
    CHECK(std::abs(fitted / rate - 1.0) < 0.01);
  }

  TEST_CASE("generator: linear, trace annihilating, Hermitian, CP on a 4-point lattice") {
    const auto p = make_params(4, 1.0, 1, 0.8, 1.0);
    const auto spec = dp_spec(p);
    const GravityGenerator gen(spec, build_free_hamiltonian(p.grid, p.constants));
    Rng rng(4);
    const Matrix a = testing::random_density(rng, 4), b = testing::random_density(rng, 4);
    CHECK(std::abs(gen(a).trace()) < 1e-10);
    CHECK(max_abs(gen(0.2 * a + 0.8 * b) - (0.2 * gen(a) + 0.8 * gen(b))) < 1e-10);
    CHECK(hermiticity_defect(gen(a)) < 1e-10);
    const Matrix flow = (0.05 * superoperator_matrix(gen, 4)).exp();
    const Matrix choi = choi_matrix(
        [&](const Matrix& m) {
          const Vector out = flow * Eigen::Map<const Vector>(m.data(), 16);
          return Matrix(Eigen::Map<const Matrix>(out.data(), 4, 4));
        },
        4);
    CHECK(min_eigenvalue(choi) >= -1e-10);
  }

  TEST_CASE("ill-conditioned kernels are refused") {
    const auto p = make_params(16, 0.25, 1, 1.0, 2.0);
    CHECK_THROWS_AS(NoiseKernel::dp(p.grid, p.constants, p.r_c), InvalidArgument);
  }

  TEST_CASE("halving dx changes the generator terms by at most 5%") {
    // Two particles, so the potential term holds a genuine pair interaction
    // (for one particle it is a constant self-energy). CSL noise: the DP
    // table is too ill-conditioned once dx < r_c.
    auto terms = [](int n, double dx) {
      auto p = make_params(n, dx, 2, 0.8, 1.0);
      p.constants.masses = {1.0, 1.5};
      const auto spec = build_feedback_spec(build_mass_measurement_spec(p, NoiseKernel::csl(p.grid, 1.0, 1.0)), p);
      const GravityGenerator gen(spec);
      const WaveFunction psi = WaveFunction::from_function(p.grid, [](const std::vector<double>& x) {
        const double a = std::exp(-std::pow(x[0] + 1.5, 2) / 4.0) + 0.7 * std::exp(-std::pow(x[0] - 1.5, 2) / 4.0);
        return Complex(a * std::exp(-std::pow(x[1] - 0.5, 2) / 4.0));
      });
      const Matrix rho = projector(psi.unit_vector());
      // Continuum kernels: divide matrix elements by the cell measure dx^2.
      const double cell = dx * dx;
      return std::vector<Matrix>{gen.potential_term(rho) / cell, gen.measurement_term(rho) / cell,
                                 gen.feedback_term(rho) / cell};
    };
    const auto coarse = terms(16, 0.5), fine = terms(32, 0.25);
    for (int t = 0; t < 3; ++t) {
      Matrix sub(256, 256);
      for (int a = 0; a < 256; ++a) {
        for (int b = 0; b < 256; ++b) {
          sub(a, b) = fine[t](64 * (a / 16) + 2 * (a % 16), 64 * (b / 16) + 2 * (b % 16));
        }
      }
      INFO("term " << t << ": " << max_abs(coarse[t] - sub) << " of " << max_abs(sub));
      CHECK(max_abs(coarse[t] - sub) <= 0.05 * max_abs(sub));
    }
  }
}
