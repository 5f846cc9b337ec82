#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "helpers.hpp"
#include "semigrav/operators.hpp"

using namespace semigrav;
using testing::max_abs;

namespace {

GridSpec grid1(int n, double dx) {
  GridSpec g;
  g.points = n;
  g.spacing = dx;
  return g;
}

// Potential of a 3-D Gaussian density of per-axis variance s2 at distance r,
// by radial shell integration (Simpson). Independent of the erf closed form.
double gaussian_shell_potential(double r, double s2) {
  const double norm = std::pow(2.0 * std::numbers::pi * s2, -1.5);
  auto rho = [&](double u) { return norm * std::exp(-u * u / (2.0 * s2)); };
  auto simpson = [](auto f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
  };
  const double upper = 20.0 * std::sqrt(s2) + r;
  const double inner = r > 0 ? simpson([&](double u) { return rho(u) * u * u; }, 0.0, r, 4000) / r : 0.0;
  const double outer = simpson([&](double u) { return rho(u) * u; }, r, upper, 20000);
  return 4.0 * std::numbers::pi * (inner + outer);
}

}  // namespace

TEST_SUITE("core-hilbert") {
  TEST_CASE("two-point kinetic spectrum is {0, hbar^2 (pi/dx)^2 / 2m}") {
    const double dx = 0.7, m = 1.3, hbar = 0.9;
    const RealMatrix t = kinetic_matrix(2, dx, m, hbar);
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(t);
    const double top = hbar * hbar * std::pow(std::numbers::pi / dx, 2) / (2.0 * m);
    CHECK(es.eigenvalues()[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(es.eigenvalues()[1] == doctest::Approx(top).epsilon(1e-12));
  }

  TEST_CASE("kinetic term vanishes as m grows and a constant potential shifts the spectrum") {
    GridSpec g = grid1(8, 0.5);
    PhysicalConstants c;
    c.masses = {1e14};
    CHECK(max_abs(build_free_hamiltonian(g, c).dense()) < 1e-12);

    c.masses = {1.0};
    const Hamiltonian h0 = build_free_hamiltonian(g, c);
    const Hamiltonian h1 = build_hamiltonian(g, c, RealVector::Constant(8, 2.5));
    Eigen::SelfAdjointEigenSolver<Matrix> e0(h0.dense()), e1(h1.dense());
    CHECK((e1.eigenvalues() - e0.eigenvalues() - RealVector::Constant(8, 2.5)).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("Hamiltonian is Hermitian and apply matches dense for two particles") {
    GridSpec g = grid1(6, 0.8);
    g.particles = 2;
    PhysicalConstants c;
    c.masses = {1.0, 2.0};
    Rng rng(4);
    RealVector v(36);
    for (int i = 0; i < 36; ++i) v[i] = standard_normal(rng);
    const Hamiltonian h = build_hamiltonian(g, c, v);
    const Matrix d = h.dense();
    CHECK(hermiticity_defect(d) < 1e-12);
    const Vector psi = testing::random_state(rng, 36);
    CHECK((h.apply(psi) - d * psi).norm() < 1e-10);
  }

  TEST_CASE("propagate is unitary and agrees with the dense propagator") {
    GridSpec g = grid1(8, 0.5);
    PhysicalConstants c;
    Rng rng(2);
    RealVector v(8);
    for (int i = 0; i < 8; ++i) v[i] = uniform01(rng);
    const Hamiltonian h = build_hamiltonian(g, c, v);
    const Vector psi = testing::random_state(rng, 8);
    const Vector a = h.propagate(psi, 0.3, 1.0);
    CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((a - h.propagator(0.3, 1.0) * psi).norm() < 1e-10);
  }

  TEST_CASE("smearing a spike gives the normalised discrete Gaussian") {
    GridSpec g = grid1(32, 0.5);
    const double rc = 0.5;
    RealVector spike = RealVector::Zero(32);
    spike[16] = 1.0;
    const RealVector out = smear(spike, g, rc);
    double z = 0.0;
    for (int k = -16; k < 16; ++k) z += std::exp(-std::pow(k * 0.5, 2) / (2 * rc * rc));
    for (int i = 0; i < 32; ++i) {
      const double d = (i - 16) * 0.5;
      CHECK(out[i] == doctest::Approx(std::exp(-d * d / (2 * rc * rc)) / z).epsilon(1e-12));
    }
    CHECK(out.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("smear keeps constants, is linear, and is the identity for r_c << dx") {
    GridSpec g = grid1(16, 1.0);
    Rng rng(9);
    RealVector a(16), b(16);
    for (int i = 0; i < 16; ++i) {
      a[i] = standard_normal(rng);
      b[i] = standard_normal(rng);
    }
    CHECK((smear(RealVector::Constant(16, 3.0), g, 1.7) - RealVector::Constant(16, 3.0)).cwiseAbs().maxCoeff() <
          1e-12);
    CHECK((smear(2.0 * a - 0.5 * b, g, 1.3) - (2.0 * smear(a, g, 1.3) - 0.5 * smear(b, g, 1.3)))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    CHECK((smear(a, g, 0.01) - a).cwiseAbs().maxCoeff() < 1e-6);
    CHECK_THROWS_AS(smear(a, g, 0.0), InvalidArgument);
    CHECK_THROWS_AS(smear(a, g, -1.0), InvalidArgument);
  }

  TEST_CASE("regularised Coulomb matches the Gaussian shell integral and 1/r far out") {
    const double rc = 0.8;
    for (double r : {0.0, 0.3, 1.0, 2.5, 6.0}) {
      CHECK(regularized_coulomb_value(r, rc) ==
            doctest::Approx(gaussian_shell_potential(r, 2.0 * rc * rc)).epsilon(1e-7));
    }
    const double far = 20.0 * rc;
    CHECK(std::abs(regularized_coulomb_value(far, rc) * far - 1.0) < 0.01);
    CHECK(regularized_coulomb_value(0.0, rc) == doctest::Approx(1.0 / (std::sqrt(std::numbers::pi) * rc)));
  }

  TEST_CASE("Coulomb tables are symmetric, bounded by the diagonal, and open tables are PD") {
    GridSpec g = grid1(16, 1.0);
    for (auto sep : {Separation::Periodic, Separation::Open}) {
      const RealMatrix k = regularized_coulomb(g, 1.0, sep);
      CHECK((k - k.transpose()).cwiseAbs().maxCoeff() == 0.0);
      CHECK(k.maxCoeff() == doctest::Approx(k(0, 0)));
      CHECK(k(3, 3) == doctest::Approx(regularized_coulomb_value(0.0, 1.0)));
    }
    const RealMatrix open = regularized_coulomb(g, 1.0, Separation::Open);
    CHECK(Eigen::SelfAdjointEigenSolver<RealMatrix>(open).eigenvalues().minCoeff() > 0.0);
    const RealMatrix ring = regularized_coulomb(g, 1.0, Separation::Periodic);
    CHECK(ring(0, 15) == doctest::Approx(regularized_coulomb_value(1.0, 1.0)));
    CHECK(open(0, 15) == doctest::Approx(regularized_coulomb_value(15.0, 1.0)));
  }

  TEST_CASE("mass density integrates to the total mass on every configuration") {
    GridSpec g = grid1(8, 0.5);
    g.particles = 2;
    PhysicalConstants c;
    c.masses = {1.5, 0.25};
    const MassDensityField f = build_mass_density(g, c, 0.7);
    for (Eigen::Index a = 0; a < f.bare.cols(); ++a) {
      CHECK(f.bare.col(a).sum() * g.spacing == doctest::Approx(1.75));
      CHECK(f.smeared.col(a).sum() * g.spacing == doctest::Approx(1.75));
    }
  }

  TEST_CASE("expectations: identity, symmetric position, Gaussian width") {
    GridSpec g = grid1(64, 0.25);
    const WaveFunction psi = WaveFunction::gaussian(g, 0.0, 1.1);
    CHECK(psi.norm_squared() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(psi.unit_vector().norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(expectation(psi, Matrix::Identity(64, 64)).value.real() == doctest::Approx(1.0));
    const RealVector x = position_diagonal(g, 0);
    CHECK(std::abs(expectation_diagonal(psi, x)) < 1e-10);
    CHECK(expectation_diagonal(psi, x.cwiseProduct(x)) == doctest::Approx(1.21).epsilon(1e-6));
    const DensityMatrix rho = DensityMatrix::from_pure(psi);
    CHECK(expectation_diagonal(rho, x.cwiseProduct(x)) == doctest::Approx(1.21).epsilon(1e-6));
  }

  TEST_CASE("partial trace of a product and of a Bell state") {
    GridSpec g = grid1(4, 1.0);
    Rng rng(1);
    const WaveFunction a = WaveFunction::from_unit_vector(g, testing::random_state(rng, 4));
    const WaveFunction b = WaveFunction::from_unit_vector(g, testing::random_state(rng, 4));
    const DensityMatrix rho = DensityMatrix::from_pure(WaveFunction::product({a, b}));
    CHECK(max_abs(partial_trace(rho, {0}).matrix() - projector(a.unit_vector())) < 1e-12);
    CHECK(max_abs(partial_trace(rho, {1}).matrix() - projector(b.unit_vector())) < 1e-12);

    Vector bell = Vector::Zero(4);
    bell[0] = bell[3] = 1.0 / std::sqrt(2.0);
    CHECK(max_abs(partial_trace(projector(bell), {2, 2}, {0}) - 0.5 * Matrix::Identity(2, 2)) < 1e-12);
  }

  TEST_CASE("Schmidt spectra of both reduced states agree") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix rho = projector(testing::random_state(rng, 12));
      const Matrix ra = partial_trace(rho, {3, 4}, {0});
      const Matrix rb = partial_trace(rho, {3, 4}, {1});
      RealVector ea = Eigen::SelfAdjointEigenSolver<Matrix>(ra).eigenvalues();
      RealVector eb = Eigen::SelfAdjointEigenSolver<Matrix>(rb).eigenvalues();
      CHECK(std::abs(eb[0]) < 1e-12);
      CHECK((ea - eb.tail(3)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("partial trace is unchanged by a channel on the traced factor") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix rho = testing::random_density(rng, 6);
      const auto kraus = testing::random_kraus(rng, 2, 3);
      Matrix out = Matrix::Zero(6, 6);
      for (const Matrix& k : kraus) {
        Matrix big = Eigen::kroneckerProduct(Matrix::Identity(3, 3), k);
        out += big * rho * big.adjoint();
      }
      CHECK(max_abs(partial_trace(out, {3, 2}, {0}) - partial_trace(rho, {3, 2}, {0})) < 1e-12);
    }
  }

  TEST_CASE("grid validation") {
    GridSpec g = grid1(3, 1.0);
    CHECK_THROWS_AS(g.validate(), InvalidArgument);
    g = grid1(8, 0.0);
    CHECK_THROWS_AS(g.validate(), InvalidArgument);
    g = grid1(16, 1.0);
    g.particles = 4;
    CHECK_THROWS_AS(g.validate(), DimensionCapExceeded);
    try {
      g.validate();
    } catch (const DimensionCapExceeded& e) {
      CHECK(std::string(e.what()).find("65536") != std::string::npos);
    }
    g.particles = 3;
    CHECK_NOTHROW(g.validate());
    CHECK(g.hilbert_dim() == 4096u);
    CHECK(g.config_index(g.cells(1234)) == 1234u);
    CHECK(g.cell(1234, 0) == 1234 / 256);
  }
}
