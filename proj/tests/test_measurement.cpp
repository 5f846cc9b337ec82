#include <doctest.h>

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "helpers.hpp"
#include "semigrav/master_equation.hpp"
#include "semigrav/measurement.hpp"
#include "semigrav/operators.hpp"

using namespace semigrav;
using testing::max_abs;

namespace {

Matrix pauli_x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}
Matrix pauli_z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}
Matrix ket_projector(int i) {
  Matrix p = Matrix::Zero(2, 2);
  p(i, i) = 1.0;
  return p;
}
Matrix comm(const Matrix& a, const Matrix& b) { return a * b - b * a; }
Matrix anti(const Matrix& a, const Matrix& b) { return a * b + b * a; }

RealMatrix scalar(double g) { return RealMatrix::Constant(1, 1, g); }

ContinuousMeasurementSpec qubit_spec(const Matrix& o, const std::vector<Matrix>& k, double gamma, double dt,
                                     double hbar = 1.0) {
  return ContinuousMeasurementSpec::dense({o}, scalar(gamma), k, dt, hbar);
}

DiscretePovm random_povm(Rng& rng, Eigen::Index d, int outcomes) {
  DiscretePovm p;
  p.measurement = testing::random_kraus(rng, d, outcomes);
  return p;
}

}  // namespace

TEST_SUITE("measurement-core") {
  TEST_CASE("projective POVM on |0> always yields outcome 0") {
    DiscretePovm p{{ket_projector(0), ket_projector(1)}, {}};
    Rng rng(1);
    Vector psi = Vector::Zero(2);
    psi[0] = 1.0;
    for (int i = 0; i < 100; ++i) {
      const PovmOutcome o = povm_measure(psi, p, rng);
      CHECK(o.index == 0u);
      CHECK((o.state - psi).norm() < 1e-14);
    }
  }

  TEST_CASE("X feedback maps both branches of |+> to |0>") {
    DiscretePovm p{{ket_projector(0), ket_projector(1)}, {Matrix::Identity(2, 2), pauli_x()}};
    p.validate();
    Rng rng(2);
    Vector plus = Vector::Constant(2, 1.0 / std::sqrt(2.0));
    int counts[2] = {0, 0};
    for (int i = 0; i < 2000; ++i) {
      const PovmOutcome o = povm_measure(plus, p, rng);
      ++counts[o.index];
      CHECK(o.probability == doctest::Approx(0.5));
      CHECK(std::abs(o.state[0]) == doctest::Approx(1.0));
    }
    CHECK(std::abs(counts[0] - 1000) < 4 * std::sqrt(500.0));
    CHECK(max_abs(povm_average_channel(projector(plus), p) - ket_projector(0)) < 1e-15);
  }

  TEST_CASE("projectors without feedback fully dephase") {
    DiscretePovm p{{ket_projector(0), ket_projector(1)}, {}};
    Rng rng(3);
    const Matrix rho = testing::random_density(rng, 2);
    Matrix expect = rho;
    expect(0, 1) = expect(1, 0) = 0.0;
    CHECK(max_abs(povm_average_channel(rho, p) - expect) < 1e-15);
  }

  TEST_CASE("POVM validation rejects incomplete sets and non-unitary feedback") {
    DiscretePovm p{{ket_projector(0)}, {}};
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    DiscretePovm q{{ket_projector(0), ket_projector(1)}, {Matrix::Identity(2, 2), 2.0 * pauli_x()}};
    CHECK_THROWS_AS(q.validate(), InvalidArgument);
  }

  TEST_CASE("outcome frequencies of a random 3-outcome POVM follow p_k") {
    Rng rng(11);
    const DiscretePovm p = random_povm(rng, 4, 3);
    p.validate();
    const Vector psi = testing::random_state(rng, 4);
    std::vector<double> prob;
    for (const Matrix& n : p.measurement) prob.push_back((n * psi).squaredNorm());
    const int samples = 100000;
    std::vector<int> counts(3, 0);
    for (int i = 0; i < samples; ++i) ++counts[povm_measure(psi, p, rng).index];
    for (int k = 0; k < 3; ++k) {
      const double sigma = std::sqrt(samples * prob[k] * (1 - prob[k]));
      CHECK(std::abs(counts[k] - samples * prob[k]) < 4 * sigma);
    }
  }

  TEST_CASE("Monte Carlo average of POVM outcomes matches the averaged channel") {
    Rng rng(12);
    DiscretePovm p = random_povm(rng, 3, 4);
    for (int k = 0; k < 4; ++k) {
      p.feedback.push_back((kI * testing::random_hermitian(rng, 3)).exp());
    }
    p.validate();
    const Vector psi = testing::random_state(rng, 3);
    Matrix mean = Matrix::Zero(3, 3);
    const int runs = 10000;
    for (int i = 0; i < runs; ++i) mean += projector(povm_measure(psi, p, rng).state);
    mean /= runs;
    CHECK(trace_distance(mean, povm_average_channel(projector(psi), p)) <= 5.0 / std::sqrt(runs));
  }

  TEST_CASE("averaged POVM channel is linear, trace preserving and CP on dims 2..8") {
    Rng rng(13);
    for (int d = 2; d <= 8; ++d) {
      const DiscretePovm p = random_povm(rng, d, 3);
      const Matrix a = testing::random_density(rng, d), b = testing::random_density(rng, d);
      const Matrix mix = 0.3 * a + 0.7 * b;
      CHECK(max_abs(povm_average_channel(mix, p) -
                    (0.3 * povm_average_channel(a, p) + 0.7 * povm_average_channel(b, p))) < 1e-12);
      CHECK(std::abs(povm_average_channel(a, p).trace() - 1.0) < 1e-10);
      if (d <= 4) {
        const Matrix choi = choi_matrix([&](const Matrix& m) { return povm_average_channel(m, p); }, d);
        CHECK(min_eigenvalue(choi) >= -1e-10);
      }
    }
  }

  TEST_CASE("vanishing Gamma leaves the state unchanged") {
    // Back-action is of order sqrt(Gamma dt); with Gamma scaled to 1e-12 the
    // state moves by less than 1e-10 once dt <= 1e-10.
    Rng rng(4);
    const Matrix rho = testing::random_density(rng, 2);
    const auto tiny = qubit_spec(pauli_z(), {}, 1.0, 1e-10).with_scaled_correlation(1e-12);
    for (int i = 0; i < 20; ++i) CHECK(max_abs(continuous_measurement_step(rho, tiny, rng).rho - rho) < 1e-10);
    const auto coarse = qubit_spec(pauli_z(), {}, 1.0, 1e-3).with_scaled_correlation(1e-12);
    for (int i = 0; i < 20; ++i) {
      CHECK(max_abs(continuous_measurement_step(rho, coarse, rng).rho - rho) < 10.0 * std::sqrt(1e-12 * 1e-3));
    }
  }

  TEST_CASE("signal mean is <sigma_z> = 0 on |+>") {
    const double dt = 1e-3;
    const auto spec = qubit_spec(pauli_z(), {}, 1.0, dt);
    const Matrix plus = Matrix::Constant(2, 2, 0.5);
    Rng rng(5);
    const int n = 10000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += continuous_measurement_step(plus, spec, rng).signal.dR[0];
    // Var dR = dt / Gamma per step.
    CHECK(std::abs(sum) < 4.0 * std::sqrt(n * dt));
  }

  TEST_CASE("noise covariance is Gamma^{-1} dt") {
    RealMatrix gamma(2, 2);
    gamma << 2.0, 0.5, 0.5, 1.0;
    Rng rng(6);
    const auto spec = ContinuousMeasurementSpec::dense({pauli_z(), pauli_x()}, gamma, {}, 0.01);
    RealMatrix cov = RealMatrix::Zero(2, 2);
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const RealVector w = sample_noise(spec, rng);
      cov += w * w.transpose();
    }
    cov /= n * 0.01;
    const RealMatrix inv = gamma.inverse();
    // Sample covariance entries have relative spread about sqrt(2/n).
    CHECK((cov - inv).cwiseAbs().maxCoeff() < 6.0 * std::sqrt(2.0 / n) * inv.cwiseAbs().maxCoeff());
  }

  TEST_CASE("repeated sigma_z measurement collapses with Born frequencies") {
    const double gamma = 1.0, dt = 5e-4;
    const auto spec = qubit_spec(pauli_z(), {}, gamma, dt);
    const double p0 = 0.3;
    Vector psi0(2);
    psi0 << std::sqrt(p0), std::sqrt(1 - p0);
    const int trajectories = 2000, steps = 40000;
    int up = 0, undecided = 0;
    for (int t = 0; t < trajectories; ++t) {
      Rng rng = stream_rng(99, t);
      Vector psi = psi0;
      for (int s = 0; s < steps; ++s) psi = measurement_update(psi, spec, sample_noise(spec, rng));
      const double p = std::norm(psi[0]);
      if (p > 0.5) ++up;
      if (std::min(p, 1 - p) > 1e-3) ++undecided;
    }
    const double sigma = std::sqrt(trajectories * p0 * (1 - p0));
    CHECK(std::abs(up - trajectories * p0) < 4 * sigma);
    CHECK(undecided < trajectories / 100);
  }

  TEST_CASE("raw-signal update breaks the Born-rule martingale") {
    const double gamma = 1.0, dt = 5e-4;
    const auto spec = qubit_spec(pauli_z(), {}, gamma, dt);
    Vector psi0(2);
    psi0 << std::sqrt(0.3), std::sqrt(0.7);
    const int trajectories = 2000, steps = 2000;
    auto mean_population = [&](UpdateRule rule) {
      double sum = 0.0;
      for (int t = 0; t < trajectories; ++t) {
        Rng rng = stream_rng(7, t);
        Vector psi = psi0;
        for (int s = 0; s < steps; ++s) psi = measurement_update(psi, spec, sample_noise(spec, rng), rule);
        sum += std::norm(psi[0]);
      }
      return sum / trajectories;
    };
    // Binomial bound on the spread of the final population.
    const double sigma = std::sqrt(0.3 * 0.7 / trajectories);
    CHECK(std::abs(mean_population(UpdateRule::Kraus) - 0.3) < 4 * sigma);
    CHECK(std::abs(mean_population(UpdateRule::RawSignal) - 0.3) > 4 * sigma);
  }

  TEST_CASE("step-size guard trips on a coarse step") {
    const auto spec = qubit_spec(pauli_z(), {}, 1.0, 1.0);
    Rng rng(8);
    const Matrix plus = Matrix::Constant(2, 2, 0.5);
    RealVector dW(1);
    dW << 1.0;
    CHECK_THROWS_AS(measurement_update(plus, spec, dW), StepSizeError);
  }

  TEST_CASE("trajectory stays unit trace and positive") {
    Rng rng(9);
    const Matrix o1 = testing::random_hermitian(rng, 4), o2 = testing::random_hermitian(rng, 4);
    RealMatrix gamma(2, 2);
    gamma << 1.0, 0.2, 0.2, 0.5;
    const auto spec = ContinuousMeasurementSpec::dense({o1, o2}, gamma, {}, 1e-4);
    Matrix rho = testing::random_density(rng, 4);
    for (int s = 0; s < 500; ++s) {
      rho = continuous_measurement_step(rho, spec, rng).rho;
      CHECK(std::abs(rho.trace() - 1.0) < 1e-8);
      CHECK(min_eigenvalue(rho) >= -1e-8);
    }
  }

  TEST_CASE("feedback conjugation: trivial cases and the sigma_x rotation") {
    const double hbar = 0.7;
    const auto spec = qubit_spec(pauli_z(), {pauli_x()}, 1.0, 1e-3, hbar);
    Rng rng(10);
    const Matrix rho = testing::random_density(rng, 2);
    SignalIncrement zero{RealVector::Zero(1), RealVector::Zero(1)};
    CHECK(max_abs(feedback_conjugation_step(rho, zero, spec) - rho) < 1e-15);
    const auto nofb = qubit_spec(pauli_z(), {Matrix::Zero(2, 2)}, 1.0, 1e-3, hbar);
    SignalIncrement some{RealVector::Constant(1, 0.4), RealVector::Zero(1)};
    CHECK(max_abs(feedback_conjugation_step(rho, some, nofb) - rho) < 1e-15);

    for (double s : {0.05, 0.3, 1.1}) {
      SignalIncrement sig{RealVector::Constant(1, s), RealVector::Zero(1)};
      const Matrix out = feedback_conjugation_step(ket_projector(0), sig, spec);
      CHECK((out * pauli_z()).trace().real() == doctest::Approx(std::cos(2 * s / hbar)).epsilon(1e-12));
      CHECK(std::abs(out.trace() - 1.0) < 1e-14);
    }
  }

  TEST_CASE("without feedback the analytic step is the Euler-Maruyama measurement step") {
    Rng rng(14);
    const auto spec = ContinuousMeasurementSpec::dense({testing::random_hermitian(rng, 3)}, scalar(1.5), {}, 1e-4);
    const Matrix rho = testing::random_density(rng, 3);
    const FeedbackGenerator gen = analytic_feedback_generator(rho, spec);
    const Matrix o = spec.observable(0);
    CHECK(max_abs(gen.drift + 1.5 / 8.0 * comm(o, comm(o, rho))) < 1e-12);
    const RealVector dW = sample_noise(spec, rng);
    CHECK(max_abs(analytic_step(rho, gen, spec, dW) - measurement_update(rho, spec, dW, UpdateRule::EulerMaruyama)) <
          1e-12);
  }

  TEST_CASE("commuting qubit case: no potential term, combined dephasing") {
    const double gamma = 1.7, hbar = 0.8;
    const auto spec = qubit_spec(pauli_z(), {pauli_z()}, gamma, 1e-3, hbar);
    Rng rng(15);
    const Matrix rho = testing::random_density(rng, 2);
    const Matrix drift = analytic_feedback_generator(rho, spec).drift;
    // [sz,[sz,rho]] has off-diagonals 4 rho_01 and zero diagonal.
    const double rate = 4.0 * (gamma / 8.0 + 1.0 / (2.0 * gamma * hbar * hbar));
    CHECK(std::abs(drift(0, 0)) < 1e-14);
    CHECK(std::abs(drift(1, 1)) < 1e-14);
    CHECK(std::abs(drift(0, 1) + rate * rho(0, 1)) < 1e-12);
    CHECK(max_abs(averaged_feedback_generator(rho, spec) - drift) < 1e-12);
  }

  TEST_CASE("averaged generator without feedback is the double commutator") {
    Rng rng(16);
    const Matrix o = testing::random_hermitian(rng, 4);
    const auto spec = ContinuousMeasurementSpec::dense({o}, scalar(0.6), {}, 1e-3);
    const Matrix rho = testing::random_density(rng, 4);
    CHECK(max_abs(averaged_feedback_generator(rho, spec) + 0.6 / 8.0 * comm(o, comm(o, rho))) < 1e-12);
  }

  TEST_CASE("symmetric feedback reduces to a pure potential") {
    Rng rng(17);
    const double hbar = 1.3, c = 0.45;
    const Matrix o1 = testing::random_hermitian(rng, 3), o2 = testing::random_hermitian(rng, 3);
    RealMatrix gamma(2, 2);
    gamma << 1.0, 0.3, 0.3, 2.0;
    const auto spec = ContinuousMeasurementSpec::dense({o1, o2}, gamma, {c * o1, c * o2}, 1e-3, hbar);
    CHECK(pure_potential_condition(spec).holds);
    CHECK(pure_potential_condition(spec).residual < 1e-12);
    const Matrix rho = testing::random_density(rng, 3);
    const std::vector<Matrix> o{o1, o2}, k{c * o1, c * o2};
    const RealMatrix inv = gamma.inverse();
    Matrix dissipative = Matrix::Zero(3, 3), potential = Matrix::Zero(3, 3);
    for (int j = 0; j < 2; ++j) {
      potential += -kI / (4.0 * hbar) * comm(anti(o[j], k[j]), rho);
      for (int l = 0; l < 2; ++l) {
        dissipative += -gamma(j, l) / 8.0 * comm(o[j], comm(o[l], rho));
        dissipative += -inv(j, l) / (2.0 * hbar * hbar) * comm(k[j], comm(k[l], rho));
      }
    }
    CHECK(max_abs(averaged_feedback_generator(rho, spec) - dissipative - potential) < 1e-12);
  }

  TEST_CASE("pure potential condition fails for sigma_x feedback on sigma_z") {
    const auto spec = qubit_spec(pauli_z(), {pauli_x()}, 1.0, 1e-3);
    const PurePotentialCheck r = pure_potential_condition(spec);
    CHECK_FALSE(r.holds);
    CHECK(r.residual > 0.1);
  }

  TEST_CASE("averaged generator is trace annihilating, linear and generates CP maps") {
    Rng rng(18);
    const Matrix o = testing::random_hermitian(rng, 3), k = testing::random_hermitian(rng, 3);
    const auto spec = ContinuousMeasurementSpec::dense({o}, scalar(0.9), {k}, 1e-3);
    const Matrix a = testing::random_density(rng, 3), b = testing::random_density(rng, 3);
    const auto gen = [&](const Matrix& m) { return averaged_feedback_generator(m, spec); };
    CHECK(std::abs(gen(a).trace()) < 1e-10);
    CHECK(max_abs(gen(2.0 * a - b) - (2.0 * gen(a) - gen(b))) < 1e-12);
    const Matrix s = superoperator_matrix(gen, 3);
    const Matrix flow = (0.05 * s).exp();
    const Matrix choi = choi_matrix(
        [&](const Matrix& m) {
          const Vector out = flow * Eigen::Map<const Vector>(m.data(), 9);
          return Matrix(Eigen::Map<const Matrix>(out.data(), 3, 3));
        },
        3);
    CHECK(min_eigenvalue(choi) >= -1e-10);
  }

  TEST_CASE("feedback trajectories average to the averaged generator") {
    const double dt = 5e-4, T = 1.0;
    const auto spec = qubit_spec(pauli_z(), {pauli_x()}, 1.0, dt);
    Vector psi0(2);
    psi0 << std::sqrt(0.8), std::sqrt(0.2) * std::exp(kI * 0.4);
    const int trajectories = 4000, steps = static_cast<int>(std::lround(T / dt));
    Matrix mean = Matrix::Zero(2, 2);
    for (int t = 0; t < trajectories; ++t) {
      Rng rng = stream_rng(21, t);
      Vector psi = psi0;
      for (int s = 0; s < steps; ++s) psi = measure_and_feedback(psi, spec, rng);
      mean += projector(psi);
    }
    mean /= trajectories;
    const Matrix reference = integrate_to([&](const Matrix& m) { return averaged_feedback_generator(m, spec); },
                                          projector(psi0), T, 1e-3);
    CHECK(trace_distance(mean, reference) <= 0.05);
  }
}
