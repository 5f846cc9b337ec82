#include "semigrav/master_equation.hpp"

#include <cmath>

namespace semigrav {

double trace_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument("trace_distance: dimension mismatch");
  }
  const Matrix d = a - b;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (d + d.adjoint()), Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  return trace_distance(a.matrix(), b.matrix());
}

ReferenceSeries reference_integrate(const Generator& generator, const Matrix& rho0, double T,
                                    double dt, int record_every) {
  if (!(T >= 0.0) || !(dt > 0.0) || record_every < 1) {
    throw InvalidArgument("reference_integrate: need T >= 0, dt > 0, record_every >= 1");
  }
  const long steps = std::lround(T / dt);
  if (std::abs(steps * dt - T) > 1e-9 * std::max(1.0, T)) {
    throw InvalidArgument("reference_integrate: T must be an integer multiple of dt");
  }
  ReferenceSeries out;
  Matrix rho = rho0;
  const Complex tr0 = rho0.trace();
  out.times.push_back(0.0);
  out.states.push_back(rho);
  for (long s = 1; s <= steps; ++s) {
    const Matrix k1 = generator(rho);
    const Matrix k2 = generator(rho + 0.5 * dt * k1);
    const Matrix k3 = generator(rho + 0.5 * dt * k2);
    const Matrix k4 = generator(rho + dt * k3);
    rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!rho.allFinite() || std::abs(rho.trace() - tr0) > 1e-8) {
      throw StepSizeError("reference integration lost the trace or diverged at t = " +
                          std::to_string(s * dt) + "; reduce dt");
    }
    if (s % record_every == 0 || s == steps) {
      out.times.push_back(s * dt);
      out.states.push_back(rho);
    }
  }
  return out;
}

Matrix integrate_to(const Generator& generator, const Matrix& rho0, double T, double dt) {
  const long steps = std::lround(T / dt);
  return reference_integrate(generator, rho0, T, dt, static_cast<int>(std::max(1L, steps))).states.back();
}

}  // namespace semigrav
