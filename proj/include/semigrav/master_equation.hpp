#pragma once

#include <functional>
#include <vector>

#include "semigrav/state.hpp"
#include "semigrav/types.hpp"

namespace semigrav {

/// Linear, trace-annihilating map rho -> d rho / dt.
using Generator = std::function<Matrix(const Matrix&)>;

/// (1/2) ||a - b||_1 from the eigenvalues of the Hermitian difference.
double trace_distance(const Matrix& a, const Matrix& b);
double trace_distance(const DensityMatrix& a, const DensityMatrix& b);

struct ReferenceSeries {
  std::vector<double> times;
  std::vector<Matrix> states;
};

/// Classical RK4 from 0 to T with step dt, keeping every `record_every`-th
/// state (and always the endpoint). Throws StepSizeError if the trace drifts
/// by more than 1e-8 or the state stops being finite.
ReferenceSeries reference_integrate(const Generator& generator, const Matrix& rho0, double T,
                                    double dt, int record_every = 1);

/// Endpoint only.
Matrix integrate_to(const Generator& generator, const Matrix& rho0, double T, double dt);

}  // namespace semigrav
