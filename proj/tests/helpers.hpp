#pragma once

#include <vector>

#include <Eigen/QR>
#include <unsupported/Eigen/KroneckerProduct>

#include "semigrav/random.hpp"
#include "semigrav/state.hpp"
#include "semigrav/types.hpp"

namespace testing {

using namespace semigrav;

inline Matrix random_complex(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = Complex(standard_normal(rng), standard_normal(rng));
  }
  return a;
}

inline Matrix random_hermitian(Rng& rng, Eigen::Index d) {
  const Matrix a = random_complex(rng, d, d);
  return 0.5 * (a + a.adjoint());
}

inline Vector random_state(Rng& rng, Eigen::Index d) {
  Vector v = random_complex(rng, d, 1).col(0);
  return v / v.norm();
}

inline Matrix random_density(Rng& rng, Eigen::Index d) {
  const Matrix a = random_complex(rng, d, d);
  Matrix rho = a * a.adjoint();
  return rho / rho.trace();
}

/// Kraus operators of a random channel on dimension d (Stinespring isometry).
inline std::vector<Matrix> random_kraus(Rng& rng, Eigen::Index d, int count) {
  Eigen::HouseholderQR<Matrix> qr(random_complex(rng, d * count, d));
  const Matrix v = qr.householderQ() * Matrix::Identity(d * count, d);
  std::vector<Matrix> out;
  for (int k = 0; k < count; ++k) out.push_back(v.block(k * d, 0, d, d));
  return out;
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace testing
