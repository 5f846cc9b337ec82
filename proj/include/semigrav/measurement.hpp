#pragma once

#include <memory>
#include <mutex>
#include <vector>

#include "semigrav/random.hpp"
#include "semigrav/state.hpp"
#include "semigrav/types.hpp"

// Measurement-plus-feedback primitives. Everything here works on raw
// configuration-space matrices: density matrices have unit matrix trace and
// pure states are unit-norm coefficient vectors.

namespace semigrav {

/// Generalised measurement with optional outcome-dependent feedback unitaries.
struct DiscretePovm {
  std::vector<Matrix> measurement;  // N_k
  std::vector<Matrix> feedback;     // U_k; empty means identity for every k

  /// sum_k N_k^dagger N_k = 1 and U_k unitary, both within `tol`.
  void validate(double tol = 1e-10) const;
  /// B_k = U_k N_k.
  Matrix kraus(std::size_t k) const;
  std::size_t size() const { return measurement.size(); }
};

struct PovmOutcome {
  std::size_t index;
  double probability;
  Vector state;
};

/// Samples k with p_k = <psi|N_k^dagger N_k|psi> and returns U_k N_k psi / sqrt(p_k).
PovmOutcome povm_measure(const Vector& psi, const DiscretePovm& povm, Rng& rng);
struct PovmWaveOutcome {
  std::size_t index;
  double probability;
  WaveFunction state;
};
PovmWaveOutcome povm_measure(const WaveFunction& psi, const DiscretePovm& povm, Rng& rng);
/// sum_k B_k rho B_k^dagger.
Matrix povm_average_channel(const Matrix& rho, const DiscretePovm& povm);

/// Simultaneous diffusive measurement of n Hermitian operators with real
/// symmetric positive-definite correlation matrix Gamma and optional
/// signal feedback through Hermitian K_j. Operators are stored either densely
/// or, when they are all diagonal in the configuration basis, as rows of an
/// n x dim matrix.
class ContinuousMeasurementSpec {
 public:
  static ContinuousMeasurementSpec dense(std::vector<Matrix> observables, RealMatrix correlation,
                                         std::vector<Matrix> feedback, double dt,
                                         double hbar = 1.0);
  static ContinuousMeasurementSpec diagonal(RealMatrix observables, RealMatrix correlation,
                                            RealMatrix feedback, double dt, double hbar = 1.0);

  int count() const { return static_cast<int>(correlation_.rows()); }
  Eigen::Index dim() const { return dim_; }
  bool is_diagonal() const { return diagonal_; }
  bool has_feedback() const { return has_feedback_; }
  double dt() const { return dt_; }
  double hbar() const { return hbar_; }

  const RealMatrix& correlation() const { return correlation_; }
  const RealMatrix& inverse_correlation() const { return inverse_; }
  /// L with L L^T = Gamma^{-1}; dW = sqrt(dt) L z.
  const RealMatrix& noise_factor() const { return noise_factor_; }
  double condition_number() const { return condition_; }

  Matrix observable(int j) const;
  Matrix feedback(int j) const;
  /// Only for diagonal specs: row j holds diag(O^j) / diag(K_j).
  const RealMatrix& observable_diagonals() const { return observable_diag_; }
  const RealMatrix& feedback_diagonals() const { return feedback_diag_; }

  /// Elementwise generator factors for diagonal specs, so that each averaged
  /// term acts as a Hadamard product on rho:
  ///   measurement_ab = (o_a - o_b)^T Gamma (o_a - o_b)
  ///   feedback_ab    = (k_a - k_b)^T Gamma^{-1} (k_a - k_b)
  ///   potential_ab   = sum_j (k^j_a - k^j_b)(o^j_a + o^j_b)
  struct DiagonalTables {
    RealMatrix measurement;
    RealMatrix feedback;
    RealMatrix potential;
  };
  const DiagonalTables& diagonal_tables() const;

  ContinuousMeasurementSpec with_dt(double dt) const;
  /// Same measurement with the correlation matrix multiplied by `factor`.
  ContinuousMeasurementSpec with_scaled_correlation(double factor) const;
  ContinuousMeasurementSpec without_feedback() const;

 private:
  ContinuousMeasurementSpec() = default;
  void finalize();

  bool diagonal_ = false;
  bool has_feedback_ = false;
  Eigen::Index dim_ = 0;
  double dt_ = 0.0;
  double hbar_ = 1.0;
  std::vector<Matrix> observables_;
  std::vector<Matrix> feedback_;
  RealMatrix observable_diag_;
  RealMatrix feedback_diag_;
  RealMatrix correlation_;
  RealMatrix inverse_;
  RealMatrix noise_factor_;
  double condition_ = 0.0;

  struct LazyTables {
    std::once_flag once;
    DiagonalTables tables;
  };
  std::shared_ptr<LazyTables> tables_ = std::make_shared<LazyTables>();
};

struct SignalIncrement {
  RealVector dR;  // <O^j> dt + dW^j
  RealVector dW;
};

enum class UpdateRule {
  /// rho -> M rho M^dagger / tr, M = 1 + 1/2 Gamma_jk dO^j dW^k - 1/8 Gamma_jk dO^j dO^k dt,
  /// dO = O - <O>. Positivity preserving.
  Kraus,
  /// rho + drift dt + 1/2 Gamma_jk (O^j rho + rho O^j - 2<O^j> rho) dW^k.
  EulerMaruyama,
  /// Kraus form built from the raw O instead of O - <O>: drops the nonlinear
  /// state-dependent shift. Kept only to show that it breaks ensemble
  /// linearity.
  RawSignal,
};

/// dW ~ N(0, Gamma^{-1} dt).
RealVector sample_noise(const ContinuousMeasurementSpec& spec, Rng& rng);

/// Measurement back-action for a given noise draw. Throws StepSizeError when
/// ||update||_F >= 0.1 ||rho||_F.
Matrix measurement_update(const Matrix& rho, const ContinuousMeasurementSpec& spec,
                          const RealVector& dW, UpdateRule rule = UpdateRule::Kraus);
/// Pure-state form of the Kraus rule (psi -> M psi / ||M psi||).
Vector measurement_update(const Vector& psi, const ContinuousMeasurementSpec& spec,
                          const RealVector& dW, UpdateRule rule = UpdateRule::Kraus);

/// Signal for the pre-update state: dR^j = <O^j> dt + dW^j.
SignalIncrement make_signal(const Matrix& rho, const ContinuousMeasurementSpec& spec,
                            const RealVector& dW);
SignalIncrement make_signal(const Vector& psi, const ContinuousMeasurementSpec& spec,
                            const RealVector& dW);

struct ContinuousStep {
  SignalIncrement signal;
  Matrix rho;
};
ContinuousStep continuous_measurement_step(const Matrix& rho, const ContinuousMeasurementSpec& spec,
                                           Rng& rng, UpdateRule rule = UpdateRule::Kraus);

/// exp(-i K_j dR^j / hbar) rho exp(+i K_j dR^j / hbar).
Matrix feedback_conjugation_step(const Matrix& rho, const SignalIncrement& signal,
                                 const ContinuousMeasurementSpec& spec);
Vector feedback_conjugation_step(const Vector& psi, const SignalIncrement& signal,
                                 const ContinuousMeasurementSpec& spec);

/// Measurement followed by feedback with the same signal, as one trajectory step.
Vector measure_and_feedback(const Vector& psi, const ContinuousMeasurementSpec& spec, Rng& rng,
                            UpdateRule rule = UpdateRule::Kraus);

/// Ito expansion of the composed measurement+feedback step:
///   d rho = drift dt + diffusion_k dW^k + second_order_jk (dW^j dW^k - Gamma^{-1}_jk dt) + O(dt^3/2)
/// The second-order coefficients have zero mean contribution; they are what
/// makes a pathwise comparison against the composed step converge at dt^3/2.
struct FeedbackGenerator {
  Matrix drift;
  std::vector<Matrix> diffusion;
  std::vector<Matrix> second_order;  // row-major n x n, empty unless requested

  const Matrix& coefficient(int j, int k, int n) const { return second_order[j * n + k]; }
};
FeedbackGenerator analytic_feedback_generator(const Matrix& rho,
                                              const ContinuousMeasurementSpec& spec,
                                              bool with_second_order = false);
/// rho + drift dt + diffusion . dW (+ second-order terms when present).
Matrix analytic_step(const Matrix& rho, const FeedbackGenerator& gen,
                     const ContinuousMeasurementSpec& spec, const RealVector& dW);

/// d rho_bar / dt = -i/(2 hbar) [K_j, {O^j, rho}] - Gamma_jk/8 [O^j,[O^k,rho]]
///                  - Gamma^{-1}_jk/(2 hbar^2) [K_j,[K_k,rho]].
Matrix averaged_feedback_generator(const Matrix& rho, const ContinuousMeasurementSpec& spec);

struct PurePotentialCheck {
  bool holds;
  double residual;  // max |sum_j (K_j (x) O^j - O^j (x) K_j)|
};
PurePotentialCheck pure_potential_condition(const ContinuousMeasurementSpec& spec,
                                            double tol = 1e-10);

/// Choi matrix sum_ij |i><j| (x) Phi(|i><j|) of a linear map on dim x dim matrices.
template <class Map>
Matrix choi_matrix(const Map& phi, Eigen::Index dim) {
  Matrix choi = Matrix::Zero(dim * dim, dim * dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      Matrix e = Matrix::Zero(dim, dim);
      e(i, j) = 1.0;
      choi.block(i * dim, j * dim, dim, dim) = phi(e);
    }
  }
  return choi;
}

/// Matrix of a linear superoperator in column-stacking convention.
template <class Map>
Matrix superoperator_matrix(const Map& phi, Eigen::Index dim) {
  Matrix s(dim * dim, dim * dim);
  for (Eigen::Index c = 0; c < dim * dim; ++c) {
    Matrix e = Matrix::Zero(dim, dim);
    e(c % dim, c / dim) = 1.0;
    const Matrix out = phi(e);
    s.col(c) = Eigen::Map<const Vector>(out.data(), dim * dim);
  }
  return s;
}

}  // namespace semigrav
