#include "semigrav/measurement.hpp"

#include <cmath>
#include <string>

namespace semigrav {

namespace {

constexpr double kStepGuard = 0.1;

Matrix commutator(const Matrix& a, const Matrix& b) { return a * b - b * a; }
Matrix anticommutator(const Matrix& a, const Matrix& b) { return a * b + b * a; }

void require_hermitian(const Matrix& m, const char* what) {
  if (hermiticity_defect(m) > 1e-10) {
    throw InvalidArgument(std::string(what) + " must be Hermitian within 1e-10");
  }
}

void require_state_dim(const ContinuousMeasurementSpec& spec, Eigen::Index rows) {
  if (rows != spec.dim()) throw InvalidArgument("state dimension does not match the measurement");
}

RealVector expectations(const Matrix& rho, const ContinuousMeasurementSpec& spec) {
  const int n = spec.count();
  RealVector e(n);
  if (spec.is_diagonal()) {
    e = spec.observable_diagonals() * rho.diagonal().real();
  } else {
    for (int j = 0; j < n; ++j) e[j] = (spec.observable(j) * rho).trace().real();
  }
  return e;
}

RealVector expectations(const Vector& psi, const ContinuousMeasurementSpec& spec) {
  const int n = spec.count();
  RealVector e(n);
  if (spec.is_diagonal()) {
    e = spec.observable_diagonals() * psi.cwiseAbs2();
  } else {
    for (int j = 0; j < n; ++j) e[j] = psi.dot(spec.observable(j) * psi).real();
  }
  return e;
}

// Diagonal of the measurement operator M for diagonal specs:
// m_a = 1 + 1/2 d_a^T Gamma dW - 1/8 d_a^T Gamma d_a dt, d_a = o_a - shift.
RealVector diagonal_kraus(const ContinuousMeasurementSpec& spec, const RealVector& shift,
                          const RealVector& dW) {
  const RealMatrix d = spec.observable_diagonals().colwise() - shift;  // n x dim
  const RealVector g_dw = spec.correlation() * dW;
  const RealMatrix gd = spec.correlation() * d;
  RealVector m(spec.dim());
  for (Eigen::Index a = 0; a < spec.dim(); ++a) {
    m[a] = 1.0 + 0.5 * d.col(a).dot(g_dw) - 0.125 * d.col(a).dot(gd.col(a)) * spec.dt();
  }
  return m;
}

Matrix dense_kraus(const ContinuousMeasurementSpec& spec, const RealVector& shift,
                   const RealVector& dW) {
  const int n = spec.count();
  const Eigen::Index dim = spec.dim();
  const Matrix id = Matrix::Identity(dim, dim);
  std::vector<Matrix> d(n);
  for (int j = 0; j < n; ++j) d[j] = spec.observable(j) - shift[j] * id;
  const RealVector g_dw = spec.correlation() * dW;
  Matrix m = id;
  for (int j = 0; j < n; ++j) {
    m += 0.5 * g_dw[j] * d[j];
    Matrix gd = Matrix::Zero(dim, dim);
    for (int k = 0; k < n; ++k) gd += spec.correlation()(j, k) * d[k];
    m -= 0.125 * spec.dt() * d[j] * gd;
  }
  return m;
}

// sum_jk Gamma_jk [O^j,[O^k,rho]] for dense specs.
Matrix dense_double_commutator(const std::vector<Matrix>& ops, const RealMatrix& weight,
                               const Matrix& rho) {
  const int n = static_cast<int>(ops.size());
  std::vector<Matrix> inner(n);
  for (int k = 0; k < n; ++k) inner[k] = commutator(ops[k], rho);
  Matrix out = Matrix::Zero(rho.rows(), rho.cols());
  for (int j = 0; j < n; ++j) {
    Matrix b = Matrix::Zero(rho.rows(), rho.cols());
    for (int k = 0; k < n; ++k) {
      if (weight(j, k) != 0.0) b += weight(j, k) * inner[k];
    }
    out += commutator(ops[j], b);
  }
  return out;
}

std::vector<Matrix> dense_list(const ContinuousMeasurementSpec& spec, bool feedback) {
  std::vector<Matrix> out(spec.count());
  for (int j = 0; j < spec.count(); ++j) out[j] = feedback ? spec.feedback(j) : spec.observable(j);
  return out;
}

void guard_update(double update_norm, double reference_norm) {
  if (!(update_norm < kStepGuard * reference_norm)) {
    throw StepSizeError("measurement update too large (relative " +
                        std::to_string(update_norm / reference_norm) +
                        " >= 0.1); reduce dt");
  }
}

}  // namespace

void DiscretePovm::validate(double tol) const {
  if (measurement.empty()) throw InvalidArgument("POVM needs at least one operator");
  const Eigen::Index dim = measurement.front().rows();
  Matrix sum = Matrix::Zero(dim, dim);
  for (const auto& n : measurement) {
    if (n.rows() != dim || n.cols() != dim) throw InvalidArgument("POVM operators must be square and equal-sized");
    sum += n.adjoint() * n;
  }
  if ((sum - Matrix::Identity(dim, dim)).cwiseAbs().maxCoeff() > tol) {
    throw InvalidArgument("POVM operators are not complete (sum N^dagger N != 1)");
  }
  if (!feedback.empty()) {
    if (feedback.size() != measurement.size()) {
      throw InvalidArgument("one feedback unitary per outcome is required");
    }
    for (const auto& u : feedback) {
      if (u.rows() != dim || u.cols() != dim) throw InvalidArgument("feedback unitary has wrong size");
      if ((u.adjoint() * u - Matrix::Identity(dim, dim)).cwiseAbs().maxCoeff() > tol) {
        throw InvalidArgument("feedback operator is not unitary");
      }
    }
  }
}

Matrix DiscretePovm::kraus(std::size_t k) const {
  return feedback.empty() ? measurement.at(k) : Matrix(feedback.at(k) * measurement.at(k));
}

PovmOutcome povm_measure(const Vector& psi, const DiscretePovm& povm, Rng& rng) {
  povm.validate();
  if (psi.size() != povm.measurement.front().rows()) {
    throw InvalidArgument("state dimension does not match the POVM");
  }
  std::vector<Vector> branches(povm.size());
  std::vector<double> p(povm.size());
  double total = 0.0;
  for (std::size_t k = 0; k < povm.size(); ++k) {
    branches[k] = povm.measurement[k] * psi;
    p[k] = branches[k].squaredNorm();
    total += p[k];
  }
  const double u = uniform01(rng) * total;
  std::size_t k = 0;
  double acc = p[0];
  while (k + 1 < povm.size() && u >= acc) acc += p[++k];
  if (p[k] < 1e-14) {
    throw DegenerateOutcome("sampled a POVM outcome with probability < 1e-14");
  }
  Vector out = branches[k] / std::sqrt(p[k]);
  if (!povm.feedback.empty()) out = povm.feedback[k] * out;
  return {k, p[k] / total, std::move(out)};
}

PovmWaveOutcome povm_measure(const WaveFunction& psi, const DiscretePovm& povm, Rng& rng) {
  auto r = povm_measure(psi.unit_vector(), povm, rng);
  return {r.index, r.probability, WaveFunction::from_unit_vector(psi.grid(), r.state)};
}

Matrix povm_average_channel(const Matrix& rho, const DiscretePovm& povm) {
  povm.validate();
  Matrix out = Matrix::Zero(rho.rows(), rho.cols());
  for (std::size_t k = 0; k < povm.size(); ++k) {
    const Matrix b = povm.kraus(k);
    out += b * rho * b.adjoint();
  }
  return out;
}

ContinuousMeasurementSpec ContinuousMeasurementSpec::dense(std::vector<Matrix> observables,
                                                           RealMatrix correlation,
                                                           std::vector<Matrix> feedback, double dt,
                                                           double hbar) {
  if (observables.empty()) throw InvalidArgument("at least one measured operator is required");
  ContinuousMeasurementSpec s;
  s.diagonal_ = false;
  s.dim_ = observables.front().rows();
  for (const auto& o : observables) {
    if (o.rows() != s.dim_ || o.cols() != s.dim_) throw InvalidArgument("measured operators must share one square shape");
    require_hermitian(o, "measured operator");
  }
  if (!feedback.empty()) {
    if (feedback.size() != observables.size()) throw InvalidArgument("one feedback operator per measured operator is required");
    for (const auto& k : feedback) {
      if (k.rows() != s.dim_ || k.cols() != s.dim_) throw InvalidArgument("feedback operator has wrong shape");
      require_hermitian(k, "feedback operator");
    }
  }
  s.observables_ = std::move(observables);
  s.feedback_ = std::move(feedback);
  s.has_feedback_ = !s.feedback_.empty();
  s.correlation_ = std::move(correlation);
  s.dt_ = dt;
  s.hbar_ = hbar;
  s.finalize();
  return s;
}

ContinuousMeasurementSpec ContinuousMeasurementSpec::diagonal(RealMatrix observables,
                                                              RealMatrix correlation,
                                                              RealMatrix feedback, double dt,
                                                              double hbar) {
  if (observables.rows() == 0) throw InvalidArgument("at least one measured operator is required");
  ContinuousMeasurementSpec s;
  s.diagonal_ = true;
  s.dim_ = observables.cols();
  if (feedback.size() != 0 &&
      (feedback.rows() != observables.rows() || feedback.cols() != observables.cols())) {
    throw InvalidArgument("feedback diagonals must match the measured diagonals in shape");
  }
  s.observable_diag_ = std::move(observables);
  s.has_feedback_ = feedback.size() != 0;
  s.feedback_diag_ = s.has_feedback_ ? std::move(feedback)
                                     : RealMatrix(RealMatrix::Zero(s.observable_diag_.rows(), s.dim_));
  s.correlation_ = std::move(correlation);
  s.dt_ = dt;
  s.hbar_ = hbar;
  s.finalize();
  return s;
}

void ContinuousMeasurementSpec::finalize() {
  const Eigen::Index n = diagonal_ ? observable_diag_.rows()
                                   : static_cast<Eigen::Index>(observables_.size());
  if (correlation_.rows() != n || correlation_.cols() != n) {
    throw InvalidArgument("correlation matrix must be n x n for n measured operators");
  }
  if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw InvalidArgument("dt must be positive");
  if (!(hbar_ > 0.0)) throw InvalidArgument("hbar must be positive");
  if ((correlation_ - correlation_.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvalidArgument("correlation matrix must be symmetric within 1e-12");
  }
  const RealMatrix sym = 0.5 * (correlation_ + correlation_.transpose());
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(sym);
  const RealVector& ev = es.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) {
    throw InvalidArgument("correlation matrix must be positive definite (min eigenvalue " +
                          std::to_string(ev.minCoeff()) + ")");
  }
  condition_ = ev.maxCoeff() / ev.minCoeff();
  const RealMatrix& v = es.eigenvectors();
  inverse_ = v * ev.cwiseInverse().asDiagonal() * v.transpose();
  inverse_ = 0.5 * (inverse_ + inverse_.transpose()).eval();
  // Symmetric square root of Gamma^{-1}; robust where a Cholesky of an
  // ill-conditioned inverse may lose definiteness.
  noise_factor_ = v * ev.cwiseInverse().cwiseSqrt().asDiagonal() * v.transpose();
  tables_ = std::make_shared<LazyTables>();
}

Matrix ContinuousMeasurementSpec::observable(int j) const {
  if (!diagonal_) return observables_.at(j);
  return observable_diag_.row(j).transpose().cast<Complex>().asDiagonal();
}

Matrix ContinuousMeasurementSpec::feedback(int j) const {
  if (!has_feedback_) return Matrix::Zero(dim_, dim_);
  if (!diagonal_) return feedback_.at(j);
  return feedback_diag_.row(j).transpose().cast<Complex>().asDiagonal();
}

const ContinuousMeasurementSpec::DiagonalTables& ContinuousMeasurementSpec::diagonal_tables() const {
  if (!diagonal_) throw InvalidArgument("diagonal tables exist only for diagonal specs");
  std::call_once(tables_->once, [this] {
    auto pair_form = [](const RealMatrix& x, const RealMatrix& w) {
      const RealMatrix g = x.transpose() * w * x;
      const RealVector q = g.diagonal();
      RealMatrix out = (-2.0 * g).colwise() + q;
      out.rowwise() += q.transpose();
      return out;
    };
    auto& t = tables_->tables;
    t.measurement = pair_form(observable_diag_, correlation_);
    t.feedback = pair_form(feedback_diag_, inverse_);
    const RealMatrix c = feedback_diag_.transpose() * observable_diag_;  // sum_j k^j_a o^j_b
    const RealVector s = c.diagonal();
    t.potential = c - c.transpose();
    t.potential.colwise() += s;
    t.potential.rowwise() -= s.transpose();
  });
  return tables_->tables;
}

ContinuousMeasurementSpec ContinuousMeasurementSpec::with_dt(double dt) const {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  ContinuousMeasurementSpec s = *this;
  s.dt_ = dt;
  return s;  // tables do not depend on dt and stay shared
}

ContinuousMeasurementSpec ContinuousMeasurementSpec::with_scaled_correlation(double factor) const {
  ContinuousMeasurementSpec s = *this;
  s.correlation_ = correlation_ * factor;
  s.finalize();
  return s;
}

ContinuousMeasurementSpec ContinuousMeasurementSpec::without_feedback() const {
  ContinuousMeasurementSpec s = *this;
  s.has_feedback_ = false;
  s.feedback_.clear();
  if (diagonal_) s.feedback_diag_.setZero();
  s.tables_ = std::make_shared<LazyTables>();
  return s;
}

RealVector sample_noise(const ContinuousMeasurementSpec& spec, Rng& rng) {
  RealVector z(spec.count());
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = standard_normal(rng);
  return std::sqrt(spec.dt()) * (spec.noise_factor() * z);
}

SignalIncrement make_signal(const Matrix& rho, const ContinuousMeasurementSpec& spec,
                            const RealVector& dW) {
  return {expectations(rho, spec) * spec.dt() + dW, dW};
}

SignalIncrement make_signal(const Vector& psi, const ContinuousMeasurementSpec& spec,
                            const RealVector& dW) {
  return {expectations(psi, spec) * spec.dt() + dW, dW};
}

Matrix measurement_update(const Matrix& rho, const ContinuousMeasurementSpec& spec,
                          const RealVector& dW, UpdateRule rule) {
  require_state_dim(spec, rho.rows());
  if (dW.size() != spec.count()) throw InvalidArgument("noise vector has wrong length");
  const RealVector mean = expectations(rho, spec);
  Matrix next;
  if (rule == UpdateRule::EulerMaruyama) {
    const RealVector g_dw = spec.correlation() * dW;
    if (spec.is_diagonal()) {
      const auto& t = spec.diagonal_tables();
      next = rho - (0.125 * spec.dt()) * t.measurement.cast<Complex>().cwiseProduct(rho);
      // 1/2 Gamma_jk dW^k (O^j rho + rho O^j - 2<O^j> rho) = (h_a + h_b) rho_ab / 2 with
      // h_a = sum_j (o^j_a - <O^j>) (Gamma dW)_j.
      const RealVector h = (spec.observable_diagonals().colwise() - mean).transpose() * g_dw;
      for (Eigen::Index b = 0; b < rho.cols(); ++b) {
        for (Eigen::Index a = 0; a < rho.rows(); ++a) next(a, b) += 0.5 * (h[a] + h[b]) * rho(a, b);
      }
    } else {
      const auto ops = dense_list(spec, false);
      next = rho - (0.125 * spec.dt()) * dense_double_commutator(ops, spec.correlation(), rho);
      for (int j = 0; j < spec.count(); ++j) {
        next += 0.5 * g_dw[j] * (anticommutator(ops[j], rho) - 2.0 * mean[j] * rho);
      }
    }
  } else {
    const RealVector shift = rule == UpdateRule::Kraus ? mean : RealVector(RealVector::Zero(spec.count()));
    if (spec.is_diagonal()) {
      const RealVector m = diagonal_kraus(spec, shift, dW);
      next = m.asDiagonal() * rho * m.asDiagonal();
    } else {
      const Matrix m = dense_kraus(spec, shift, dW);
      next = m * rho * m.adjoint();
    }
  }
  const Complex tr = next.trace();
  if (!(std::abs(tr) > 0.0)) throw DegenerateOutcome("measurement update annihilated the state");
  next /= tr.real();
  next = 0.5 * (next + next.adjoint()).eval();
  guard_update((next - rho).norm(), rho.norm());
  return next;
}

Vector measurement_update(const Vector& psi, const ContinuousMeasurementSpec& spec,
                          const RealVector& dW, UpdateRule rule) {
  require_state_dim(spec, psi.size());
  if (dW.size() != spec.count()) throw InvalidArgument("noise vector has wrong length");
  // On pure states the Euler-Maruyama and Kraus rules coincide: the update is
  // linear in psi before normalisation.
  const RealVector shift = rule == UpdateRule::RawSignal ? RealVector(RealVector::Zero(spec.count()))
                                                         : expectations(psi, spec);
  Vector next;
  if (spec.is_diagonal()) {
    next = diagonal_kraus(spec, shift, dW).cast<Complex>().cwiseProduct(psi);
  } else {
    next = dense_kraus(spec, shift, dW) * psi;
  }
  const double n = next.norm();
  if (!(n > 0.0)) throw DegenerateOutcome("measurement update annihilated the state");
  next /= n;
  guard_update((next - psi).norm(), psi.norm());
  return next;
}

ContinuousStep continuous_measurement_step(const Matrix& rho, const ContinuousMeasurementSpec& spec,
                                           Rng& rng, UpdateRule rule) {
  const RealVector dW = sample_noise(spec, rng);
  SignalIncrement signal = make_signal(rho, spec, dW);
  return {std::move(signal), measurement_update(rho, spec, dW, rule)};
}

Matrix feedback_conjugation_step(const Matrix& rho, const SignalIncrement& signal,
                                 const ContinuousMeasurementSpec& spec) {
  require_state_dim(spec, rho.rows());
  if (!spec.has_feedback()) return rho;
  if (spec.is_diagonal()) {
    const RealVector phase = spec.feedback_diagonals().transpose() * signal.dR / spec.hbar();
    Vector u(phase.size());
    for (Eigen::Index a = 0; a < phase.size(); ++a) u[a] = std::exp(-kI * phase[a]);
    return u.asDiagonal() * rho * u.conjugate().asDiagonal();
  }
  Matrix a = Matrix::Zero(spec.dim(), spec.dim());
  for (int j = 0; j < spec.count(); ++j) a += signal.dR[j] * spec.feedback(j);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.adjoint()));
  Vector phases(es.eigenvalues().size());
  for (Eigen::Index k = 0; k < phases.size(); ++k) {
    phases[k] = std::exp(-kI * es.eigenvalues()[k] / spec.hbar());
  }
  const Matrix u = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
  return u * rho * u.adjoint();
}

Vector feedback_conjugation_step(const Vector& psi, const SignalIncrement& signal,
                                 const ContinuousMeasurementSpec& spec) {
  require_state_dim(spec, psi.size());
  if (!spec.has_feedback()) return psi;
  if (spec.is_diagonal()) {
    const RealVector phase = spec.feedback_diagonals().transpose() * signal.dR / spec.hbar();
    Vector out = psi;
    for (Eigen::Index a = 0; a < phase.size(); ++a) out[a] *= std::exp(-kI * phase[a]);
    return out;
  }
  Matrix a = Matrix::Zero(spec.dim(), spec.dim());
  for (int j = 0; j < spec.count(); ++j) a += signal.dR[j] * spec.feedback(j);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.adjoint()));
  Vector coeff = es.eigenvectors().adjoint() * psi;
  for (Eigen::Index k = 0; k < coeff.size(); ++k) {
    coeff[k] *= std::exp(-kI * es.eigenvalues()[k] / spec.hbar());
  }
  return es.eigenvectors() * coeff;
}

Vector measure_and_feedback(const Vector& psi, const ContinuousMeasurementSpec& spec, Rng& rng,
                            UpdateRule rule) {
  const RealVector dW = sample_noise(spec, rng);
  const SignalIncrement signal = make_signal(psi, spec, dW);
  return feedback_conjugation_step(measurement_update(psi, spec, dW, rule), signal, spec);
}

FeedbackGenerator analytic_feedback_generator(const Matrix& rho,
                                              const ContinuousMeasurementSpec& spec,
                                              bool with_second_order) {
  require_state_dim(spec, rho.rows());
  const int n = spec.count();
  const double hbar = spec.hbar();
  const auto ops = dense_list(spec, false);
  const auto ks = dense_list(spec, true);
  const RealVector mean = expectations(rho, spec);
  const RealMatrix& gamma = spec.correlation();

  FeedbackGenerator gen;
  gen.drift = averaged_feedback_generator(rho, spec);

  std::vector<Matrix> h(n);
  for (int j = 0; j < n; ++j) h[j] = anticommutator(ops[j], rho) - 2.0 * mean[j] * rho;
  std::vector<Matrix> k_rho(n);
  for (int j = 0; j < n; ++j) k_rho[j] = commutator(ks[j], rho);

  gen.diffusion.resize(n);
  for (int k = 0; k < n; ++k) {
    Matrix d = Matrix::Zero(rho.rows(), rho.cols());
    for (int j = 0; j < n; ++j) d += 0.5 * gamma(j, k) * h[j];
    if (spec.has_feedback()) d += (-kI / hbar) * k_rho[k];
    gen.diffusion[k] = std::move(d);
  }

  if (with_second_order) {
    gen.second_order.assign(static_cast<std::size_t>(n) * n, Matrix::Zero(rho.rows(), rho.cols()));
    if (spec.has_feedback()) {
      for (int k = 0; k < n; ++k) {
        Matrix gh = Matrix::Zero(rho.rows(), rho.cols());
        for (int l = 0; l < n; ++l) gh += gamma(l, k) * h[l];
        for (int j = 0; j < n; ++j) {
          gen.second_order[j * n + k] = (-kI / (2.0 * hbar)) * commutator(ks[j], gh) -
                                        (0.5 / (hbar * hbar)) * commutator(ks[j], k_rho[k]);
        }
      }
    }
  }
  return gen;
}

Matrix analytic_step(const Matrix& rho, const FeedbackGenerator& gen,
                     const ContinuousMeasurementSpec& spec, const RealVector& dW) {
  const int n = spec.count();
  Matrix out = rho + gen.drift * spec.dt();
  for (int k = 0; k < n; ++k) out += dW[k] * gen.diffusion[k];
  if (!gen.second_order.empty()) {
    const RealMatrix& inv = spec.inverse_correlation();
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        out += (dW[j] * dW[k] - inv(j, k) * spec.dt()) * gen.second_order[j * n + k];
      }
    }
  }
  return out;
}

Matrix averaged_feedback_generator(const Matrix& rho, const ContinuousMeasurementSpec& spec) {
  require_state_dim(spec, rho.rows());
  const double hbar = spec.hbar();
  if (spec.is_diagonal()) {
    const auto& t = spec.diagonal_tables();
    Matrix out(rho.rows(), rho.cols());
    for (Eigen::Index b = 0; b < rho.cols(); ++b) {
      for (Eigen::Index a = 0; a < rho.rows(); ++a) {
        const Complex factor = Complex(-0.125 * t.measurement(a, b) -
                                           0.5 / (hbar * hbar) * t.feedback(a, b),
                                       -0.5 / hbar * t.potential(a, b));
        out(a, b) = factor * rho(a, b);
      }
    }
    return out;
  }
  const auto ops = dense_list(spec, false);
  Matrix out = -0.125 * dense_double_commutator(ops, spec.correlation(), rho);
  if (spec.has_feedback()) {
    const auto ks = dense_list(spec, true);
    for (int j = 0; j < spec.count(); ++j) {
      out += (-kI / (2.0 * hbar)) * commutator(ks[j], anticommutator(ops[j], rho));
    }
    out -= (0.5 / (hbar * hbar)) * dense_double_commutator(ks, spec.inverse_correlation(), rho);
  }
  return out;
}

PurePotentialCheck pure_potential_condition(const ContinuousMeasurementSpec& spec, double tol) {
  double residual = 0.0;
  if (spec.is_diagonal()) {
    // Both tensor products are diagonal with entries sum_j k^j_a o^j_b.
    const RealMatrix c = spec.feedback_diagonals().transpose() * spec.observable_diagonals();
    residual = (c - c.transpose()).cwiseAbs().maxCoeff();
  } else if (spec.has_feedback()) {
    // X = sum_j vec(K_j) vec(O^j)^T; the tensor residual is max |X - X'| with X'
    // the same construction with K and O swapped.
    const Eigen::Index dim = spec.dim();
    const Eigen::Index d2 = dim * dim;
    const int n = spec.count();
    Matrix kv(d2, n), ov(d2, n);
    for (int j = 0; j < n; ++j) {
      const Matrix k = spec.feedback(j);
      const Matrix o = spec.observable(j);
      kv.col(j) = Eigen::Map<const Vector>(k.data(), d2);
      ov.col(j) = Eigen::Map<const Vector>(o.data(), d2);
    }
    for (Eigen::Index c = 0; c < d2; ++c) {
      const Vector col = kv * ov.row(c).transpose() - ov * kv.row(c).transpose();
      residual = std::max(residual, col.cwiseAbs().maxCoeff());
    }
  }
  return {residual <= tol, residual};
}

}  // namespace semigrav
