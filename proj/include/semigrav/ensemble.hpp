#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "semigrav/continuous_gravity.hpp"
#include "semigrav/flash.hpp"
#include "semigrav/master_equation.hpp"
#include "semigrav/measurement.hpp"
#include "semigrav/random.hpp"

#include <json.hpp>

// Deterministic Monte Carlo over independent trajectories. Partial sums are
// accumulated in 128-bit fixed point, so the reduction is exactly associative
// and results do not depend on the worker count or on scheduling.

namespace semigrav {

/// A stochastic unravelling that produces unit state vectors at the sample
/// times k * sample_dt, k = 0..samples.
class TrajectoryModel {
 public:
  virtual ~TrajectoryModel() = default;
  virtual Eigen::Index dim() const = 0;
  virtual std::string name() const = 0;
  virtual std::vector<Vector> run(Rng& rng, double sample_dt, int samples) const = 0;
};

class FlashTrajectoryModel : public TrajectoryModel {
 public:
  FlashTrajectoryModel(FlashModelParams params, Hamiltonian h0, Vector psi0);
  Eigen::Index dim() const override { return psi0_.size(); }
  std::string name() const override { return "flash"; }
  std::vector<Vector> run(Rng& rng, double sample_dt, int samples) const override;

 private:
  FlashModelParams params_;
  Hamiltonian h0_;
  Vector psi0_;
};

/// Lie splitting per step dt: measurement, feedback with the same signal,
/// then exact H0 propagation.
class ContinuousTrajectoryModel : public TrajectoryModel {
 public:
  ContinuousTrajectoryModel(ContinuousMeasurementSpec spec, std::optional<Hamiltonian> h0,
                            Vector psi0, UpdateRule rule = UpdateRule::Kraus);
  Eigen::Index dim() const override { return psi0_.size(); }
  std::string name() const override { return "continuous"; }
  std::vector<Vector> run(Rng& rng, double sample_dt, int samples) const override;

 private:
  ContinuousMeasurementSpec spec_;
  std::optional<Matrix> propagator_;
  Vector psi0_;
  UpdateRule rule_;
};

struct Observable {
  std::string name;
  Matrix op;  // Hermitian
};

struct EnsembleSpec {
  std::shared_ptr<const TrajectoryModel> model;
  std::size_t trajectories = 1;
  std::uint64_t seed = 0;
  double sample_dt = 1.0;
  int samples = 1;  // sample times k * sample_dt for k = 0..samples
  std::vector<Observable> observables;
  unsigned workers = 1;

  void validate() const;
};

struct EnsembleResult {
  std::vector<double> times;
  std::vector<Matrix> rho_mean;
  std::vector<std::string> observable_names;
  RealMatrix observable_mean;    // samples+1 x observables
  RealMatrix observable_stderr;  // standard error of the mean
  std::vector<double> trace_distance;  // to the reference, when attached
  std::optional<double> convergence_exponent;
  std::size_t trajectories = 0;
  std::uint64_t seed = 0;
};

/// A trajectory threw; carries its index.
class TrajectoryFailure : public std::runtime_error {
 public:
  TrajectoryFailure(std::size_t index, const std::string& what)
      : std::runtime_error("trajectory " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

/// Runs trajectories [begin, end) and returns their fixed-point partial sums.
/// Exposed so that merge associativity can be tested directly.
struct EnsembleSums {
  std::vector<__int128> rho_re, rho_im;  // per sample, row-major dim x dim
  std::vector<__int128> obs, obs_sq;     // per sample x observable
  std::size_t count = 0;

  void merge(const EnsembleSums& other);
  bool operator==(const EnsembleSums& other) const = default;
};
EnsembleSums accumulate_trajectories(const EnsembleSpec& spec, std::size_t begin, std::size_t end);
EnsembleResult finalize_ensemble(const EnsembleSpec& spec, const EnsembleSums& sums);

/// Worker pool over trajectory indices; spec.workers sets the pool size
/// (see default_worker_count()).
EnsembleResult run_ensemble(const EnsembleSpec& spec);

/// SEMIGRAV_WORKERS if set to a positive integer, else hardware concurrency.
unsigned default_worker_count();

/// Fills EnsembleResult::trace_distance against a reference series with the
/// same sample times.
void attach_reference(EnsembleResult& result, const std::vector<Matrix>& reference);

/// Least-squares slope of log(distance) against log(M).
double fit_convergence_exponent(const std::vector<double>& trajectory_counts,
                                const std::vector<double>& distances);

nlohmann::json to_json(const EnsembleResult& result);
/// Columns t, observable, mean, stderr.
std::string to_csv(const EnsembleResult& result);

}  // namespace semigrav
