#include "semigrav/ensemble.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <thread>

namespace semigrav {

namespace {

constexpr double kRhoScale = 1152921504606846976.0;  // 2^60
constexpr double kObsScale = 1099511627776.0;        // 2^40

__int128 to_fixed(double x, double scale) {
  const double v = std::nearbyint(x * scale);
  if (!std::isfinite(v) || std::abs(v) > 1e36) {
    throw std::overflow_error("ensemble accumulator overflow");
  }
  return static_cast<__int128>(v);
}

double from_fixed(__int128 v, double scale, std::size_t count) {
  return static_cast<double>(v) / scale / static_cast<double>(count);
}

std::size_t sample_count(const EnsembleSpec& spec) { return static_cast<std::size_t>(spec.samples) + 1; }

EnsembleSums empty_sums(const EnsembleSpec& spec) {
  const auto dim = static_cast<std::size_t>(spec.model->dim());
  const std::size_t s = sample_count(spec);
  EnsembleSums sums;
  sums.rho_re.assign(s * dim * dim, 0);
  sums.rho_im.assign(s * dim * dim, 0);
  sums.obs.assign(s * spec.observables.size(), 0);
  sums.obs_sq.assign(s * spec.observables.size(), 0);
  return sums;
}

void add_trajectory(const EnsembleSpec& spec, std::size_t index, EnsembleSums& sums) {
  Rng rng = stream_rng(spec.seed, index);
  std::vector<Vector> states;
  try {
    states = spec.model->run(rng, spec.sample_dt, spec.samples);
  } catch (const std::exception& e) {
    throw TrajectoryFailure(index, e.what());
  }
  if (states.size() != sample_count(spec)) throw TrajectoryFailure(index, "wrong number of samples");
  const auto dim = static_cast<std::size_t>(spec.model->dim());
  const std::size_t n_obs = spec.observables.size();
  for (std::size_t s = 0; s < states.size(); ++s) {
    const Vector& psi = states[s];
    const std::size_t base = s * dim * dim;
    for (std::size_t a = 0; a < dim; ++a) {
      for (std::size_t b = 0; b < dim; ++b) {
        const Complex v = psi[static_cast<Eigen::Index>(a)] * std::conj(psi[static_cast<Eigen::Index>(b)]);
        sums.rho_re[base + a * dim + b] += to_fixed(v.real(), kRhoScale);
        sums.rho_im[base + a * dim + b] += to_fixed(v.imag(), kRhoScale);
      }
    }
    for (std::size_t o = 0; o < n_obs; ++o) {
      const double x = psi.dot(spec.observables[o].op * psi).real();
      sums.obs[s * n_obs + o] += to_fixed(x, kObsScale);
      sums.obs_sq[s * n_obs + o] += to_fixed(x * x, kObsScale);
    }
  }
  ++sums.count;
}

}  // namespace

FlashTrajectoryModel::FlashTrajectoryModel(FlashModelParams params, Hamiltonian h0, Vector psi0)
    : params_(std::move(params)), h0_(std::move(h0)), psi0_(std::move(psi0)) {
  params_.validate();
  if (static_cast<std::size_t>(psi0_.size()) != params_.grid.hilbert_dim()) {
    throw InvalidArgument("initial state does not match the flash model grid");
  }
  psi0_ /= psi0_.norm();
}

std::vector<Vector> FlashTrajectoryModel::run(Rng& rng, double sample_dt, int samples) const {
  return evolve_flash_trajectory(psi0_, h0_, sample_dt * samples, sample_dt, params_, rng).states;
}

ContinuousTrajectoryModel::ContinuousTrajectoryModel(ContinuousMeasurementSpec spec,
                                                     std::optional<Hamiltonian> h0, Vector psi0,
                                                     UpdateRule rule)
    : spec_(std::move(spec)), psi0_(std::move(psi0)), rule_(rule) {
  if (psi0_.size() != spec_.dim()) throw InvalidArgument("initial state does not match the measurement");
  psi0_ /= psi0_.norm();
  if (h0) propagator_ = h0->propagator(spec_.dt(), spec_.hbar());
}

std::vector<Vector> ContinuousTrajectoryModel::run(Rng& rng, double sample_dt, int samples) const {
  const long per_sample = std::lround(sample_dt / spec_.dt());
  if (per_sample < 1 || std::abs(per_sample * spec_.dt() - sample_dt) > 1e-9 * sample_dt) {
    throw InvalidArgument("sample interval must be an integer multiple of the measurement dt");
  }
  std::vector<Vector> out;
  out.reserve(samples + 1);
  Vector psi = psi0_;
  out.push_back(psi);
  for (int s = 0; s < samples; ++s) {
    for (long k = 0; k < per_sample; ++k) {
      psi = measure_and_feedback(psi, spec_, rng, rule_);
      if (propagator_) psi = *propagator_ * psi;
    }
    psi /= psi.norm();
    out.push_back(psi);
  }
  return out;
}

void EnsembleSpec::validate() const {
  if (!model) throw InvalidArgument("ensemble needs a trajectory model");
  if (trajectories < 1) throw InvalidArgument("ensemble needs M >= 1 trajectories");
  if (!(sample_dt > 0.0) || samples < 0) throw InvalidArgument("sample times must be increasing");
  for (const auto& o : observables) {
    if (o.op.rows() != model->dim() || o.op.cols() != model->dim()) {
      throw InvalidArgument("observable '" + o.name + "' has the wrong dimension");
    }
  }
}

void EnsembleSums::merge(const EnsembleSums& other) {
  if (rho_re.size() != other.rho_re.size() || obs.size() != other.obs.size()) {
    throw InvalidArgument("cannot merge partial sums of different ensembles");
  }
  for (std::size_t i = 0; i < rho_re.size(); ++i) {
    rho_re[i] += other.rho_re[i];
    rho_im[i] += other.rho_im[i];
  }
  for (std::size_t i = 0; i < obs.size(); ++i) {
    obs[i] += other.obs[i];
    obs_sq[i] += other.obs_sq[i];
  }
  count += other.count;
}

EnsembleSums accumulate_trajectories(const EnsembleSpec& spec, std::size_t begin, std::size_t end) {
  spec.validate();
  EnsembleSums sums = empty_sums(spec);
  for (std::size_t i = begin; i < end; ++i) add_trajectory(spec, i, sums);
  return sums;
}

EnsembleResult finalize_ensemble(const EnsembleSpec& spec, const EnsembleSums& sums) {
  if (sums.count == 0) throw InvalidArgument("no trajectories accumulated");
  const auto dim = static_cast<std::size_t>(spec.model->dim());
  const std::size_t ns = sample_count(spec);
  const std::size_t n_obs = spec.observables.size();
  const std::size_t m = sums.count;
  EnsembleResult r;
  r.trajectories = m;
  r.seed = spec.seed;
  for (std::size_t s = 0; s < ns; ++s) {
    r.times.push_back(static_cast<double>(s) * spec.sample_dt);
    Matrix rho(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t a = 0; a < dim; ++a) {
      for (std::size_t b = 0; b < dim; ++b) {
        const std::size_t i = s * dim * dim + a * dim + b;
        rho(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
            Complex(from_fixed(sums.rho_re[i], kRhoScale, m), from_fixed(sums.rho_im[i], kRhoScale, m));
      }
    }
    r.rho_mean.push_back(0.5 * (rho + rho.adjoint()));
  }
  for (const auto& o : spec.observables) r.observable_names.push_back(o.name);
  r.observable_mean = RealMatrix::Zero(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(n_obs));
  r.observable_stderr = RealMatrix::Zero(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(n_obs));
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t o = 0; o < n_obs; ++o) {
      const double mean = from_fixed(sums.obs[s * n_obs + o], kObsScale, m);
      const double mean_sq = from_fixed(sums.obs_sq[s * n_obs + o], kObsScale, m);
      const auto row = static_cast<Eigen::Index>(s);
      const auto col = static_cast<Eigen::Index>(o);
      r.observable_mean(row, col) = mean;
      if (m > 1) {
        const double var = std::max(0.0, (mean_sq - mean * mean) * m / (m - 1.0));
        r.observable_stderr(row, col) = std::sqrt(var / m);
      }
    }
  }
  return r;
}

unsigned default_worker_count() {
  if (const char* env = std::getenv("SEMIGRAV_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

EnsembleResult run_ensemble(const EnsembleSpec& spec) {
  spec.validate();
  const unsigned workers = static_cast<unsigned>(
      std::min<std::size_t>(std::max(1u, spec.workers), spec.trajectories));
  std::vector<EnsembleSums> partial(workers, empty_sums(spec));
  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::optional<TrajectoryFailure> failure;

  auto work = [&](unsigned w) {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= spec.trajectories) return;
      try {
        add_trajectory(spec, i, partial[w]);
      } catch (const TrajectoryFailure& e) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        // Keep the lowest failing index so the report is deterministic.
        if (!failure || e.index() < failure->index()) failure.emplace(e);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure || i < failure->index()) failure.emplace(i, e.what());
      }
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  if (failure) throw *failure;

  EnsembleSums total = empty_sums(spec);
  for (const auto& p : partial) total.merge(p);
  return finalize_ensemble(spec, total);
}

void attach_reference(EnsembleResult& result, const std::vector<Matrix>& reference) {
  if (reference.size() != result.rho_mean.size()) {
    throw InvalidArgument("reference series length differs from the ensemble sample count");
  }
  result.trace_distance.clear();
  for (std::size_t s = 0; s < reference.size(); ++s) {
    result.trace_distance.push_back(trace_distance(result.rho_mean[s], reference[s]));
  }
}

double fit_convergence_exponent(const std::vector<double>& m, const std::vector<double>& d) {
  if (m.size() != d.size() || m.size() < 2) throw InvalidArgument("need at least two (M, distance) points");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!(m[i] > 0.0) || !(d[i] > 0.0)) throw InvalidArgument("counts and distances must be positive");
    const double x = std::log(m[i]), y = std::log(d[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

nlohmann::json to_json(const EnsembleResult& r) {
  nlohmann::json j;
  j["schema"] = "semigrav.ensemble/1";
  j["trajectories"] = r.trajectories;
  j["seed"] = r.seed;
  j["times"] = r.times;
  auto matrix_json = [](const Matrix& m) {
    nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
    for (Eigen::Index a = 0; a < m.rows(); ++a) {
      std::vector<double> rr, ii;
      for (Eigen::Index b = 0; b < m.cols(); ++b) {
        rr.push_back(m(a, b).real());
        ii.push_back(m(a, b).imag());
      }
      re.push_back(rr);
      im.push_back(ii);
    }
    return nlohmann::json{{"re", re}, {"im", im}};
  };
  j["rho_final"] = matrix_json(r.rho_mean.back());
  j["observables"] = nlohmann::json::array();
  for (std::size_t o = 0; o < r.observable_names.size(); ++o) {
    std::vector<double> mean, err;
    for (Eigen::Index s = 0; s < r.observable_mean.rows(); ++s) {
      mean.push_back(r.observable_mean(s, static_cast<Eigen::Index>(o)));
      err.push_back(r.observable_stderr(s, static_cast<Eigen::Index>(o)));
    }
    j["observables"].push_back({{"name", r.observable_names[o]}, {"mean", mean}, {"stderr", err}});
  }
  j["trace_distance"] = r.trace_distance;
  if (r.convergence_exponent) {
    j["convergence_exponent"] = *r.convergence_exponent;
  } else {
    j["convergence_exponent"] = nullptr;
  }
  return j;
}

std::string to_csv(const EnsembleResult& r) {
  std::ostringstream out;
  out.precision(17);
  out << "t,observable,mean,stderr\n";
  for (std::size_t s = 0; s < r.times.size(); ++s) {
    for (std::size_t o = 0; o < r.observable_names.size(); ++o) {
      out << r.times[s] << ',' << r.observable_names[o] << ','
          << r.observable_mean(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(o)) << ','
          << r.observable_stderr(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(o)) << '\n';
    }
  }
  return out.str();
}

}  // namespace semigrav
