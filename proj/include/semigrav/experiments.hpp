#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "semigrav/continuous_gravity.hpp"
#include "semigrav/ensemble.hpp"
#include "semigrav/flash.hpp"
#include "semigrav/kernel_lab.hpp"
#include "semigrav/master_equation.hpp"
#include "semigrav/nosignal.hpp"
#include "semigrav/schroedinger_newton.hpp"

// Experiment drivers shared by the command-line tool and the acceptance
// runner. Each experiment has a JSON config (see docs/formats.md) with a
// schema_version, an experiment name and fixed sections; unknown keys are
// rejected before anything runs.

namespace semigrav {

inline constexpr int kConfigSchemaVersion = 1;

/// Malformed or schema-violating experiment config.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parses a config file and checks schema_version and the experiment name.
nlohmann::json load_config(const std::string& path, const std::string& experiment);
/// Same for an in-memory document.
nlohmann::json check_config(const nlohmann::json& doc, const std::string& experiment);

/// Single-particle observables recorded by the ensemble experiments.
std::vector<Observable> position_observables(const GridSpec& grid, double hbar);

/// (|L> + |R>) / norm with Gaussian blobs at -/+ separation/2.
Vector two_blob_state(const GridSpec& grid, double separation, double width);

struct EnsembleRun {
  EnsembleResult result;
  ReferenceSeries reference;
  double T = 0.0;
  double final_trace_distance = 0.0;
  std::vector<std::size_t> convergence_counts;
  std::vector<double> convergence_distances;  // final trace distance per count
  std::optional<double> exponent;
};

struct FlashEnsembleConfig {
  GridSpec grid;
  PhysicalConstants constants;
  double r_c = 1.0;
  double rate = 1.0;
  bool include_self_kick = true;
  double separation = 6.0;
  double width = 0.7;
  double periods = 3.0;  // T = periods / rate
  double sample_dt = 0.5;
  double reference_dt = 0.005;
  std::size_t trajectories = 4000;
  std::uint64_t seed = 7;
  std::vector<std::size_t> convergence_counts;
  double max_trace_distance = 0.05;
  double exponent_target = -0.5;
  double exponent_tolerance = 0.15;

  static FlashEnsembleConfig from_json(const nlohmann::json& doc);
  FlashModelParams model_params() const;
};
EnsembleRun run_flash_ensemble(const FlashEnsembleConfig& config, unsigned workers);

struct ContinuousEnsembleConfig {
  GridSpec grid;
  PhysicalConstants constants;
  double r_c = 1.0;
  std::string kernel = "dp";  // dp | csl
  double csl_gamma = 1.0;
  double nucleon_mass = 1.0;
  double separation = 6.0;
  double width = 0.8;
  double dt = 0.005;
  double decoherence_times = 1.0;  // T in units of 1 / total rate between the blob centres
  int reference_substeps = 4;
  UpdateRule rule = UpdateRule::Kraus;
  std::size_t trajectories = 2000;
  std::uint64_t seed = 3;
  double max_trace_distance = 0.07;

  static ContinuousEnsembleConfig from_json(const nlohmann::json& doc);
  ContinuousGravityParams model_params() const;
  NoiseKernel noise_kernel() const;
};
EnsembleRun run_continuous_ensemble(const ContinuousEnsembleConfig& config, unsigned workers);

struct NoSignalConfig {
  NoSignallingSetup setup;
  double separation = 6.0;
  double width = 0.8;
  int bob_cell0 = 4;
  int bob_cell1 = 11;
  double linear_bound = 1e-6;
  double sn_factor = 10.0;
  std::optional<double> sn_regression;  // recorded SN distance

  static NoSignalConfig from_json(const nlohmann::json& doc);
  Vector initial_state() const;
};
NoSignallingResult run_nosignal(NoSignallingModel model, const NoSignalConfig& config);

struct SNEvolveConfig {
  SNParams params;
  double separation = 8.0;
  double width = 1.0;
  double T = 4.0;
  int record_every = 20;

  static SNEvolveConfig from_json(const nlohmann::json& doc);
};
struct SNEvolveRun {
  SNRecord run;
  SNRecord control;  // same state and grid with G = 0
};
SNEvolveRun run_sn_evolve(const SNEvolveConfig& config);

/// K_reg(|d - u|) averaged over u ~ N(0, s2), by trapezoidal quadrature.
double smoothed_coulomb(double d, double s2, double r_c);

struct PairForceConfig {
  std::string model = "continuous";  // continuous | flash
  GridSpec grid;                     // two particles
  PhysicalConstants constants;
  double r_c = 1.0;
  double rate = 1.0;
  double separation = 8.0;
  double width = 1.5;
  double window = 0.1;
  int steps = 5;
  /// Multiplies the model's pair-potential term. 1 is the model; 2 is the
  /// "prefactor G instead of G/2" mutation.
  double potential_factor = 1.0;
  double tolerance = 0.02;

  static PairForceConfig from_json(const nlohmann::json& doc);
};
struct PairForceRun {
  double model_rate;   // Delta <p_rel> / window under the averaged generator
  double oracle_rate;  // same under H0 plus the direct smoothed pair potential
  double relative_error;
};
/// Two Gaussian packets of equal mass at -/+ separation/2. The oracle pair
/// potential is -G m^2 smoothed_coulomb(x1 - x2, s2) with s2 = 2 r_c^2 for
/// the continuous model (both densities smeared) and r_c^2 / 2 for the flash
/// model (flash outcome spread around the source).
PairForceRun run_pair_force(const PairForceConfig& config);

struct ItoConfig {
  int dim = 3;
  int observables = 2;
  std::uint64_t operator_seed = 11;
  std::uint64_t noise_seed = 5;
  double dt = 2.5e-4;
  int draws = 100;
  double min_ratio = 2.5;

  static ItoConfig from_json(const nlohmann::json& doc);
};
struct ItoRun {
  double defect_dt;       // mean ||composed - analytic|| at dt
  double defect_half;     // same at dt / 2 with the same standard normals
  double ratio;
  double ratio_first_order;  // analytic step without second-order terms
};
/// Euler-Maruyama measurement followed by exact feedback conjugation,
/// compared pathwise with the Ito expansion of the composed step.
ItoRun run_ito_composition(const ItoConfig& config);

struct KernelMinConfig {
  KernelUnits units;
  double kmin = 0.1;
  double kmax = 10.0;
  int modes = 41;
  RealSpaceKernelOptions realspace;
  double argmin_tolerance = 1e-6;
  double realspace_tolerance = 0.005;
  double equality_tolerance = 1e-9;

  static KernelMinConfig from_json(const nlohmann::json& doc);
};
struct KernelMinRun {
  std::vector<KernelMinRow> table;
  RealSpaceKernel realspace;
  double worst_argmin_error;    // max |argmin / analytic - 1| over the table
  double worst_min_error;       // max |min / (16 pi G / hbar k^2) - 1|
  double worst_equality_error;  // max |measurement / feedback - 1| at the argmin
  double worst_realspace_error; // max |gamma_min / gamma_dp - 1| over the band
};
KernelMinRun run_kernel_min(const KernelMinConfig& config);

struct InvariantCheck {
  std::string name;
  double value;
  double threshold;
  bool pass;
};
/// Hermiticity, trace and positivity preservation, POVM completeness, CP via
/// Choi matrices on dimension 4, generator linearity and ensemble determinism.
std::vector<InvariantCheck> structural_invariants();

}  // namespace semigrav
