#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "semigrav/continuous_gravity.hpp"
#include "semigrav/grid.hpp"

// Per-mode analysis of measurement-plus-feedback decoherence for a
// translation-invariant kernel, in the 3-D radial Fourier representation.

namespace semigrav {

struct KernelUnits {
  double G = 1.0;
  double hbar = 1.0;
};

struct ModeTerms {
  double measurement;  // Gamma_hat(k)
  double feedback;     // 4 (4 pi G / hbar)^2 / (k^4 Gamma_hat(k))
  double total() const { return measurement + feedback; }
};

ModeTerms mode_terms(double k, double gamma_hat, const KernelUnits& units);
/// Gamma_hat + 4 (4 pi G/hbar)^2 / (k^4 Gamma_hat). Rejects k <= 0.
double total_decoherence_mode(double k, double gamma_hat, const KernelUnits& units);

struct ModeMinimum {
  double gamma_hat;
  double total;
  double measurement;
  double feedback;
  int iterations;
};

/// Golden-section search on log(gamma_hat) to `tolerance`, followed by a
/// Newton polish of the stationarity condition measurement = feedback.
ModeMinimum minimize_mode(double k, const KernelUnits& units, double tolerance = 1e-10);

/// 8 pi G / (hbar k^2).
double analytic_argmin(double k, const KernelUnits& units);

struct KernelMinRow {
  double k;
  double gamma_hat_min;
  double total_min;
  double ratio;  // gamma_hat_min / analytic argmin
};
/// `modes` log-spaced wavenumbers in [kmin, kmax].
std::vector<KernelMinRow> kernel_min_table(double kmin, double kmax, int modes,
                                           const KernelUnits& units);

using RadialFunction = std::function<double(double)>;

/// F(k) = (4 pi / k) int_0^rmax r f(r) sin(k r) dr.
double radial_forward(const RadialFunction& f, double k, double rmax, int intervals = 2000);
/// f(r) = 1 / (2 pi^2 r) int_kmin^kmax k F(k) sin(k r) dk.
double radial_inverse(const RadialFunction& F, double r, double kmin, double kmax,
                      int intervals = 2000);

struct RealSpaceKernelOptions {
  double box_length = 1e4;    // infrared cutoff k_min = 2 pi / box_length
  double k_cutoff = 100.0;    // Gaussian taper exp(-(k / k_cutoff)^2)
  int table_modes = 400;      // tabulated minimised modes
  int radii = 60;             // log-spaced radii across the resolved band
};

struct RealSpaceKernel {
  std::vector<double> r;
  std::vector<double> gamma_min;       // numeric inverse transform of the per-mode argmin
  std::vector<double> gamma_dp;        // (2 G / hbar) / r
  std::vector<double> total_min;       // twice gamma_min
  double k_min = 0.0;
  double r_lo = 0.0;  // resolved band
  double r_hi = 0.0;
};

/// Tabulates the per-mode minimiser, interpolates it log-log and inverts the
/// radial transform on radii inside the resolved band
///   5 / k_cutoff <= r <= 0.003 / k_min
/// where the ultraviolet taper and the infrared cutoff each bias the result
/// by well under 0.5%.
RealSpaceKernel minimum_kernel_realspace(const KernelUnits& units,
                                         const RealSpaceKernelOptions& options = {});

struct CslParameters {
  double lambda;  // gamma / (4 pi r_c^2)^{3/2}
  std::optional<NoiseKernel> kernel;
};
CslParameters csl_parameters(double gamma, double r_c, double nucleon_mass,
                             const GridSpec* grid = nullptr);
/// Inverse of the rate relation: gamma = lambda (4 pi r_c^2)^{3/2}.
double csl_gamma_for_rate(double lambda, double r_c);

}  // namespace semigrav
