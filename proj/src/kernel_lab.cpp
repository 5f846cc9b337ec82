#include "semigrav/kernel_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace semigrav {

namespace {

constexpr double kPi = std::numbers::pi;

void require_mode(double k) {
  if (!(k > 0.0) || !std::isfinite(k)) {
    throw InvalidArgument("wavenumber must be > 0 (the k = 0 mode is excluded by the infrared cutoff)");
  }
}

void require_units(const KernelUnits& u) {
  if (!(u.G >= 0.0) || !(u.hbar > 0.0)) throw InvalidArgument("need G >= 0 and hbar > 0");
}

// Composite Simpson on [a, b] with an even number of intervals.
template <class F>
double simpson(const F& f, double a, double b, int intervals) {
  if (intervals % 2) ++intervals;
  const double h = (b - a) / intervals;
  double s = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace

ModeTerms mode_terms(double k, double gamma_hat, const KernelUnits& units) {
  require_mode(k);
  require_units(units);
  if (!(gamma_hat > 0.0)) throw InvalidArgument("gamma_hat must be > 0");
  const double g = 4.0 * kPi * units.G / units.hbar;
  double fb = 4.0 * g * g / (k * k * k * k * gamma_hat);
  if (!std::isfinite(gamma_hat)) fb = 0.0;
  return {gamma_hat, fb};
}

double total_decoherence_mode(double k, double gamma_hat, const KernelUnits& units) {
  return mode_terms(k, gamma_hat, units).total();
}

double analytic_argmin(double k, const KernelUnits& units) {
  require_mode(k);
  return 8.0 * kPi * units.G / (units.hbar * k * k);
}

ModeMinimum minimize_mode(double k, const KernelUnits& units, double tolerance) {
  require_mode(k);
  require_units(units);
  if (!(units.G > 0.0)) throw InvalidArgument("the per-mode minimum needs G > 0");
  auto obj = [&](double u) { return total_decoherence_mode(k, std::exp(u), units); };

  // Bracket the minimum in log-space by stepping downhill from u = 0.
  double step = 1.0;
  double a = -step, b = step;
  int iterations = 0;
  while (obj(a) < obj(0.5 * (a + b)) && iterations < 200) {
    a -= step;
    step *= 2.0;
    ++iterations;
  }
  step = 1.0;
  while (obj(b) < obj(0.5 * (a + b)) && iterations < 400) {
    b += step;
    step *= 2.0;
    ++iterations;
  }

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = obj(c), fd = obj(d);
  while (b - a > tolerance && iterations < 1000) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = obj(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = obj(d);
    }
    ++iterations;
  }
  double u = 0.5 * (a + b);

  // Golden section stalls at the round-off floor of a flat minimum
  // (~sqrt(eps) in u). In log-space the objective's derivative is exactly
  // measurement - feedback, so a few Newton steps on that difference land on
  // the stationary point to machine precision.
  for (int i = 0; i < 8; ++i) {
    const ModeTerms t = mode_terms(k, std::exp(u), units);
    const double slope = t.measurement - t.feedback;
    const double curvature = t.measurement + t.feedback;
    const double du = slope / curvature;
    u -= du;
    ++iterations;
    if (std::abs(du) < 1e-15) break;
  }
  const ModeTerms t = mode_terms(k, std::exp(u), units);
  return {std::exp(u), t.total(), t.measurement, t.feedback, iterations};
}

std::vector<KernelMinRow> kernel_min_table(double kmin, double kmax, int modes,
                                           const KernelUnits& units) {
  require_mode(kmin);
  if (!(kmax > kmin)) throw InvalidArgument("need kmin < kmax");
  if (modes < 2) throw InvalidArgument("need at least two modes");
  std::vector<KernelMinRow> rows;
  rows.reserve(modes);
  const double la = std::log(kmin), lb = std::log(kmax);
  for (int i = 0; i < modes; ++i) {
    const double k = std::exp(la + (lb - la) * i / (modes - 1));
    const ModeMinimum m = minimize_mode(k, units);
    rows.push_back({k, m.gamma_hat, m.total, m.gamma_hat / analytic_argmin(k, units)});
  }
  return rows;
}

double radial_forward(const RadialFunction& f, double k, double rmax, int intervals) {
  require_mode(k);
  return 4.0 * kPi / k * simpson([&](double r) { return r * f(r) * std::sin(k * r); }, 0.0, rmax, intervals);
}

double radial_inverse(const RadialFunction& F, double r, double kmin, double kmax, int intervals) {
  if (!(r > 0.0)) throw InvalidArgument("radius must be > 0");
  if (!(kmin >= 0.0) || !(kmax > kmin)) throw InvalidArgument("need 0 <= kmin < kmax");
  return simpson([&](double k) { return k * F(k) * std::sin(k * r); }, kmin, kmax, intervals) /
         (2.0 * kPi * kPi * r);
}

RealSpaceKernel minimum_kernel_realspace(const KernelUnits& units,
                                         const RealSpaceKernelOptions& opt) {
  require_units(units);
  if (!(opt.box_length > 0.0) || !(opt.k_cutoff > 0.0) || opt.table_modes < 2 || opt.radii < 2) {
    throw InvalidArgument("invalid real-space kernel options");
  }
  RealSpaceKernel out;
  out.k_min = 2.0 * kPi / opt.box_length;
  out.r_lo = 5.0 / opt.k_cutoff;
  out.r_hi = 0.003 / out.k_min;
  if (!(out.r_hi > out.r_lo)) throw InvalidArgument("resolved band is empty; enlarge the box or the cutoff");

  // The taper makes everything above ~6 k_cutoff negligible.
  const double k_top = 6.0 * opt.k_cutoff;
  const auto table = kernel_min_table(out.k_min, k_top, opt.table_modes, units);
  std::vector<double> lk(table.size()), lg(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    lk[i] = std::log(table[i].k);
    lg[i] = std::log(table[i].gamma_hat_min);
  }
  auto gamma_hat = [&](double k) {
    const double x = std::log(k);
    std::size_t i = std::upper_bound(lk.begin(), lk.end(), x) - lk.begin();
    i = std::clamp<std::size_t>(i, 1, lk.size() - 1);
    const double w = (x - lk[i - 1]) / (lk[i] - lk[i - 1]);
    return std::exp(lg[i - 1] + w * (lg[i] - lg[i - 1]));
  };
  auto taper = [&](double k) { return std::exp(-(k / opt.k_cutoff) * (k / opt.k_cutoff)); };

  const double k_split = std::min(1.0, 0.5 * k_top);
  for (int i = 0; i < opt.radii; ++i) {
    const double r = out.r_lo * std::pow(out.r_hi / out.r_lo, static_cast<double>(i) / (opt.radii - 1));
    // Low band in log k (dk / k = ds keeps 1/k integrands smooth), high band uniform
    // with at least 20 points per oscillation.
    const double low = simpson(
        [&](double s) {
          const double k = std::exp(s);
          return k * k * gamma_hat(k) * taper(k) * std::sin(k * r);
        },
        std::log(out.k_min), std::log(k_split), 4000);
    const int n_high = std::max(4000, static_cast<int>(20.0 * (k_top - k_split) * r / (2.0 * kPi)) + 1);
    const double high = simpson(
        [&](double k) { return k * gamma_hat(k) * taper(k) * std::sin(k * r); }, k_split, k_top, n_high);
    const double g = (low + high) / (2.0 * kPi * kPi * r);
    out.r.push_back(r);
    out.gamma_min.push_back(g);
    out.gamma_dp.push_back(2.0 * units.G / (units.hbar * r));
    out.total_min.push_back(2.0 * g);
  }
  return out;
}

CslParameters csl_parameters(double gamma, double r_c, double nucleon_mass, const GridSpec* grid) {
  if (!(gamma > 0.0) || !(r_c > 0.0) || !(nucleon_mass > 0.0)) {
    throw InvalidArgument("CSL parameters must be positive");
  }
  CslParameters p{gamma / std::pow(4.0 * kPi * r_c * r_c, 1.5), std::nullopt};
  if (grid) p.kernel = NoiseKernel::csl(*grid, gamma, nucleon_mass);
  return p;
}

double csl_gamma_for_rate(double lambda, double r_c) {
  if (!(lambda > 0.0) || !(r_c > 0.0)) throw InvalidArgument("rate and r_c must be positive");
  return lambda * std::pow(4.0 * kPi * r_c * r_c, 1.5);
}

}  // namespace semigrav
