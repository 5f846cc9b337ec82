// Acceptance runner: one PASS/FAIL line per criterion, driven by the shipped
// presets. Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "semigrav/experiments.hpp"
#include "semigrav/flash.hpp"
#include "semigrav/kernel_lab.hpp"

using namespace semigrav;

namespace {

std::string preset(const std::string& name) { return std::string(SEMIGRAV_PRESET_DIR) + "/" + name; }

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(int n, const std::string& title, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << title << "  [" << o.detail
            << "; " << secs << " s]" << std::endl;
}

std::string str(std::ostringstream& s) { return s.str(); }

}  // namespace

int main() {
  const unsigned workers = default_worker_count();
  std::cout.precision(6);

  criterion(1, "r_G for proton and electron at lambda = 1e-16 /s within 3%", [] {
    const double proton = gravitational_radius_si(si::kProtonMass, 1e-16);
    const double electron = gravitational_radius_si(si::kElectronMass, 1e-16);
    const double ep = std::abs(proton / 1.8e-14 - 1.0), ee = std::abs(electron / 5.3e-21 - 1.0);
    std::ostringstream s;
    s << "proton " << proton << " m (" << 100 * ep << "%), electron " << electron << " m (" << 100 * ee << "%)";
    return Outcome{ep <= 0.03 && ee <= 0.03, str(s)};
  });

  criterion(2, "flash ensemble vs averaged generator: TD <= 0.05 at M=4000, exponent -0.5 +/- 0.15", [&] {
    const auto cfg = FlashEnsembleConfig::from_json(load_config(preset("flash_linearity.json"), "flash-ensemble"));
    const EnsembleRun run = run_flash_ensemble(cfg, workers);
    const bool shape = cfg.grid.points == 32 && cfg.grid.particles == 1 && cfg.trajectories == 4000 &&
                       std::abs(cfg.periods - 3.0) < 1e-12 &&
                       cfg.convergence_counts == std::vector<std::size_t>{250, 1000, 4000};
    std::ostringstream s;
    s << "TD " << run.final_trace_distance << ", TD(M) {";
    for (double d : run.convergence_distances) s << ' ' << d;
    s << " }, exponent " << (run.exponent ? *run.exponent : NAN);
    const bool ok = shape && run.final_trace_distance <= 0.05 && run.exponent &&
                    std::abs(*run.exponent + 0.5) <= 0.15;
    return Outcome{ok, str(s)};
  });

  criterion(3, "continuous ensemble (DP, N=16, M=2000) vs averaged generator: TD <= 0.07 at one decoherence time",
            [&] {
              const auto cfg =
                  ContinuousEnsembleConfig::from_json(load_config(preset("cm_linearity.json"), "cm-ensemble"));
              const EnsembleRun run = run_continuous_ensemble(cfg, workers);
              const bool shape = cfg.grid.points == 16 && cfg.kernel == "dp" && cfg.trajectories == 2000 &&
                                 std::abs(cfg.decoherence_times - 1.0) < 1e-12;
              std::ostringstream s;
              s << "TD " << run.final_trace_distance << " at T " << run.T;
              return Outcome{shape && run.final_trace_distance <= 0.07, str(s)};
            });

  criterion(4, "Ito composition: halving dt cuts the mean one-step defect by >= 2.5 over 100 draws", [] {
    const auto cfg = ItoConfig::from_json(load_config(preset("ito_composition.json"), "ito-composition"));
    const ItoRun r = run_ito_composition(cfg);
    std::ostringstream s;
    s << "ratio " << r.ratio << " (defects " << r.defect_dt << " -> " << r.defect_half << ")";
    return Outcome{cfg.draws == 100 && r.ratio >= 2.5, str(s)};
  });

  criterion(5, "kernel minimisation: argmin 1e-6, real-space DP match 0.5%, meas = feedback 1e-9", [] {
    const auto cfg = KernelMinConfig::from_json(load_config(preset("kernel_min.json"), "kernel-min"));
    const KernelMinRun run = run_kernel_min(cfg);
    double argmin = run.worst_argmin_error, equality = run.worst_equality_error;
    for (double k : {0.1, 1.0, 10.0}) {
      const ModeMinimum m = minimize_mode(k, cfg.units);
      argmin = std::max(argmin, std::abs(m.gamma_hat / analytic_argmin(k, cfg.units) - 1.0));
      equality = std::max(equality, std::abs(m.measurement / m.feedback - 1.0));
    }
    std::ostringstream s;
    s << "argmin " << argmin << ", real-space " << run.worst_realspace_error << " over [" << run.realspace.r_lo
      << ", " << run.realspace.r_hi << "], equality " << equality;
    return Outcome{argmin <= 1e-6 && run.worst_realspace_error <= 0.005 && equality <= 1e-9, str(s)};
  });

  criterion(6, "pair potential: d<p_rel>/dt within 2% of the direct oracle; G/2 -> G mutation caught", [] {
    bool ok = true;
    std::ostringstream s;
    for (const std::string model : {"continuous", "flash"}) {
      auto cfg = PairForceConfig::from_json(load_config(preset("pair_force_" + model + ".json"), "pair-force"));
      const PairForceRun good = run_pair_force(cfg);
      cfg.potential_factor = 2.0;
      const PairForceRun bad = run_pair_force(cfg);
      ok = ok && good.relative_error <= 0.02 && bad.relative_error > 0.02;
      s << model << " " << good.relative_error << " (mutant " << bad.relative_error << ") ";
    }
    return Outcome{ok, str(s)};
  });

  criterion(7, "no-signalling: flash and continuous <= 1e-6, SN >= 10x that bound", [] {
    const auto cfg = NoSignalConfig::from_json(load_config(preset("nosignal.json"), "nosignal"));
    const double flash = run_nosignal(NoSignallingModel::Flash, cfg).trace_distance;
    const double cont = run_nosignal(NoSignallingModel::Continuous, cfg).trace_distance;
    const double sn = run_nosignal(NoSignallingModel::SchroedingerNewton, cfg).trace_distance;
    std::ostringstream s;
    s << "flash " << flash << ", continuous " << cont << ", SN " << sn;
    return Outcome{flash <= 1e-6 && cont <= 1e-6 && sn >= 10.0 * 1e-6, str(s)};
  });

  criterion(8, "structural invariant suite", [] {
    const auto checks = structural_invariants();
    std::ostringstream s;
    int failed = 0;
    for (const auto& c : checks) {
      if (!c.pass) {
        ++failed;
        s << c.name << " = " << c.value << "; ";
      }
    }
    s << checks.size() - failed << "/" << checks.size() << " checks pass";
    return Outcome{failed == 0, str(s)};
  });

  return failures;
}
