#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "semigrav/experiments.hpp"
#include "semigrav/flash.hpp"
#include "semigrav/kernel_lab.hpp"

// Exit codes: 0 success, 1 runtime failure, 2 usage or config error,
// 3 assertion breach (only with --assert).

namespace fs = std::filesystem;
using nlohmann::json;
using namespace semigrav;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitAssert = 3;

struct AssertionBreach : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(bool ok, const std::string& what) {
  if (!ok) throw AssertionBreach(what);
}

class Output {
 public:
  explicit Output(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) fs::create_directories(dir_);
  }
  void write(const std::string& name, const std::string& content) const {
    if (dir_.empty()) return;
    std::ofstream f(fs::path(dir_) / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (fs::path(dir_) / name).string());
    f << content;
  }
  void write_json(const std::string& name, const json& j) const { write(name, j.dump(2) + "\n"); }

 private:
  std::string dir_;
};

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

json matrix_json(const Matrix& m) {
  json re = json::array(), im = json::array();
  for (Eigen::Index a = 0; a < m.rows(); ++a) {
    std::vector<double> rr, ii;
    for (Eigen::Index b = 0; b < m.cols(); ++b) {
      rr.push_back(m(a, b).real());
      ii.push_back(m(a, b).imag());
    }
    re.push_back(rr);
    im.push_back(ii);
  }
  return {{"re", re}, {"im", im}};
}

// Ensemble outputs shared by flash-ensemble and cm-ensemble.
void write_ensemble(const Output& out, const std::string& experiment, const EnsembleRun& run,
                    const GridSpec& grid, double hbar) {
  json j = to_json(run.result);
  j["experiment"] = experiment;
  j["T"] = run.T;
  j["final_trace_distance"] = run.final_trace_distance;
  j["convergence"] = {{"trajectories", run.convergence_counts},
                      {"trace_distance", run.convergence_distances}};
  out.write_json("ensemble.json", j);
  out.write("ensemble.csv", to_csv(run.result));
  std::ostringstream ref;
  ref.precision(17);
  ref << "t,observable,value\n";
  const auto obs = position_observables(grid, hbar);
  for (std::size_t s = 0; s < run.reference.times.size(); ++s) {
    for (const auto& o : obs) {
      ref << run.reference.times[s] << ',' << o.name << ','
          << (o.op * run.reference.states[s]).trace().real() << '\n';
    }
  }
  out.write("reference.csv", ref.str());
  std::ostringstream td;
  td.precision(17);
  td << "t,trace_distance\n";
  for (std::size_t s = 0; s < run.result.times.size(); ++s) {
    td << run.result.times[s] << ',' << run.result.trace_distance[s] << '\n';
  }
  out.write("trace_distance.csv", td.str());
}

struct Common {
  std::string config;
  std::string out;
  bool assert_ = false;
};

void add_common(CLI::App* cmd, Common& c, const std::string& preset) {
  cmd->add_option("--config", c.config, "Experiment config (JSON), e.g. presets/" + preset)->required();
  cmd->add_option("--out", c.out, "Output directory (created if missing)");
  cmd->add_flag("--assert", c.assert_, "Exit 3 when the run breaches its tolerance");
}

int run_constants(const std::string& particle, double lambda, double mass, double r_c) {
  double m = 0.0;
  if (particle == "proton") {
    m = si::kProtonMass;
  } else if (particle == "electron") {
    m = si::kElectronMass;
  } else if (particle == "custom") {
    if (!(mass >= 0.0)) throw InvalidArgument("--mass must be given (kg, >= 0) for a custom particle");
    m = mass;
  }
  const double r_g = gravitational_radius_si(m, lambda);
  const double gamma = csl_gamma_for_rate(lambda, r_c);
  std::cout << "particle        " << particle << "\n"
            << "mass            " << m << " kg\n"
            << "lambda          " << lambda << " 1/s\n"
            << "r_G             " << r_g << " m   (G m^2 / (hbar lambda))\n"
            << "CSL r_c         " << r_c << " m\n"
            << "CSL gamma       " << gamma << " m^3/s   (lambda (4 pi r_c^2)^{3/2})\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for Newtonian semiclassical gravity toy models"};
  app.require_subcommand(1);
  unsigned workers = 0;
  app.add_option("--workers", workers, "Worker threads (default: SEMIGRAV_WORKERS or hardware)");

  std::string particle = "proton";
  double lambda = 1e-16, mass = -1.0, csl_rc = 1e-7;
  auto* constants = app.add_subcommand("constants", "Print r_G and CSL relations in SI");
  constants->add_option("--particle", particle, "proton | electron | custom")
      ->check(CLI::IsMember({"proton", "electron", "custom"}));
  constants->add_option("--lambda", lambda, "Collapse rate lambda (1/s)")->check(CLI::PositiveNumber);
  constants->add_option("--mass", mass, "Mass in kg for --particle custom");
  constants->add_option("--r-c", csl_rc, "CSL smearing length (m)")->check(CLI::PositiveNumber);

  Common flash_opts, cm_opts;
  long long m_override = -1;
  long long seed_override = -1;
  auto* flash = app.add_subcommand("flash-ensemble", "Flash-model trajectories vs the averaged master equation");
  add_common(flash, flash_opts, "flash_linearity.json");
  auto* cm = app.add_subcommand("cm-ensemble", "Continuous measurement+feedback trajectories vs the averaged master equation");
  add_common(cm, cm_opts, "cm_linearity.json");
  for (auto* cmd : {flash, cm}) {
    cmd->add_option("--M", m_override, "Trajectory count (overrides the config; skips the convergence fit)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed_override, "Master seed (overrides the config)")->check(CLI::NonNegativeNumber);
  }

  double kmin = 0.1, kmax = 10.0, kG = 1.0, khbar = 1.0;
  int modes = 41;
  std::string kconfig, kout;
  bool kassert = false;
  auto* kernel = app.add_subcommand("kernel-min", "Per-mode decoherence minimisation and the real-space minimum kernel");
  auto* kmin_opt = kernel->add_option("--kmin", kmin, "Smallest wavenumber (> 0)");
  auto* kmax_opt = kernel->add_option("--kmax", kmax, "Largest wavenumber");
  auto* modes_opt = kernel->add_option("--modes", modes, "Number of log-spaced modes");
  kernel->add_option("--G", kG, "G in simulation units");
  kernel->add_option("--hbar", khbar, "hbar in simulation units");
  kernel->add_option("--config", kconfig, "Optional config, e.g. presets/kernel_min.json; flags override it");
  kernel->add_option("--out", kout, "Output directory");
  kernel->add_flag("--assert", kassert, "Exit 3 when a ratio leaves 1 +/- tolerance");

  Common ns_opts;
  std::string ns_model;
  auto* ns = app.add_subcommand("nosignal", "Alice's reduced state with Bob idle vs Bob measuring");
  ns->add_option("--model", ns_model, "flash | continuous | sn")->required()
      ->check(CLI::IsMember({"flash", "continuous", "sn"}));
  add_common(ns, ns_opts, "nosignal.json");

  Common sn_opts;
  auto* sn = app.add_subcommand("sn-evolve", "Schroedinger-Newton two-blob attraction with a G=0 control");
  add_common(sn, sn_opts, "sn_evolve.json");

  Common pf_opts;
  std::string pf_model;
  double pf_factor = -1.0;
  auto* pf = app.add_subcommand("pair-force", "Relative-momentum rate of two packets vs the direct pair potential");
  add_common(pf, pf_opts, "pair_force_continuous.json");
  pf->add_option("--model", pf_model, "continuous | flash (overrides the config)")
      ->check(CLI::IsMember({"continuous", "flash"}));
  pf->add_option("--potential-factor", pf_factor, "Scale the model's pair-potential term (2 = G instead of G/2)");

  Common ito_opts;
  auto* ito = app.add_subcommand("ito-check", "Composed measurement+feedback step vs the Ito expansion");
  add_common(ito, ito_opts, "ito_composition.json");
  ito->add_option("--seed", seed_override, "Noise seed (overrides the config)")->check(CLI::NonNegativeNumber);

  std::string inv_out;
  bool inv_assert = false;
  auto* inv = app.add_subcommand("invariants", "Structural invariant suite");
  inv->add_option("--out", inv_out, "Output directory");
  inv->add_flag("--assert", inv_assert, "Exit 3 when a check fails");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  if (workers == 0) workers = default_worker_count();

  try {
    if (*constants) {
      return run_constants(particle, lambda, mass, csl_rc);
    }

    if (*flash) {
      auto cfg = FlashEnsembleConfig::from_json(load_config(flash_opts.config, "flash-ensemble"));
      if (m_override > 0) {
        cfg.trajectories = static_cast<std::size_t>(m_override);
        cfg.convergence_counts.clear();
      }
      if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
      const Output out(flash_opts.out);
      const EnsembleRun run = run_flash_ensemble(cfg, workers);
      write_ensemble(out, "flash-ensemble", run, cfg.grid, cfg.constants.hbar);
      std::cout << "trajectories " << cfg.trajectories << "  T " << run.T << "\n"
                << "final trace distance " << run.final_trace_distance << "\n";
      if (run.exponent) std::cout << "convergence exponent " << *run.exponent << "\n";
      if (flash_opts.assert_) {
        check(run.final_trace_distance <= cfg.max_trace_distance,
              "final trace distance " + fmt(run.final_trace_distance) + " > " + fmt(cfg.max_trace_distance));
        if (run.exponent) {
          check(std::abs(*run.exponent - cfg.exponent_target) <= cfg.exponent_tolerance,
                "convergence exponent " + fmt(*run.exponent) + " outside " + fmt(cfg.exponent_target) +
                    " +/- " + fmt(cfg.exponent_tolerance));
        }
      }
      return 0;
    }

    if (*cm) {
      auto cfg = ContinuousEnsembleConfig::from_json(load_config(cm_opts.config, "cm-ensemble"));
      if (m_override > 0) cfg.trajectories = static_cast<std::size_t>(m_override);
      if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
      const Output out(cm_opts.out);
      const EnsembleRun run = run_continuous_ensemble(cfg, workers);
      write_ensemble(out, "cm-ensemble", run, cfg.grid, cfg.constants.hbar);
      std::cout << "trajectories " << cfg.trajectories << "  T " << run.T << "\n"
                << "final trace distance " << run.final_trace_distance << "\n";
      if (cm_opts.assert_) {
        check(run.final_trace_distance <= cfg.max_trace_distance,
              "final trace distance " + fmt(run.final_trace_distance) + " > " + fmt(cfg.max_trace_distance));
      }
      return 0;
    }

    if (*kernel) {
      KernelMinConfig cfg;
      if (!kconfig.empty()) cfg = KernelMinConfig::from_json(load_config(kconfig, "kernel-min"));
      if (kmin_opt->count() || kconfig.empty()) cfg.kmin = kmin;
      if (kmax_opt->count() || kconfig.empty()) cfg.kmax = kmax;
      if (modes_opt->count() || kconfig.empty()) cfg.modes = modes;
      if (kernel->get_option("--G")->count()) cfg.units.G = kG;
      if (kernel->get_option("--hbar")->count()) cfg.units.hbar = khbar;
      if (!(cfg.kmin > 0.0)) throw InvalidArgument("--kmin must be > 0 (the k = 0 mode is excluded)");
      if (!(cfg.kmax > cfg.kmin)) throw InvalidArgument("--kmax must exceed --kmin");
      if (cfg.modes < 1) throw InvalidArgument("--modes must be >= 1");
      const Output out(kout);
      const KernelMinRun run = run_kernel_min(cfg);
      std::ostringstream t;
      t.precision(17);
      t << "k,gamma_hat_min,total_min,ratio\n";
      for (const auto& r : run.table) t << r.k << ',' << r.gamma_hat_min << ',' << r.total_min << ',' << r.ratio << '\n';
      out.write("kernel_min.csv", t.str());
      std::ostringstream rs;
      rs.precision(17);
      rs << "r,gamma_min,gamma_dp,total_min\n";
      for (std::size_t i = 0; i < run.realspace.r.size(); ++i) {
        rs << run.realspace.r[i] << ',' << run.realspace.gamma_min[i] << ',' << run.realspace.gamma_dp[i] << ','
           << run.realspace.total_min[i] << '\n';
      }
      out.write("kernel_realspace.csv", rs.str());
      std::cout << "modes " << run.table.size() << " in [" << cfg.kmin << ", " << cfg.kmax << "]\n"
                << "max |argmin ratio - 1|      " << run.worst_argmin_error << "\n"
                << "max |min ratio - 1|         " << run.worst_min_error << "\n"
                << "max |meas/feedback - 1|     " << run.worst_equality_error << "\n"
                << "real-space band             [" << run.realspace.r_lo << ", " << run.realspace.r_hi
                << "]  (k_min " << run.realspace.k_min << ")\n"
                << "max |Gamma_min/Gamma_DP - 1| " << run.worst_realspace_error << "\n";
      if (kassert) {
        check(run.worst_argmin_error <= cfg.argmin_tolerance, "argmin ratio outside tolerance");
        check(run.worst_equality_error <= cfg.equality_tolerance, "measurement/feedback equality outside tolerance");
        check(run.worst_realspace_error <= cfg.realspace_tolerance, "real-space kernel outside tolerance");
      }
      return 0;
    }

    if (*ns) {
      const auto cfg = NoSignalConfig::from_json(load_config(ns_opts.config, "nosignal"));
      const NoSignallingModel model = parse_nosignal_model(ns_model);
      const Output out(ns_opts.out);
      const NoSignallingResult r = run_nosignal(model, cfg);
      out.write_json("nosignal_" + ns_model + ".json",
                     {{"schema", "semigrav.nosignal/1"},
                      {"model", ns_model},
                      {"T", cfg.setup.T},
                      {"trace_distance", r.trace_distance},
                      {"alice_idle", matrix_json(r.alice_idle)},
                      {"alice_measured", matrix_json(r.alice_measured)}});
      std::cout << "model " << ns_model << "\ntrace distance " << r.trace_distance << "\n";
      if (ns_opts.assert_) {
        if (model == NoSignallingModel::SchroedingerNewton) {
          check(r.trace_distance >= cfg.sn_factor * cfg.linear_bound,
                "SN distance " + fmt(r.trace_distance) + " below " + fmt(cfg.sn_factor * cfg.linear_bound));
          if (cfg.sn_regression) {
            check(std::abs(r.trace_distance / *cfg.sn_regression - 1.0) <= 1e-6,
                  "SN distance " + fmt(r.trace_distance) + " differs from the recorded " + fmt(*cfg.sn_regression));
          }
        } else {
          check(r.trace_distance <= cfg.linear_bound,
                "linear-model distance " + fmt(r.trace_distance) + " > " + fmt(cfg.linear_bound));
        }
      }
      return 0;
    }

    if (*sn) {
      const auto cfg = SNEvolveConfig::from_json(load_config(sn_opts.config, "sn-evolve"));
      const Output out(sn_opts.out);
      const SNEvolveRun run = run_sn_evolve(cfg);
      std::ostringstream csv;
      csv.precision(17);
      csv << "t,d,d_control,energy,energy_control\n";
      for (std::size_t i = 0; i < run.run.times.size(); ++i) {
        csv << run.run.times[i] << ',' << run.run.distance[i] << ',' << run.control.distance[i] << ','
            << run.run.energy[i] << ',' << run.control.energy[i] << '\n';
      }
      out.write("sn_distance.csv", csv.str());
      const double d0 = run.run.distance.front(), dT = run.run.distance.back();
      const double c0 = run.control.distance.front(), cT = run.control.distance.back();
      std::cout << "d(0) " << d0 << "  d(T) " << dT << "\ncontrol d(0) " << c0 << "  d(T) " << cT << "\n";
      if (sn_opts.assert_) {
        check(dT < d0, "SN blobs did not approach: d(T) " + fmt(dT) + " >= d(0) " + fmt(d0));
        check(cT >= c0, "control blobs approached: d(T) " + fmt(cT) + " < d(0) " + fmt(c0));
      }
      return 0;
    }

    if (*pf) {
      auto cfg = PairForceConfig::from_json(load_config(pf_opts.config, "pair-force"));
      if (!pf_model.empty()) cfg.model = pf_model;
      if (pf_factor > 0.0) cfg.potential_factor = pf_factor;
      const Output out(pf_opts.out);
      const PairForceRun r = run_pair_force(cfg);
      out.write_json("pair_force_" + cfg.model + ".json",
                     {{"schema", "semigrav.pair_force/1"},
                      {"model", cfg.model},
                      {"potential_factor", cfg.potential_factor},
                      {"model_rate", r.model_rate},
                      {"oracle_rate", r.oracle_rate},
                      {"relative_error", r.relative_error}});
      std::cout << "model " << cfg.model << "\nd<p_rel>/dt model " << r.model_rate << "  oracle " << r.oracle_rate
                << "\nrelative error " << r.relative_error << "\n";
      if (pf_opts.assert_) {
        check(r.relative_error <= cfg.tolerance, "pair force off by " + fmt(r.relative_error));
      }
      return 0;
    }

    if (*ito) {
      auto cfg = ItoConfig::from_json(load_config(ito_opts.config, "ito-composition"));
      if (seed_override >= 0) cfg.noise_seed = static_cast<std::uint64_t>(seed_override);
      const Output out(ito_opts.out);
      const ItoRun r = run_ito_composition(cfg);
      out.write_json("ito.json", {{"schema", "semigrav.ito/1"},
                                  {"dt", cfg.dt},
                                  {"defect_dt", r.defect_dt},
                                  {"defect_half_dt", r.defect_half},
                                  {"ratio", r.ratio},
                                  {"ratio_first_order", r.ratio_first_order}});
      std::cout << "mean defect dt " << r.defect_dt << "  dt/2 " << r.defect_half << "\nratio " << r.ratio
                << "  (first-order expansion only: " << r.ratio_first_order << ")\n";
      if (ito_opts.assert_) check(r.ratio >= cfg.min_ratio, "defect ratio " + fmt(r.ratio) + " < " + fmt(cfg.min_ratio));
      return 0;
    }

    if (*inv) {
      const Output out(inv_out);
      const auto checks = structural_invariants();
      json j = json::array();
      bool all = true;
      for (const auto& c : checks) {
        std::cout << (c.pass ? "ok   " : "FAIL ") << c.name << "  " << c.value << " (<= " << c.threshold << ")\n";
        j.push_back({{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"pass", c.pass}});
        all = all && c.pass;
      }
      out.write_json("invariants.json", j);
      if (inv_assert) check(all, "structural invariant failed");
      return 0;
    }
  } catch (const AssertionBreach& e) {
    std::cerr << "assertion failed: " << e.what() << "\n";
    return kExitAssert;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionCapExceeded& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
