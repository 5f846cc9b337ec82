#include "semigrav/experiments.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace semigrav {

namespace {

using nlohmann::json;

// Typed access to one JSON object that remembers which keys were read, so
// that anything left over can be reported as unknown.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!node_.contains(key)) return fallback;
    return convert<T>(key);
  }

  template <class T>
  T require(const std::string& key) {
    used_.insert(key);
    if (!node_.contains(key)) throw ConfigError("missing key " + where(key));
    return convert<T>(key);
  }

  Section sub(const std::string& key) {
    used_.insert(key);
    static const json empty = json::object();
    return Section(node_.contains(key) ? node_.at(key) : empty, where(key));
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError("unknown key " + where(it.key()));
    }
  }

 private:
  template <class T>
  T convert(const std::string& key) const {
    const json& v = node_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where(key) + " must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where(key) + " must be an integer");
      if (std::is_unsigned_v<T> && v.get<long long>() < 0) {
        throw ConfigError(where(key) + " must be non-negative");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where(key) + " must be a string");
    }
    try {
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  std::string where(const std::string& key = "") const {
    return "'" + path_ + (key.empty() ? "" : (path_.empty() ? "" : ".") + key) + "'";
  }

  const json& node_;
  std::string path_;
  std::set<std::string> used_;
};

Section top_level(const json& doc) {
  Section top(doc, "");
  top.get<int>("schema_version", 0);
  top.get<std::string>("experiment", "");
  top.get<std::string>("description", "");
  return top;
}

GridSpec read_grid(Section s, int particles) {
  GridSpec g;
  g.points = s.require<int>("points");
  g.spacing = s.require<double>("spacing");
  g.particles = particles;
  s.finish();
  return g;
}

// Masses are given either as a single "mass" shared by every particle or as
// an explicit "masses" list.
PhysicalConstants read_constants(Section& s, int particles) {
  PhysicalConstants c;
  c.G = s.require<double>("G");
  c.hbar = s.get<double>("hbar", 1.0);
  if (s.has("masses") && s.has("mass")) throw ConfigError("give either 'physics.mass' or 'physics.masses'");
  if (s.has("masses")) {
    c.masses = s.require<std::vector<double>>("masses");
  } else {
    c.masses.assign(static_cast<std::size_t>(particles), s.get<double>("mass", 1.0));
  }
  s.get<double>("r_c", 1.0);  // read by the caller
  if (static_cast<int>(c.masses.size()) != particles) {
    throw ConfigError("'physics.masses' needs " + std::to_string(particles) + " entries");
  }
  return c;
}

// Validation errors of the domain types surface as config errors.
template <class F>
auto as_config_error(F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  } catch (const DimensionCapExceeded& e) {
    throw ConfigError(e.what());
  }
}

UpdateRule parse_rule(const std::string& name) {
  if (name == "kraus") return UpdateRule::Kraus;
  if (name == "euler-maruyama") return UpdateRule::EulerMaruyama;
  if (name == "raw-signal") return UpdateRule::RawSignal;
  throw ConfigError("unknown update_rule '" + name + "' (expected kraus, euler-maruyama or raw-signal)");
}

long checked_ratio(double a, double b, const std::string& what) {
  const long n = std::lround(a / b);
  if (n < 1 || std::abs(n * b - a) > 1e-9 * a) throw ConfigError(what + " must be an integer multiple");
  return n;
}

Matrix random_hermitian(Rng& rng, Eigen::Index d) {
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = Complex(standard_normal(rng), standard_normal(rng));
  }
  return 0.5 * (a + a.adjoint());
}

Matrix random_density(Rng& rng, Eigen::Index d) {
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = Complex(standard_normal(rng), standard_normal(rng));
  }
  Matrix rho = a * a.adjoint();
  return rho / rho.trace();
}

}  // namespace

json check_config(const json& doc, const std::string& experiment) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  if (!doc.contains("schema_version") || !doc.at("schema_version").is_number_integer()) {
    throw ConfigError("config needs an integer 'schema_version'");
  }
  if (doc.at("schema_version").get<int>() != kConfigSchemaVersion) {
    throw ConfigError("unsupported schema_version " + doc.at("schema_version").dump() +
                      " (expected " + std::to_string(kConfigSchemaVersion) + ")");
  }
  if (!doc.contains("experiment") || !doc.at("experiment").is_string()) {
    throw ConfigError("config needs a string 'experiment'");
  }
  if (doc.at("experiment").get<std::string>() != experiment) {
    throw ConfigError("config is for '" + doc.at("experiment").get<std::string>() + "', not '" +
                      experiment + "'");
  }
  return doc;
}

json load_config(const std::string& path, const std::string& experiment) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return check_config(doc, experiment);
}

std::vector<Observable> position_observables(const GridSpec& grid, double hbar) {
  if (grid.particles != 1) throw InvalidArgument("position observables are single-particle");
  const RealVector x = position_diagonal(grid, 0);
  Matrix xm = Matrix::Zero(grid.points, grid.points);
  Matrix x2 = Matrix::Zero(grid.points, grid.points);
  for (int i = 0; i < grid.points; ++i) {
    xm(i, i) = x[i];
    x2(i, i) = x[i] * x[i];
  }
  return {{"x", xm}, {"x2", x2}, {"p", momentum_matrix(grid.points, grid.spacing, hbar)}};
}

Vector two_blob_state(const GridSpec& grid, double separation, double width) {
  const Vector a = WaveFunction::gaussian(grid, -0.5 * separation, width).unit_vector();
  const Vector b = WaveFunction::gaussian(grid, 0.5 * separation, width).unit_vector();
  return (a + b).normalized();
}

// ---------------------------------------------------------------- flash

FlashEnsembleConfig FlashEnsembleConfig::from_json(const json& doc) {
  check_config(doc, "flash-ensemble");
  FlashEnsembleConfig c;
  Section top = top_level(doc);
  c.grid = read_grid(top.sub("grid"), 1);
  Section phys = top.sub("physics");
  c.constants = read_constants(phys, 1);
  c.r_c = phys.get<double>("r_c", 1.0);
  phys.finish();
  Section flash = top.sub("flash");
  c.rate = flash.get<double>("rate", c.rate);
  c.include_self_kick = flash.get<bool>("include_self_kick", c.include_self_kick);
  flash.finish();
  Section st = top.sub("state");
  c.separation = st.get<double>("separation", c.separation);
  c.width = st.get<double>("width", c.width);
  st.finish();
  Section run = top.sub("run");
  c.periods = run.get<double>("periods", c.periods);
  c.sample_dt = run.get<double>("sample_dt", c.sample_dt);
  c.reference_dt = run.get<double>("reference_dt", c.reference_dt);
  c.trajectories = run.get<std::size_t>("trajectories", c.trajectories);
  c.seed = run.get<std::uint64_t>("seed", c.seed);
  c.convergence_counts = run.get<std::vector<std::size_t>>("convergence_counts", {});
  run.finish();
  Section as = top.sub("assert");
  c.max_trace_distance = as.get<double>("max_trace_distance", c.max_trace_distance);
  c.exponent_target = as.get<double>("exponent", c.exponent_target);
  c.exponent_tolerance = as.get<double>("exponent_tolerance", c.exponent_tolerance);
  as.finish();
  top.finish();
  as_config_error([&] {
    c.model_params().validate();
    return 0;
  });
  if (!(c.periods > 0.0) || !(c.sample_dt > 0.0) || !(c.reference_dt > 0.0) || c.trajectories < 1) {
    throw ConfigError("run needs periods, sample_dt, reference_dt > 0 and trajectories >= 1");
  }
  checked_ratio(c.periods / c.rate, c.sample_dt, "T = periods / rate over sample_dt");
  checked_ratio(c.sample_dt, c.reference_dt, "sample_dt over reference_dt");
  return c;
}

FlashModelParams FlashEnsembleConfig::model_params() const {
  return FlashModelParams{rate, r_c, constants, grid, include_self_kick};
}

namespace {

EnsembleRun finish_ensemble_run(const std::shared_ptr<const TrajectoryModel>& model,
                                const GridSpec& grid, double hbar, double T, double sample_dt,
                                std::size_t trajectories, std::uint64_t seed,
                                const std::vector<std::size_t>& counts, ReferenceSeries reference,
                                unsigned workers) {
  EnsembleRun out;
  out.T = T;
  out.reference = std::move(reference);
  const int samples = static_cast<int>(std::lround(T / sample_dt));
  auto make_spec = [&](std::size_t m) {
    EnsembleSpec s;
    s.model = model;
    s.trajectories = m;
    s.seed = seed;
    s.sample_dt = sample_dt;
    s.samples = samples;
    s.observables = position_observables(grid, hbar);
    s.workers = workers;
    return s;
  };
  out.result = run_ensemble(make_spec(trajectories));
  attach_reference(out.result, out.reference.states);
  out.final_trace_distance = out.result.trace_distance.back();
  if (!counts.empty()) {
    std::vector<double> ms;
    for (std::size_t m : counts) {
      EnsembleResult r = m == trajectories ? out.result : run_ensemble(make_spec(m));
      attach_reference(r, out.reference.states);
      out.convergence_counts.push_back(m);
      out.convergence_distances.push_back(r.trace_distance.back());
      ms.push_back(static_cast<double>(m));
    }
    if (ms.size() >= 2) {
      out.exponent = fit_convergence_exponent(ms, out.convergence_distances);
      out.result.convergence_exponent = out.exponent;
    }
  }
  return out;
}

}  // namespace

EnsembleRun run_flash_ensemble(const FlashEnsembleConfig& c, unsigned workers) {
  const FlashModelParams params = c.model_params();
  const Hamiltonian h0 = build_free_hamiltonian(c.grid, c.constants);
  const Vector psi0 = two_blob_state(c.grid, c.separation, c.width);
  const double T = c.periods / c.rate;
  const FlashGenerator gen(params, h0);
  const int every = static_cast<int>(checked_ratio(c.sample_dt, c.reference_dt, "sample_dt"));
  ReferenceSeries ref = reference_integrate([&](const Matrix& r) { return gen(r); }, projector(psi0),
                                            T, c.reference_dt, every);
  auto model = std::make_shared<FlashTrajectoryModel>(params, h0, psi0);
  return finish_ensemble_run(model, c.grid, c.constants.hbar, T, c.sample_dt, c.trajectories,
                             c.seed, c.convergence_counts, std::move(ref), workers);
}

// ----------------------------------------------------------- continuous

ContinuousEnsembleConfig ContinuousEnsembleConfig::from_json(const json& doc) {
  check_config(doc, "cm-ensemble");
  ContinuousEnsembleConfig c;
  Section top = top_level(doc);
  c.grid = read_grid(top.sub("grid"), 1);
  Section phys = top.sub("physics");
  c.constants = read_constants(phys, 1);
  c.r_c = phys.get<double>("r_c", 1.0);
  phys.finish();
  Section k = top.sub("kernel");
  c.kernel = k.get<std::string>("type", c.kernel);
  c.csl_gamma = k.get<double>("gamma", c.csl_gamma);
  c.nucleon_mass = k.get<double>("nucleon_mass", c.nucleon_mass);
  k.finish();
  if (c.kernel != "dp" && c.kernel != "csl") {
    throw ConfigError("'kernel.type' must be dp or csl, got '" + c.kernel + "'");
  }
  Section st = top.sub("state");
  c.separation = st.get<double>("separation", c.separation);
  c.width = st.get<double>("width", c.width);
  st.finish();
  Section run = top.sub("run");
  c.dt = run.get<double>("dt", c.dt);
  c.decoherence_times = run.get<double>("decoherence_times", c.decoherence_times);
  c.reference_substeps = run.get<int>("reference_substeps", c.reference_substeps);
  c.rule = parse_rule(run.get<std::string>("update_rule", "kraus"));
  c.trajectories = run.get<std::size_t>("trajectories", c.trajectories);
  c.seed = run.get<std::uint64_t>("seed", c.seed);
  run.finish();
  Section as = top.sub("assert");
  c.max_trace_distance = as.get<double>("max_trace_distance", c.max_trace_distance);
  as.finish();
  top.finish();
  if (!(c.decoherence_times > 0.0) || c.reference_substeps < 1 || c.trajectories < 1) {
    throw ConfigError("run needs decoherence_times > 0, reference_substeps >= 1, trajectories >= 1");
  }
  as_config_error([&] {
    c.model_params().validate();
    c.noise_kernel();
    return 0;
  });
  return c;
}

ContinuousGravityParams ContinuousEnsembleConfig::model_params() const {
  return ContinuousGravityParams{grid, constants, r_c, dt};
}

NoiseKernel ContinuousEnsembleConfig::noise_kernel() const {
  if (kernel == "csl") return NoiseKernel::csl(grid, csl_gamma, nucleon_mass);
  return NoiseKernel::dp(grid, constants, r_c);
}

EnsembleRun run_continuous_ensemble(const ContinuousEnsembleConfig& c, unsigned workers) {
  const ContinuousGravityParams params = c.model_params();
  const GravitationalFeedbackSpec fb =
      build_feedback_spec(build_mass_measurement_spec(params, c.noise_kernel()), params);
  const Hamiltonian h0 = build_free_hamiltonian(c.grid, c.constants);
  const Vector psi0 = two_blob_state(c.grid, c.separation, c.width);
  const DecoherenceRates rates = decoherence_rates(
      fb, static_cast<std::size_t>(c.grid.cell_of(-0.5 * c.separation)),
      static_cast<std::size_t>(c.grid.cell_of(0.5 * c.separation)));
  if (!(rates.total > 0.0)) throw InvalidArgument("the blob coherence does not decay; nothing to compare");
  // One sample per quarter of the run, each an integer number of steps.
  const int samples = 4;
  const long per_sample =
      std::max(1L, std::lround(c.decoherence_times / rates.total / (samples * c.dt)));
  const double sample_dt = per_sample * c.dt;
  const double T = samples * sample_dt;
  const GravityGenerator gen(fb, h0);
  ReferenceSeries ref =
      reference_integrate([&](const Matrix& r) { return gen(r); }, projector(psi0), T,
                          c.dt / c.reference_substeps, static_cast<int>(per_sample * c.reference_substeps));
  auto model = std::make_shared<ContinuousTrajectoryModel>(fb.spec, h0, psi0, c.rule);
  return finish_ensemble_run(model, c.grid, c.constants.hbar, T, sample_dt, c.trajectories, c.seed,
                             {}, std::move(ref), workers);
}

// --------------------------------------------------------- no-signalling

NoSignalConfig NoSignalConfig::from_json(const json& doc) {
  check_config(doc, "nosignal");
  NoSignalConfig c;
  Section top = top_level(doc);
  NoSignallingSetup& s = c.setup;
  s.grid = read_grid(top.sub("grid"), 2);
  Section phys = top.sub("physics");
  s.constants = read_constants(phys, 2);
  s.r_c = phys.get<double>("r_c", 1.0);
  phys.finish();
  Section flash = top.sub("flash");
  s.flash_rate = flash.get<double>("rate", 1.0);
  s.include_self_kick = flash.get<bool>("include_self_kick", true);
  flash.finish();
  Section st = top.sub("state");
  c.separation = st.get<double>("separation", c.separation);
  c.width = st.get<double>("width", c.width);
  const auto cells = st.get<std::vector<int>>("bob_cells", {c.bob_cell0, c.bob_cell1});
  st.finish();
  if (cells.size() != 2) throw ConfigError("'state.bob_cells' needs exactly two cells");
  c.bob_cell0 = cells[0];
  c.bob_cell1 = cells[1];
  Section run = top.sub("run");
  s.T = run.require<double>("T");
  s.dt = run.require<double>("dt");
  run.finish();
  Section as = top.sub("assert");
  c.linear_bound = as.get<double>("linear_bound", c.linear_bound);
  c.sn_factor = as.get<double>("sn_factor", c.sn_factor);
  if (as.has("sn_regression")) c.sn_regression = as.require<double>("sn_regression");
  as.finish();
  top.finish();
  for (int b : cells) {
    if (b < 0 || b >= s.grid.points) throw ConfigError("'state.bob_cells' entries must be grid cells");
  }
  as_config_error([&] {
    s.validate();
    c.initial_state();
    return 0;
  });
  return c;
}

Vector NoSignalConfig::initial_state() const {
  return entangled_blob_state(setup.grid, separation, width, bob_cell0, bob_cell1);
}

NoSignallingResult run_nosignal(NoSignallingModel model, const NoSignalConfig& c) {
  return no_signalling_test(model, c.initial_state(), c.setup);
}

// ------------------------------------------------------------------- SN

SNEvolveConfig SNEvolveConfig::from_json(const json& doc) {
  check_config(doc, "sn-evolve");
  SNEvolveConfig c;
  Section top = top_level(doc);
  c.params.grid = read_grid(top.sub("grid"), 1);
  Section phys = top.sub("physics");
  c.params.constants = read_constants(phys, 1);
  c.params.r_c = phys.get<double>("r_c", 1.0);
  phys.finish();
  Section st = top.sub("state");
  c.separation = st.get<double>("separation", c.separation);
  c.width = st.get<double>("width", c.width);
  st.finish();
  Section run = top.sub("run");
  c.T = run.require<double>("T");
  c.params.dt = run.require<double>("dt");
  c.record_every = run.get<int>("record_every", c.record_every);
  run.finish();
  top.finish();
  if (c.record_every < 1 || !(c.T > 0.0)) throw ConfigError("run needs T > 0 and record_every >= 1");
  as_config_error([&] {
    c.params.validate();
    return 0;
  });
  return c;
}

SNEvolveRun run_sn_evolve(const SNEvolveConfig& c) {
  const Vector psi0 = two_blob_state(c.params.grid, c.separation, c.width);
  SNParams control = c.params;
  control.constants.G = 0.0;
  return {evolve_sn(psi0, c.T, c.params, c.record_every), evolve_sn(psi0, c.T, control, c.record_every)};
}

// ------------------------------------------------------------ pair force

double smoothed_coulomb(double d, double s2, double r_c) {
  if (!(s2 > 0.0) || !(r_c > 0.0)) throw InvalidArgument("smoothed_coulomb needs s2 > 0 and r_c > 0");
  const double s = std::sqrt(s2);
  const int n = 8000;
  const double h = 24.0 * s / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double u = -12.0 * s + i * h;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    acc += w * std::exp(-u * u / (2.0 * s2)) * regularized_coulomb_value(std::abs(d - u), r_c);
  }
  return acc * h / std::sqrt(2.0 * std::numbers::pi * s2);
}

PairForceConfig PairForceConfig::from_json(const json& doc) {
  check_config(doc, "pair-force");
  PairForceConfig c;
  Section top = top_level(doc);
  c.model = top.get<std::string>("model", c.model);
  c.grid = read_grid(top.sub("grid"), 2);
  Section phys = top.sub("physics");
  c.constants = read_constants(phys, 2);
  c.r_c = phys.get<double>("r_c", 1.0);
  phys.finish();
  Section flash = top.sub("flash");
  c.rate = flash.get<double>("rate", c.rate);
  flash.finish();
  Section st = top.sub("state");
  c.separation = st.get<double>("separation", c.separation);
  c.width = st.get<double>("width", c.width);
  st.finish();
  Section run = top.sub("run");
  c.window = run.get<double>("window", c.window);
  c.steps = run.get<int>("steps", c.steps);
  c.potential_factor = run.get<double>("potential_factor", c.potential_factor);
  run.finish();
  Section as = top.sub("assert");
  c.tolerance = as.get<double>("tolerance", c.tolerance);
  as.finish();
  top.finish();
  if (c.model != "continuous" && c.model != "flash") {
    throw ConfigError("'model' must be continuous or flash, got '" + c.model + "'");
  }
  if (c.constants.masses[0] != c.constants.masses[1]) throw ConfigError("pair force needs equal masses");
  if (!(c.window > 0.0) || c.steps < 1) throw ConfigError("run needs window > 0 and steps >= 1");
  as_config_error([&] {
    c.grid.validate();
    c.constants.validate();
    return 0;
  });
  return c;
}

PairForceRun run_pair_force(const PairForceConfig& c) {
  const GridSpec& g = c.grid;
  if (g.particles != 2) throw InvalidArgument("pair force needs two particles");
  const double m = c.constants.masses[0];
  const Hamiltonian h0 = build_free_hamiltonian(g, c.constants);
  const GridSpec single = g.with_particles(1);
  const Vector left = WaveFunction::gaussian(single, -0.5 * c.separation, c.width).unit_vector();
  const Vector right = WaveFunction::gaussian(single, 0.5 * c.separation, c.width).unit_vector();
  Vector psi(static_cast<Eigen::Index>(g.hilbert_dim()));
  for (int i = 0; i < g.points; ++i) {
    for (int j = 0; j < g.points; ++j) psi[g.config_index({i, j})] = left[i] * right[j];
  }
  const Matrix rho0 = projector(psi);

  Generator model;
  double s2 = 0.0;
  const double extra = c.potential_factor - 1.0;
  if (c.model == "flash") {
    auto gen = std::make_shared<FlashGenerator>(FlashModelParams{c.rate, c.r_c, c.constants, g, true}, h0);
    model = [gen, extra](const Matrix& r) {
      Matrix out = (*gen)(r);
      if (extra != 0.0) out += extra * gen->effective_potential_term(r);
      return out;
    };
    s2 = 0.5 * c.r_c * c.r_c;
  } else {
    const ContinuousGravityParams p{g, c.constants, c.r_c, 1e-3};
    auto gen = std::make_shared<GravityGenerator>(
        build_feedback_spec(build_mass_measurement_spec(p, NoiseKernel::dp(g, c.constants, c.r_c)), p), h0);
    model = [gen, extra](const Matrix& r) {
      Matrix out = (*gen)(r);
      if (extra != 0.0) out += extra * gen->potential_term(r);
      return out;
    };
    s2 = 2.0 * c.r_c * c.r_c;
  }

  // Direct pair potential on separations; the table is indexed by i - j.
  std::vector<double> pair(2 * g.points - 1);
  for (int d = -(g.points - 1); d < g.points; ++d) {
    pair[d + g.points - 1] = -c.constants.G * m * m * smoothed_coulomb(d * g.spacing, s2, c.r_c);
  }
  RealVector v(static_cast<Eigen::Index>(g.hilbert_dim()));
  for (int i = 0; i < g.points; ++i) {
    for (int j = 0; j < g.points; ++j) v[g.config_index({i, j})] = pair[i - j + g.points - 1];
  }
  const double hbar = c.constants.hbar;
  const Generator oracle = [&](const Matrix& r) {
    Matrix out = (-kI / hbar) * h0.commutator(r);
    for (Eigen::Index b = 0; b < r.cols(); ++b) {
      for (Eigen::Index a = 0; a < r.rows(); ++a) out(a, b) += (-kI / hbar) * (v[a] - v[b]) * r(a, b);
    }
    return out;
  };

  const Matrix p = momentum_matrix(g.points, g.spacing, hbar);
  auto p_rel = [&](const Matrix& r) {
    Matrix x = r;
    apply_on_axis(p, 0, g, x);
    Matrix y = r;
    apply_on_axis(p, 1, g, y);
    return 0.5 * (x.trace() - y.trace()).real();
  };
  const double dt = c.window / c.steps;
  const double p0 = p_rel(rho0);
  PairForceRun out{};
  out.model_rate = (p_rel(integrate_to(model, rho0, c.window, dt)) - p0) / c.window;
  out.oracle_rate = (p_rel(integrate_to(oracle, rho0, c.window, dt)) - p0) / c.window;
  out.relative_error = std::abs(out.model_rate / out.oracle_rate - 1.0);
  return out;
}

// ------------------------------------------------------------------ Ito

ItoConfig ItoConfig::from_json(const json& doc) {
  check_config(doc, "ito-composition");
  ItoConfig c;
  Section top = top_level(doc);
  Section sys = top.sub("system");
  c.dim = sys.get<int>("dim", c.dim);
  c.observables = sys.get<int>("observables", c.observables);
  c.operator_seed = sys.get<std::uint64_t>("operator_seed", c.operator_seed);
  sys.finish();
  Section run = top.sub("run");
  c.dt = run.get<double>("dt", c.dt);
  c.draws = run.get<int>("draws", c.draws);
  c.noise_seed = run.get<std::uint64_t>("noise_seed", c.noise_seed);
  run.finish();
  Section as = top.sub("assert");
  c.min_ratio = as.get<double>("min_ratio", c.min_ratio);
  as.finish();
  top.finish();
  if (c.dim < 2 || c.observables < 1 || c.draws < 1 || !(c.dt > 0.0)) {
    throw ConfigError("ito-composition needs dim >= 2, observables >= 1, draws >= 1, dt > 0");
  }
  return c;
}

ItoRun run_ito_composition(const ItoConfig& c) {
  Rng ops(c.operator_seed);
  std::vector<Matrix> obs, fb;
  for (int j = 0; j < c.observables; ++j) obs.push_back(random_hermitian(ops, c.dim));
  for (int j = 0; j < c.observables; ++j) fb.push_back(random_hermitian(ops, c.dim));
  // A fixed well-conditioned correlation matrix: 1 on the diagonal, 0.3 off it.
  RealMatrix gamma = RealMatrix::Constant(c.observables, c.observables, 0.3);
  gamma.diagonal().setOnes();
  const Matrix rho = 0.8 * random_density(ops, c.dim) + 0.2 * Matrix::Identity(c.dim, c.dim) / c.dim;

  const ContinuousMeasurementSpec full = ContinuousMeasurementSpec::dense(obs, gamma, fb, c.dt);
  const ContinuousMeasurementSpec half = full.with_dt(0.5 * c.dt);
  const FeedbackGenerator second = analytic_feedback_generator(rho, full, true);
  const FeedbackGenerator first = analytic_feedback_generator(rho, full, false);
  auto defect = [&](const ContinuousMeasurementSpec& spec, const RealVector& z, bool with_second) {
    const RealVector dW = std::sqrt(spec.dt()) * spec.noise_factor() * z;
    const SignalIncrement sig = make_signal(rho, spec, dW);
    const Matrix composed = feedback_conjugation_step(
        measurement_update(rho, spec, dW, UpdateRule::EulerMaruyama), sig, spec);
    return (composed - analytic_step(rho, with_second ? second : first, spec, dW)).norm();
  };
  Rng noise(c.noise_seed);
  double d_full = 0.0, d_half = 0.0, f_full = 0.0, f_half = 0.0;
  for (int n = 0; n < c.draws; ++n) {
    RealVector z(c.observables);
    for (int j = 0; j < c.observables; ++j) z[j] = standard_normal(noise);
    d_full += defect(full, z, true);
    d_half += defect(half, z, true);
    f_full += defect(full, z, false);
    f_half += defect(half, z, false);
  }
  return {d_full / c.draws, d_half / c.draws, d_full / d_half, f_full / f_half};
}

// --------------------------------------------------------------- kernel

KernelMinConfig KernelMinConfig::from_json(const json& doc) {
  check_config(doc, "kernel-min");
  KernelMinConfig c;
  Section top = top_level(doc);
  Section u = top.sub("units");
  c.units.G = u.get<double>("G", c.units.G);
  c.units.hbar = u.get<double>("hbar", c.units.hbar);
  u.finish();
  Section t = top.sub("table");
  c.kmin = t.get<double>("kmin", c.kmin);
  c.kmax = t.get<double>("kmax", c.kmax);
  c.modes = t.get<int>("modes", c.modes);
  t.finish();
  Section r = top.sub("realspace");
  c.realspace.box_length = r.get<double>("box_length", c.realspace.box_length);
  c.realspace.k_cutoff = r.get<double>("k_cutoff", c.realspace.k_cutoff);
  c.realspace.table_modes = r.get<int>("table_modes", c.realspace.table_modes);
  c.realspace.radii = r.get<int>("radii", c.realspace.radii);
  r.finish();
  Section as = top.sub("assert");
  c.argmin_tolerance = as.get<double>("argmin_tolerance", c.argmin_tolerance);
  c.realspace_tolerance = as.get<double>("realspace_tolerance", c.realspace_tolerance);
  c.equality_tolerance = as.get<double>("equality_tolerance", c.equality_tolerance);
  as.finish();
  top.finish();
  if (!(c.kmin > 0.0) || !(c.kmax > c.kmin) || c.modes < 1) {
    throw ConfigError("table needs 0 < kmin < kmax and modes >= 1");
  }
  return c;
}

KernelMinRun run_kernel_min(const KernelMinConfig& c) {
  KernelMinRun out{};
  out.table = kernel_min_table(c.kmin, c.kmax, c.modes, c.units);
  for (const auto& row : out.table) {
    const double analytic_min = 16.0 * std::numbers::pi * c.units.G / (c.units.hbar * row.k * row.k);
    const ModeMinimum m = minimize_mode(row.k, c.units);
    out.worst_argmin_error = std::max(out.worst_argmin_error, std::abs(row.ratio - 1.0));
    out.worst_min_error = std::max(out.worst_min_error, std::abs(row.total_min / analytic_min - 1.0));
    out.worst_equality_error = std::max(out.worst_equality_error, std::abs(m.measurement / m.feedback - 1.0));
  }
  out.realspace = minimum_kernel_realspace(c.units, c.realspace);
  for (std::size_t i = 0; i < out.realspace.r.size(); ++i) {
    out.worst_realspace_error = std::max(
        out.worst_realspace_error, std::abs(out.realspace.gamma_min[i] / out.realspace.gamma_dp[i] - 1.0));
  }
  return out;
}

// ----------------------------------------------------------- invariants

std::vector<InvariantCheck> structural_invariants() {
  std::vector<InvariantCheck> checks;
  auto record = [&](std::string name, double value, double threshold) {
    checks.push_back({std::move(name), value, threshold, value <= threshold});
  };
  Rng rng(2024);

  GridSpec pair;
  pair.points = 8;
  pair.spacing = 1.0;
  pair.particles = 2;
  PhysicalConstants two;
  two.G = 1.0;
  two.masses = {1.0, 2.0};
  record("hamiltonian hermiticity", hermiticity_defect(build_free_hamiltonian(pair, two).dense()), 1e-10);
  {
    const RealMatrix kp = regularized_coulomb(pair, 1.0);
    const RealMatrix ko = regularized_coulomb(pair, 1.0, Separation::Open);
    record("coulomb table symmetry",
           std::max((kp - kp.transpose()).cwiseAbs().maxCoeff(), (ko - ko.transpose()).cwiseAbs().maxCoeff()),
           1e-12);
    const MassDensityField f = build_mass_density(pair, two, 1.0);
    const RealVector total = f.smeared.colwise().sum().transpose() * pair.spacing;
    record("mass density sum rule", (total.array() - two.total_mass()).abs().maxCoeff(), 1e-10);
  }

  // POVMs: flash completeness and a random three-outcome POVM on dimension 4.
  GridSpec line;
  line.points = 16;
  line.spacing = 0.5;
  PhysicalConstants one;
  one.G = 0.5;
  one.masses = {1.0};
  const FlashModelParams flash{1.0, 1.0, one, line, true};
  {
    RealVector sum = RealVector::Zero(line.points);
    for (int f = 0; f < line.points; ++f) sum += line.spacing * collapse_operator(f, 0, flash).cwiseAbs2();
    record("flash POVM completeness", (sum.array() - 1.0).abs().maxCoeff(), 1e-8);
  }
  DiscretePovm povm;
  {
    std::vector<Matrix> raw;
    Matrix s = Matrix::Zero(4, 4);
    for (int k = 0; k < 3; ++k) {
      raw.push_back(random_hermitian(rng, 4) + kI * random_hermitian(rng, 4));
      s += raw.back().adjoint() * raw.back();
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    const Matrix inv_sqrt = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                            es.eigenvectors().adjoint();
    for (const auto& a : raw) povm.measurement.push_back(a * inv_sqrt);
    Matrix completeness = -Matrix::Identity(4, 4);
    for (const auto& n : povm.measurement) completeness += n.adjoint() * n;
    record("random POVM completeness", completeness.cwiseAbs().maxCoeff(), 1e-10);
    const Matrix rho = random_density(rng, 4);
    record("POVM channel trace preservation",
           std::abs(povm_average_channel(rho, povm).trace() - 1.0), 1e-10);
    const Matrix choi = choi_matrix([&](const Matrix& e) { return povm_average_channel(e, povm); }, 4);
    record("POVM channel CP (Choi, dim 4)", std::max(0.0, -min_eigenvalue(0.5 * (choi + choi.adjoint()))), 1e-10);
  }

  // Averaged generators: trace annihilation, Hermiticity and linearity.
  const FlashGenerator flash_gen(flash, build_free_hamiltonian(line, one));
  // r_c = dx keeps the DP kernel well conditioned.
  const ContinuousGravityParams cgp{line, one, 0.5, 1e-3};
  const GravityGenerator cont_gen(
      build_feedback_spec(build_mass_measurement_spec(cgp, NoiseKernel::dp(line, one, 0.5)), cgp),
      build_free_hamiltonian(line, one));
  const std::vector<std::pair<std::string, Generator>> generators = {
      {"flash", [&](const Matrix& r) { return flash_gen(r); }},
      {"continuous", [&](const Matrix& r) { return cont_gen(r); }}};
  for (const auto& [name, gen] : generators) {
    const Matrix r1 = random_density(rng, line.points);
    const Matrix r2 = random_density(rng, line.points);
    const double p = uniform01(rng);
    const Matrix out = gen(r1);
    const double scale = std::max(1.0, out.cwiseAbs().maxCoeff());
    record(name + " generator trace annihilation", std::abs(out.trace()) / scale, 1e-10);
    record(name + " generator Hermiticity", hermiticity_defect(out) / scale, 1e-10);
    const Matrix lin = gen(p * r1 + (1.0 - p) * r2) - p * out - (1.0 - p) * gen(r2);
    record(name + " generator linearity", lin.cwiseAbs().maxCoeff() / scale, 1e-12);
    const ReferenceSeries ref = reference_integrate(gen, r1, 0.5, 0.005);
    double drift = 0.0, neg = 0.0;
    for (const auto& s : ref.states) {
      drift = std::max(drift, std::abs(s.trace() - 1.0));
      neg = std::max(neg, -min_eigenvalue(0.5 * (s + s.adjoint())));
    }
    record(name + " RK4 trace drift", drift, 1e-8);
    record(name + " RK4 positivity", neg, 1e-10);
  }

  // CP of exp(t L) on a four-point grid via the Choi matrix.
  GridSpec tiny;
  tiny.points = 4;
  tiny.spacing = 1.0;
  const FlashGenerator tiny_flash(FlashModelParams{1.0, 1.0, one, tiny, true}, build_free_hamiltonian(tiny, one));
  const ContinuousGravityParams tiny_p{tiny, one, 1.0, 1e-3};
  const GravityGenerator tiny_cont(
      build_feedback_spec(build_mass_measurement_spec(tiny_p, NoiseKernel::dp(tiny, one, 1.0)), tiny_p),
      build_free_hamiltonian(tiny, one));
  const ContinuousMeasurementSpec dense_spec = ContinuousMeasurementSpec::dense(
      {random_hermitian(rng, 4), random_hermitian(rng, 4)}, (RealMatrix(2, 2) << 1.0, 0.2, 0.2, 0.5).finished(),
      {random_hermitian(rng, 4), random_hermitian(rng, 4)}, 1e-3);
  const std::vector<std::pair<std::string, Generator>> small = {
      {"flash", [&](const Matrix& r) { return tiny_flash(r); }},
      {"continuous", [&](const Matrix& r) { return tiny_cont(r); }},
      {"feedback master equation", [&](const Matrix& r) { return averaged_feedback_generator(r, dense_spec); }}};
  for (const auto& [name, gen] : small) {
    const Matrix choi = choi_matrix([&](const Matrix& e) { return integrate_to(gen, e, 0.05, 0.001); }, 4);
    record(name + " CP of exp(tL) (Choi, dim 4)",
           std::max(0.0, -min_eigenvalue(0.5 * (choi + choi.adjoint()))), 1e-10);
  }

  // Trajectory norm and positivity under repeated Kraus steps.
  {
    const ContinuousMeasurementSpec spec = dense_spec.with_dt(1e-4);
    Matrix rho = random_density(rng, 4);
    double drift = 0.0, neg = 0.0;
    for (int n = 0; n < 500; ++n) {
      const ContinuousStep step = continuous_measurement_step(rho, spec, rng);
      rho = feedback_conjugation_step(step.rho, step.signal, spec);
      drift = std::max(drift, std::abs(rho.trace() - 1.0));
      neg = std::max(neg, -min_eigenvalue(0.5 * (rho + rho.adjoint())));
    }
    record("trajectory trace", drift, 1e-8);
    record("trajectory positivity", neg, 1e-8);
  }

  // Ensemble determinism across worker counts, and merge associativity.
  {
    EnsembleSpec spec;
    spec.model = std::make_shared<FlashTrajectoryModel>(flash, build_free_hamiltonian(line, one),
                                                        two_blob_state(line, 3.0, 0.7));
    spec.trajectories = 48;
    spec.seed = 99;
    spec.sample_dt = 0.5;
    spec.samples = 2;
    spec.observables = position_observables(line, 1.0);
    spec.workers = 1;
    const std::string serial = to_json(run_ensemble(spec)).dump();
    spec.workers = 4;
    const EnsembleResult parallel = run_ensemble(spec);
    record("ensemble determinism (1 vs 4 workers)", serial == to_json(parallel).dump() ? 0.0 : 1.0, 0.0);
    EnsembleSums left = accumulate_trajectories(spec, 0, 10);
    left.merge(accumulate_trajectories(spec, 10, 48));
    EnsembleSums right = accumulate_trajectories(spec, 0, 30);
    right.merge(accumulate_trajectories(spec, 30, 48));
    record("ensemble merge associativity", left == right ? 0.0 : 1.0, 0.0);
    double herm = 0.0, trace = 0.0;
    for (const auto& r : parallel.rho_mean) {
      herm = std::max(herm, hermiticity_defect(r));
      trace = std::max(trace, std::abs(r.trace() - 1.0));
    }
    record("ensemble mean Hermiticity", herm, 1e-10);
    record("ensemble mean trace", trace, 1e-8);
  }
  return checks;
}

}  // namespace semigrav
