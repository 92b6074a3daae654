#include "mfrate/harness.hpp"

#include <algorithm>
#include <cfloat>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <fftw3.h>

#include <json.hpp>

#include "mfrate/bogoliubov.hpp"
#include "mfrate/combinatorics.hpp"
#include "mfrate/errors.hpp"
#include "mfrate/hartree.hpp"

#ifndef MFRATE_VERSION
#define MFRATE_VERSION "0.0.0"
#endif

namespace mfrate {

using nlohmann::json;

namespace {

void note(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

long step_index(double t, double dt, const char* what) {
  const double steps = t / dt;
  const double rounded = std::round(steps);
  if (std::abs(steps - rounded) > 1e-9 * std::max(1.0, rounded)) {
    throw ConfigError(std::string(what) + ": time " + format_number(t) + " is not a multiple of dt = " +
                      format_number(dt));
  }
  return static_cast<long>(rounded);
}

// ---- JSON helpers -------------------------------------------------------

void allow_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; });
    if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

InitialStateSpec::Kind initial_kind_from_string(const std::string& s) {
  if (s == "gaussian") return InitialStateSpec::Kind::gaussian;
  if (s == "sech") return InitialStateSpec::Kind::sech;
  throw ConfigError("unknown initial state kind '" + s + "'");
}

std::string to_string(InitialStateSpec::Kind k) { return k == InitialStateSpec::Kind::gaussian ? "gaussian" : "sech"; }

InitialStateSpec parse_initial(const json& j, const std::string& where) {
  allow_keys(j, {"kind", "width", "center", "momentum"}, where);
  InitialStateSpec s;
  std::string kind = "gaussian";
  read(j, "kind", kind, where);
  s.kind = initial_kind_from_string(kind);
  read(j, "width", s.width, where);
  read(j, "center", s.center, where);
  read(j, "momentum", s.momentum, where);
  return s;
}

json initial_json(const InitialStateSpec& s) {
  return json{{"kind", to_string(s.kind)}, {"width", s.width}, {"center", s.center}, {"momentum", s.momentum}};
}

PotentialSpec parse_potential(const json& j) {
  allow_keys(j, {"kind", "amplitude", "width", "softening", "harmonics"}, "potential");
  std::string kind = "gaussian";
  double amplitude = 1.0, width = 1.0, softening = 1.0;
  std::vector<int> harmonics{1};
  read(j, "kind", kind, "potential");
  read(j, "amplitude", amplitude, "potential");
  read(j, "width", width, "potential");
  read(j, "softening", softening, "potential");
  read(j, "harmonics", harmonics, "potential");
  switch (potential_kind_from_string(kind)) {
    case PotentialSpec::Kind::zero: return PotentialSpec::zero();
    case PotentialSpec::Kind::gaussian: return PotentialSpec::gaussian(amplitude, width);
    case PotentialSpec::Kind::cosine: return PotentialSpec::cosine(amplitude, harmonics);
    case PotentialSpec::Kind::soft_coulomb: return PotentialSpec::soft_coulomb(amplitude, softening);
  }
  throw ConfigError("potential: unreachable kind");
}

json potential_json(const PotentialSpec& p) {
  return json{{"kind", to_string(p.kind)},      {"amplitude", p.amplitude}, {"width", p.width},
              {"softening", p.softening},       {"harmonics", p.harmonics}};
}

// ---- small numerics -----------------------------------------------------

double boundary_mass(const MarginalDensity& gamma) {
  const GridSpec& g = gamma.grid;
  const int m = g.points();
  const double edge = g.length() / 8.0;
  double s = 0.0;
  for (int j = 0; j < m; ++j) {
    const double x = g.position(j);
    if (x < edge || x >= g.length() - edge) s += gamma.matrix(j, j).real();
  }
  return s * g.spacing();
}

double spread_ratio(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*hi == 0.0) return 1.0;  // all zero: no spread
  return *hi / *lo;
}

ReportItem make_item(std::string name, bool ok, double measured, double threshold, std::string detail = {}) {
  return {std::move(name), ok ? Status::pass : Status::fail, measured, threshold, std::move(detail)};
}

std::string join_numbers(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_number(v[i]);
  return s;
}

// ln d_N by a direct long double sum of ln k; an independent route to the
// series used by log_dN for large N.
double log_dN_direct(int n) {
  long double s = 0.0L;
  for (int k = 2; k <= n; ++k) s += std::log(static_cast<long double>(k));
  const long double x = n;
  return static_cast<double>(0.5L * s - 0.5L * x * std::log(x) + 0.5L * x);
}

}  // namespace

// ---- initial states -------------------------------------------------------

Wavefunction make_initial_state(const GridSpec& grid, const InitialStateSpec& spec) {
  if (!(spec.width > 0.0)) throw ConfigError("initial state: width must be positive");
  const double c = spec.center < 0.0 ? 0.5 * grid.length() : spec.center;
  CVector a(grid.points());
  for (int j = 0; j < grid.points(); ++j) {
    const double u = (grid.position(j) - c) / spec.width;
    const double envelope = spec.kind == InitialStateSpec::Kind::gaussian ? std::exp(-0.5 * u * u) : 1.0 / std::cosh(u);
    a[j] = std::polar(envelope, spec.momentum * grid.position(j));
  }
  return Wavefunction{grid, a, 0.0}.normalized();
}

// ---- configuration ------------------------------------------------------

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  allow_keys(j,
             {"grid", "potential", "initial_state", "particles", "time", "bogoliubov", "fock", "combinatorics",
              "tolerances", "memory", "record_k2", "output_dir", "seed"},
             "config");
  ExperimentConfig c;
  if (j.contains("grid")) {
    allow_keys(j["grid"], {"points", "length"}, "grid");
    read(j["grid"], "points", c.grid_points, "grid");
    read(j["grid"], "length", c.length, "grid");
  }
  if (j.contains("potential")) c.potential = parse_potential(j["potential"]);
  if (j.contains("initial_state")) c.initial = parse_initial(j["initial_state"], "initial_state");
  read(j, "particles", c.particles, "config");
  if (j.contains("time")) {
    const json& t = j["time"];
    allow_keys(t, {"horizon", "dt", "sample_times", "fit_time", "secondary_fit_time"}, "time");
    read(t, "horizon", c.horizon, "time");
    read(t, "dt", c.dt, "time");
    read(t, "sample_times", c.sample_times, "time");
    read(t, "fit_time", c.fit_time, "time");
    read(t, "secondary_fit_time", c.secondary_fit_time, "time");
  }
  if (j.contains("bogoliubov")) {
    const json& b = j["bogoliubov"];
    allow_keys(b, {"e2_couplings", "e2_time"}, "bogoliubov");
    read(b, "e2_couplings", c.e2_couplings, "bogoliubov");
    read(b, "e2_time", c.e2_time, "bogoliubov");
  }
  if (j.contains("fock")) {
    const json& f = j["fock"];
    allow_keys(f,
               {"modes", "length", "cutoff", "cutoff_step", "dt", "initial_state", "moment_couplings",
                "residual_couplings", "residual_time", "check_times", "moment_time", "probe_trials", "probe_power"},
               "fock");
    read(f, "modes", c.fock.modes, "fock");
    read(f, "length", c.fock.length, "fock");
    read(f, "cutoff", c.fock.cutoff, "fock");
    read(f, "cutoff_step", c.fock.cutoff_step, "fock");
    read(f, "dt", c.fock.dt, "fock");
    if (f.contains("initial_state")) c.fock.initial = parse_initial(f["initial_state"], "fock.initial_state");
    read(f, "moment_couplings", c.fock.moment_couplings, "fock");
    read(f, "residual_couplings", c.fock.residual_couplings, "fock");
    read(f, "residual_time", c.fock.residual_time, "fock");
    read(f, "check_times", c.fock.check_times, "fock");
    read(f, "moment_time", c.fock.moment_time, "fock");
    read(f, "probe_trials", c.fock.probe_trials, "fock");
    read(f, "probe_power", c.fock.probe_power, "fock");
  }
  if (j.contains("combinatorics")) {
    const json& k = j["combinatorics"];
    allow_keys(k, {"mass_couplings", "weighted_couplings", "krasikov_couplings", "fock_check_n", "fock_check_cutoff"},
               "combinatorics");
    read(k, "mass_couplings", c.combinatorics.mass_couplings, "combinatorics");
    read(k, "weighted_couplings", c.combinatorics.weighted_couplings, "combinatorics");
    read(k, "krasikov_couplings", c.combinatorics.krasikov_couplings, "combinatorics");
    read(k, "fock_check_n", c.combinatorics.fock_check_n, "combinatorics");
    read(k, "fock_check_cutoff", c.combinatorics.fock_check_cutoff, "combinatorics");
  }
  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    Tolerances& tol = c.tolerances;
    allow_keys(t,
               {"leakage", "cross_identity", "kernel_agreement", "cutoff_agreement", "parity", "residual_ratio_low",
                "residual_ratio_high", "moment_spread", "e2_spread", "boundary_mass", "a0_relative",
                "weighted_spread", "fock_coefficients"},
               "tolerances");
    read(t, "leakage", tol.leakage, "tolerances");
    read(t, "cross_identity", tol.cross_identity, "tolerances");
    read(t, "kernel_agreement", tol.kernel_agreement, "tolerances");
    read(t, "cutoff_agreement", tol.cutoff_agreement, "tolerances");
    read(t, "parity", tol.parity, "tolerances");
    read(t, "residual_ratio_low", tol.residual_ratio_low, "tolerances");
    read(t, "residual_ratio_high", tol.residual_ratio_high, "tolerances");
    read(t, "moment_spread", tol.moment_spread, "tolerances");
    read(t, "e2_spread", tol.e2_spread, "tolerances");
    read(t, "boundary_mass", tol.boundary_mass, "tolerances");
    read(t, "a0_relative", tol.a0_relative, "tolerances");
    read(t, "weighted_spread", tol.weighted_spread, "tolerances");
    read(t, "fock_coefficients", tol.fock_coefficients, "tolerances");
  }
  if (j.contains("memory")) {
    allow_keys(j["memory"], {"amplitude_budget", "fock_dimension_budget"}, "memory");
    read(j["memory"], "amplitude_budget", c.amplitude_budget, "memory");
    read(j["memory"], "fock_dimension_budget", c.fock_dimension_budget, "memory");
  }
  read(j, "record_k2", c.record_k2, "config");
  read(j, "output_dir", c.output_dir, "config");
  read(j, "seed", c.seed, "config");
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate(const ExperimentConfig& c) {
  const GridSpec grid = c.grid();
  if (!(c.dt > 0.0)) throw ConfigError("time.dt must be positive");
  if (!(c.horizon > 0.0)) throw ConfigError("time.horizon must be positive");
  if (c.sample_times.empty()) throw ConfigError("time.sample_times must not be empty");
  const long last = step_index(c.horizon, c.dt, "time.horizon");
  for (double t : c.sample_times) {
    const long s = step_index(t, c.dt, "time.sample_times");
    if (s < 1 || s > last) throw ConfigError("time.sample_times: " + format_number(t) + " outside (0, horizon]");
  }
  auto has_time = [&](double t) {
    return std::any_of(c.sample_times.begin(), c.sample_times.end(), [&](double s) { return std::abs(s - t) < 1e-12; });
  };
  if (!has_time(c.fit_time)) throw ConfigError("time.fit_time must be one of the sample times");
  if (!has_time(c.secondary_fit_time)) throw ConfigError("time.secondary_fit_time must be one of the sample times");
  const long e2_step = step_index(c.e2_time, c.dt, "bogoliubov.e2_time");
  if (e2_step < 0 || e2_step > last) throw ConfigError("bogoliubov.e2_time outside [0, horizon]");
  for (int n : c.e2_couplings) {
    if (n < 2) throw ConfigError("bogoliubov.e2_couplings: N must be >= 2");
  }
  if (!(c.initial.width > 0.0)) throw ConfigError("initial_state.width must be positive");

  if (c.particles.empty()) throw ConfigError("particles must not be empty");
  for (int n : c.particles) {
    if (n < 2) throw ConfigError("particles: N must be >= 2, got " + std::to_string(n));
    const std::size_t size = tensor_size(grid.points(), n);
    if (size > c.amplitude_budget) {
      throw CapacityError("particles: N = " + std::to_string(n) + " needs M^N = " + std::to_string(size) +
                          " amplitudes, above the budget of " + std::to_string(c.amplitude_budget));
    }
  }

  const FockConfig& f = c.fock;
  const GridSpec lattice = c.fock_lattice();
  (void)lattice;
  if (f.cutoff < 3) throw ConfigError("fock.cutoff must be >= 3");
  if (f.cutoff_step < 1) throw ConfigError("fock.cutoff_step must be >= 1");
  if (!(f.dt > 0.0)) throw ConfigError("fock.dt must be positive");
  if (!(f.initial.width > 0.0)) throw ConfigError("fock.initial_state.width must be positive");
  for (double t : f.check_times) {
    if (step_index(t, f.dt, "fock.check_times") < 1) throw ConfigError("fock.check_times must be positive");
  }
  if (step_index(f.residual_time, f.dt, "fock.residual_time") < 1) throw ConfigError("fock.residual_time must be positive");
  if (step_index(f.moment_time, f.dt, "fock.moment_time") < 1) throw ConfigError("fock.moment_time must be positive");
  for (const auto* list : {&f.moment_couplings, &f.residual_couplings}) {
    for (int n : *list) {
      if (n < 1) throw ConfigError("fock couplings must be >= 1");
    }
  }
  if (f.probe_trials < 1 || f.probe_power < 0) throw ConfigError("fock.probe_trials >= 1 and probe_power >= 0 required");

  const CombinatoricsConfig& k = c.combinatorics;
  for (const auto* list : {&k.mass_couplings, &k.weighted_couplings}) {
    for (int n : *list) {
      if (n < 1) throw ConfigError("combinatorics couplings must be >= 1");
    }
  }
  for (int n : k.krasikov_couplings) {
    if (n < 2) throw ConfigError("combinatorics.krasikov_couplings must be >= 2");
  }
  if (k.fock_check_n < 1 || k.fock_check_cutoff < k.fock_check_n) {
    throw ConfigError("combinatorics: need 1 <= fock_check_n <= fock_check_cutoff");
  }
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["grid"] = {{"points", c.grid_points}, {"length", c.length}};
  j["potential"] = potential_json(c.potential);
  j["initial_state"] = initial_json(c.initial);
  j["particles"] = c.particles;
  j["time"] = {{"horizon", c.horizon},
               {"dt", c.dt},
               {"sample_times", c.sample_times},
               {"fit_time", c.fit_time},
               {"secondary_fit_time", c.secondary_fit_time}};
  j["bogoliubov"] = {{"e2_couplings", c.e2_couplings}, {"e2_time", c.e2_time}};
  const FockConfig& f = c.fock;
  j["fock"] = {{"modes", f.modes},
               {"length", f.length},
               {"cutoff", f.cutoff},
               {"cutoff_step", f.cutoff_step},
               {"dt", f.dt},
               {"initial_state", initial_json(f.initial)},
               {"moment_couplings", f.moment_couplings},
               {"residual_couplings", f.residual_couplings},
               {"residual_time", f.residual_time},
               {"check_times", f.check_times},
               {"moment_time", f.moment_time},
               {"probe_trials", f.probe_trials},
               {"probe_power", f.probe_power}};
  const CombinatoricsConfig& k = c.combinatorics;
  j["combinatorics"] = {{"mass_couplings", k.mass_couplings},
                        {"weighted_couplings", k.weighted_couplings},
                        {"krasikov_couplings", k.krasikov_couplings},
                        {"fock_check_n", k.fock_check_n},
                        {"fock_check_cutoff", k.fock_check_cutoff}};
  const Tolerances& t = c.tolerances;
  j["tolerances"] = {{"leakage", t.leakage},
                     {"cross_identity", t.cross_identity},
                     {"kernel_agreement", t.kernel_agreement},
                     {"cutoff_agreement", t.cutoff_agreement},
                     {"parity", t.parity},
                     {"residual_ratio_low", t.residual_ratio_low},
                     {"residual_ratio_high", t.residual_ratio_high},
                     {"moment_spread", t.moment_spread},
                     {"e2_spread", t.e2_spread},
                     {"boundary_mass", t.boundary_mass},
                     {"a0_relative", t.a0_relative},
                     {"weighted_spread", t.weighted_spread},
                     {"fock_coefficients", t.fock_coefficients}};
  j["memory"] = {{"amplitude_budget", c.amplitude_budget}, {"fock_dimension_budget", c.fock_dimension_budget}};
  j["record_k2"] = c.record_k2;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  return j.dump(2);
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : config_to_json(config)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string code_version() { return MFRATE_VERSION; }

std::string floating_point_environment() {
  std::ostringstream s;
  s << "compiler=" << __VERSION__ << "; fftw=" << fftw_version << "; FLT_EVAL_METHOD=" << FLT_EVAL_METHOD
    << "; long_double_digits=" << LDBL_MANT_DIG << "; fft_planning=FFTW_ESTIMATE";
  return s.str();
}

// ---- rate fit -------------------------------------------------------------

RateFit fit_rate(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw ConfigError("fit_rate: need at least 3 points");
  std::vector<double> x, y;
  for (const auto& [n, v] : points) {
    if (!(n > 0.0) || !(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError("fit_rate: N and values must be positive and finite");
    }
    x.push_back(std::log(n));
    y.push_back(std::log(v));
  }
  const double k = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / k;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ConfigError("fit_rate: need at least two distinct N");
  RateFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += r * r;
  }
  f.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  f.points = static_cast<int>(x.size());
  return f;
}

// ---- convergence run --------------------------------------------------------

ConvergenceResult run_convergence(const ExperimentConfig& config, const Logger& log) {
  validate(config);
  const GridSpec grid = config.grid();
  const PotentialSpec& v = config.potential;
  const Wavefunction phi0 = make_initial_state(grid, config.initial);
  const double dt = config.dt;

  std::vector<long> sample_steps;
  for (double t : config.sample_times) sample_steps.push_back(step_index(t, dt, "sample time"));
  std::sort(sample_steps.begin(), sample_steps.end());
  sample_steps.erase(std::unique(sample_steps.begin(), sample_steps.end()), sample_steps.end());
  long stride = 0;
  for (long s : sample_steps) stride = std::gcd(stride, s);
  const long last_step = sample_steps.back();
  const double horizon = static_cast<double>(last_step) * dt;

  note(log, "hartree: " + std::to_string(last_step) + " steps");
  const HartreeTrajectory traj = evolve_hartree(phi0, v, horizon, dt, 1);
  ConvergenceResult result;
  {
    const double e0 = hartree_energy(phi0, v);
    for (const HartreeSample& s : traj.samples()) {
      result.hartree.max_mass_drift = std::max(result.hartree.max_mass_drift, std::abs(s.phi.norm() - 1.0));
      result.hartree.max_h1_norm = std::max(result.hartree.max_h1_norm, h1_norm(s.phi));
    }
    result.hartree.energy_drift = std::abs(hartree_energy(traj.final_state(), v) - e0) / std::max(std::abs(e0), 1e-300);
  }

  note(log, "bogoliubov: kernel evolution");
  std::map<long, BogoliubovPair> pairs;
  evolve_pair(traj, horizon, dt, static_cast<int>(stride), [&](const BogoliubovPair& p) {
    const long s = std::lround((p.time - traj.start_time()) / dt);
    if (std::binary_search(sample_steps.begin(), sample_steps.end(), s)) pairs.emplace(s, p);
  });

  std::vector<int> ns = config.particles;
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  const double h = grid.spacing();

  for (int n : ns) {
    std::vector<RunRecord> rows;
    for (long s : sample_steps) {
      RunRecord r;
      r.particles = n;
      r.time = static_cast<double>(s) * dt;
      rows.push_back(r);
    }
    note(log, "nbody: N = " + std::to_string(n) + " (" + std::to_string(tensor_size(grid.points(), n)) + " amplitudes)");
    try {
      const NBodyState psi0 = factorized_state(phi0, n, config.amplitude_budget);
      const double e0 = nbody_energy(psi0, v);
      evolve_nbody(psi0, v, horizon, dt, static_cast<int>(stride), [&](const NBodyState& psi) {
        const long s = std::lround((psi.time - psi0.time) / dt);
        const auto it = std::lower_bound(sample_steps.begin(), sample_steps.end(), s);
        if (it == sample_steps.end() || *it != s) return;
        RunRecord& r = rows[static_cast<std::size_t>(it - sample_steps.begin())];
        const Wavefunction phi_t = traj.at(psi.time);
        const MarginalDensity gamma = reduce_marginal(psi, 1);
        const MarginalDensity rho = pure_state_density(phi_t);
        r.trace_err = trace_distance(gamma, rho);
        r.hs_err = hs_distance(gamma, rho);
        const E2Correction e2 = e2_correction(pairs.at(s), phi0, phi_t, n);
        r.e2_norm = e2.l2_norm();
        r.e_minus_e2_norm = (gamma.matrix - rho.matrix - e2.matrix).norm() * h;
        r.energy_drift = std::abs(nbody_energy(psi, v) - e0) / std::max(std::abs(e0), 1e-300);
        r.sym_defect = std::max(symmetry_defect(psi, 0, 1), symmetry_defect(psi, 0, n - 1));
        r.boundary_mass = boundary_mass(gamma);
        if (config.record_k2 && n >= 3) {
          const MarginalDensity gamma2 = reduce_marginal(psi, 2);
          const int m = grid.points();
          CVector pp(m * m);
          for (int i = 0; i < m; ++i) pp.segment(i * m, m) = phi_t.amplitudes[i] * phi_t.amplitudes;
          const MarginalDensity rho2{grid, pp * pp.adjoint(), 2};
          r.trace_err_k2 = trace_distance(gamma2, rho2);
          r.hs_err_k2 = hs_distance(gamma2, rho2);
        }
      });
    } catch (const std::exception& e) {
      result.failures.push_back("N = " + std::to_string(n) + ": " + e.what());
      note(log, "nbody: N = " + std::to_string(n) + " failed: " + e.what());
    }
    result.records.insert(result.records.end(), rows.begin(), rows.end());
  }

  auto fit_at = [&](double t, RateFit& out) {
    std::vector<std::pair<double, double>> pts;
    for (const RunRecord& r : result.records) {
      if (std::abs(r.time - t) < 1e-12 && std::isfinite(r.trace_err) && r.trace_err > 0.0) {
        pts.emplace_back(r.particles, r.trace_err);
      }
    }
    if (pts.size() < 3) return false;
    out = fit_rate(pts);
    return true;
  };
  result.fit_valid = fit_at(static_cast<double>(step_index(config.fit_time, dt, "fit")) * dt, result.fit);
  result.secondary_fit_valid =
      fit_at(static_cast<double>(step_index(config.secondary_fit_time, dt, "fit")) * dt, result.secondary_fit);
  return result;
}

// ---- output -----------------------------------------------------------------

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string records_csv(const std::vector<RunRecord>& records) {
  std::string out = "N,t,trace_err,hs_err,e2_norm,e_minus_e2_norm,energy_drift,sym_defect,boundary_mass\n";
  for (const RunRecord& r : records) {
    out += std::to_string(r.particles) + "," + format_number(r.time) + "," + format_number(r.trace_err) + "," +
           format_number(r.hs_err) + "," + format_number(r.e2_norm) + "," + format_number(r.e_minus_e2_norm) + "," +
           format_number(r.energy_drift) + "," + format_number(r.sym_defect) + "," + format_number(r.boundary_mass) +
           "\n";
  }
  return out;
}

std::string records_k2_csv(const std::vector<RunRecord>& records) {
  std::string out = "N,t,trace_err_k2,hs_err_k2\n";
  for (const RunRecord& r : records) {
    out += std::to_string(r.particles) + "," + format_number(r.time) + "," + format_number(r.trace_err_k2) + "," +
           format_number(r.hs_err_k2) + "\n";
  }
  return out;
}

std::string to_string(Status s) {
  switch (s) {
    case Status::pass: return "pass";
    case Status::fail: return "fail";
    case Status::inconclusive: return "inconclusive";
  }
  return "fail";
}

int exit_code(Status s) {
  switch (s) {
    case Status::pass: return 0;
    case Status::fail: return 1;
    case Status::inconclusive: return 2;
  }
  return 1;
}

Status combine(Status a, Status b) {
  if (a == Status::fail || b == Status::fail) return Status::fail;
  if (a == Status::inconclusive || b == Status::inconclusive) return Status::inconclusive;
  return Status::pass;
}

Status CrossReport::overall() const {
  Status s = Status::pass;
  for (const ReportItem& i : items) s = combine(s, i.status);
  return s;
}

// ---- combinatorics items ----------------------------------------------------

std::vector<ReportItem> combinatorics_items(const ExperimentConfig& config) {
  const CombinatoricsConfig& k = config.combinatorics;
  const Tolerances& tol = config.tolerances;
  std::vector<ReportItem> items;

  std::set<int> all(k.mass_couplings.begin(), k.mass_couplings.end());
  all.insert(k.weighted_couplings.begin(), k.weighted_couplings.end());
  double worst_a0 = 0.0;
  double worst_mass = 0.0;
  for (int n : all) {
    const CoefficientTable t = a_coeffs(n);
    worst_a0 = std::max(worst_a0, std::abs(t.value(0) * std::exp(log_dN_direct(n)) - 1.0));
    worst_mass = std::max(worst_mass, t.total_mass());
  }
  items.push_back(make_item("A_0 = 1/d_N (relative error)", worst_a0 <= tol.a0_relative, worst_a0, tol.a0_relative));
  items.push_back(make_item("sum_{m<N} |A_m|^2 <= 1", worst_mass <= 1.0, worst_mass, 1.0));

  std::vector<double> scaled;
  for (int n : k.weighted_couplings) scaled.push_back(weighted_sum(n).scaled);
  const double ratio = scaled.empty() ? 1.0 : spread_ratio(scaled);
  items.push_back(make_item("sqrt(N) sum |A_m|^2/(m+1) max/min", ratio <= tol.weighted_spread, ratio,
                            tol.weighted_spread, "scaled values " + join_numbers(scaled)));

  int violations = 0;
  int checked = 0;
  double worst_margin = -std::numeric_limits<double>::infinity();
  double worst_constant = 0.0;
  for (int n : k.krasikov_couplings) {
    const CoefficientTable t = a_coeffs(n);
    for (int m = 1; m <= n - 1; ++m) {
      const KrasikovCheck c = krasikov_check(n, m);
      ++checked;
      if (!c.ok) ++violations;
      worst_margin = std::max(worst_margin, c.log_value - c.log_bound);
      worst_constant = std::max(worst_constant, std::abs(t.value(m)) * std::pow(n, 0.25) * std::pow(m, 0.25));
    }
  }
  items.push_back(make_item("Krasikov bound strict", violations == 0, violations, 0.0,
                            std::to_string(checked) + " (N, m) pairs; max ln(value/bound) = " +
                                format_number(worst_margin) + "; max |A_m| N^(1/4) m^(1/4) = " +
                                format_number(worst_constant)));

  {
    const int n = k.fock_check_n;
    const FockSpacePtr space = build_basis(1, k.fock_check_cutoff, config.fock_dimension_budget);
    CVector phi(1);
    phi[0] = 1.0;
    const FockVector psi = product_state(phi, n - 1, space);
    const WeylResult w = weyl_apply(-std::sqrt(static_cast<double>(n)) * phi, psi, tol.leakage);
    const CoefficientTable t = a_coeffs(n);
    double worst = 0.0;
    for (int m = 0; m < n; ++m) worst = std::max(worst, std::abs(std::sqrt(w.state.sector_mass(m)) - std::abs(t.value(m))));
    ReportItem item = make_item("A_m vs single-mode Weyl (Fock engine)", worst <= tol.fock_coefficients, worst,
                                tol.fock_coefficients, "N = " + std::to_string(n) + ", leakage " + format_number(w.leakage));
    if (!w.reliable) item.status = Status::inconclusive;
    items.push_back(item);
  }
  return items;
}

// ---- Bogoliubov E2 scaling --------------------------------------------------

E2Scaling e2_scaling(const ExperimentConfig& config) {
  validate(config);
  const GridSpec grid = config.grid();
  const Wavefunction phi0 = make_initial_state(grid, config.initial);
  const HartreeTrajectory traj = evolve_hartree(phi0, config.potential, config.e2_time, config.dt, 1);
  const BogoliubovPair pair = evolve_pair(traj, config.e2_time, config.dt);
  const Wavefunction& phi_t = traj.final_state();
  E2Scaling out;
  std::vector<double> values;
  for (int n : config.e2_couplings) {
    const double v = n * e2_correction(pair, phi0, phi_t, n).l2_norm();
    out.scaled.emplace_back(n, v);
    values.push_back(v);
  }
  out.spread = values.empty() ? 0.0 : spread_ratio(values) - 1.0;
  return out;
}

// ---- cross validation ---------------------------------------------------------

CrossReport cross_validate(const ExperimentConfig& config, const Logger& log) {
  validate(config);
  const FockConfig& f = config.fock;
  const Tolerances& tol = config.tolerances;
  const GridSpec lattice = config.fock_lattice();
  const PotentialSpec& v = config.potential;
  const Wavefunction phi0 = make_initial_state(lattice, f.initial);
  const double dt = f.dt;

  std::vector<long> check_steps;
  for (double t : f.check_times) check_steps.push_back(step_index(t, dt, "fock.check_times"));
  std::sort(check_steps.begin(), check_steps.end());
  long last = check_steps.back();
  last = std::max({last, step_index(f.residual_time, dt, "residual"), step_index(f.moment_time, dt, "moment")});
  const double horizon = static_cast<double>(last) * dt;
  const HartreeTrajectory traj = evolve_hartree(phi0, v, horizon, dt, 1);

  std::map<long, BogoliubovPair> pairs;
  evolve_pair(traj, horizon, dt, 1, [&](const BogoliubovPair& p) {
    const long s = std::lround((p.time - traj.start_time()) / dt);
    if (std::binary_search(check_steps.begin(), check_steps.end(), s)) pairs.emplace(s, p);
  });

  CrossReport report;
  const FockSpacePtr space = build_basis(lattice, f.cutoff, config.fock_dimension_budget);
  const FockSpacePtr wide = build_basis(lattice, f.cutoff + f.cutoff_step, config.fock_dimension_budget);
  note(log, "fock: dimension " + std::to_string(space->dimension()) + " (sweep " + std::to_string(wide->dimension()) + ")");

  // Quadratic dynamics: number moments, parity, leakage, cutoff sweep.
  auto quadratic_run = [&](const FockSpacePtr& sp, std::map<long, FockVector>& states, double& odd, double& leak) {
    const GeneratorSet g(sp, v, 1.0);
    odd = 0.0;
    const Propagation p =
        propagate(vacuum(sp), g, Generator::quadratic, traj, static_cast<double>(check_steps.back()) * dt, dt, 1,
                  [&](const FockVector& psi, double t) {
                    odd = std::max(odd, odd_sector_mass(psi));
                    const long s = std::lround((t - traj.start_time()) / dt);
                    if (std::binary_search(check_steps.begin(), check_steps.end(), s)) states.emplace(s, psi);
                  });
    leak = p.max_leakage;
  };
  std::map<long, FockVector> u2_states, u2_wide;
  double odd = 0.0, odd_wide = 0.0, leak = 0.0, leak_wide = 0.0;
  note(log, "fock: quadratic propagation");
  quadratic_run(space, u2_states, odd, leak);
  quadratic_run(wide, u2_wide, odd_wide, leak_wide);
  const bool leak_ok = leak <= tol.leakage;

  {
    double worst = 0.0;
    double sweep = 0.0;
    std::string detail;
    for (long s : check_steps) {
      const double fock_n = number_functional(u2_states.at(s), 1);
      const double fock_wide = number_functional(u2_wide.at(s), 1);
      const G2NormReport g2 = g2_norm_check(pairs.at(s), fock_n);
      worst = std::max(worst, std::abs(g2.value - fock_n) / (1.0 + g2.value));
      sweep = std::max(sweep, std::abs(fock_n - fock_wide) / (1.0 + fock_wide));
      detail += "t=" + format_number(static_cast<double>(s) * dt) + ": kernel " + format_number(g2.value) + " fock " +
                format_number(fock_n) + "; ";
    }
    ReportItem item = make_item("(b) sum |G2|^2 dx^2 = <U2 Omega, N U2 Omega>", worst <= tol.cross_identity, worst,
                                tol.cross_identity, detail + "leakage " + format_number(leak));
    if (!leak_ok) item.status = Status::inconclusive;
    report.items.push_back(item);
    ReportItem cut = make_item("cutoff sweep (quadratic number moment)", sweep <= tol.cutoff_agreement, sweep,
                               tol.cutoff_agreement, "cutoffs " + std::to_string(f.cutoff) + " and " +
                                                         std::to_string(f.cutoff + f.cutoff_step));
    if (cut.status == Status::fail) cut.status = Status::inconclusive;
    report.items.push_back(cut);
  }

  {
    note(log, "fock: kernel comparison");
    const GeneratorSet g(space, v, 1.0);
    const double hx = lattice.spacing();
    double worst = 0.0;
    double leak_back = 0.0;
    for (long s : check_steps) {
      const double t = static_cast<double>(s) * dt;
      const BogoliubovPair& pair = pairs.at(s);
      std::vector<FockVector> inputs;
      for (int x = 0; x < lattice.points(); ++x) {
        const SparseOp a_x = mode_operator(*space, x, LadderKind::annihilate) * cplx{1.0 / std::sqrt(hx), 0.0};
        inputs.push_back(mfrate::apply(a_x, u2_states.at(s)));
      }
      const std::vector<Propagation> back = propagate_adjoint(inputs, g, Generator::quadratic, traj, t, dt);
      for (int x = 0; x < lattice.points(); ++x) {
        const Propagation& b = back[static_cast<std::size_t>(x)];
        leak_back = std::max(leak_back, b.max_leakage);
        const CVector g2_fock = one_particle_function(b.state);
        worst = std::max(worst, (pair.g2.row(x).transpose() - g2_fock).cwiseAbs().maxCoeff());
      }
    }
    ReportItem item = make_item("(a) G2 kernel vs U2^* a_x U2 Omega", worst <= tol.kernel_agreement, worst,
                                tol.kernel_agreement, "leakage " + format_number(std::max(leak, leak_back)));
    if (leak_back > tol.leakage || !leak_ok) item.status = Status::inconclusive;
    report.items.push_back(item);
  }

  {
    ReportItem item = make_item("(d) parity: odd-sector mass of U2(t) Omega", odd <= tol.parity, odd, tol.parity,
                                "max over every step");
    report.items.push_back(item);
  }

  {
    note(log, "fock: residual R_y");
    std::map<int, double> agg;
    double leak_r = 0.0;
    for (int n : f.residual_couplings) {
      const GeneratorSet g(space, v, n);
      const ResidualField r = residual_r(f.residual_time, g, traj, dt);
      agg[n] = r.aggregates[0];
      leak_r = std::max(leak_r, r.max_leakage);
      note(log, "fock: N = " + std::to_string(n) + " residual " + format_number(r.aggregates[0]));
    }
    std::vector<double> ratios;
    std::string detail;
    bool ok = true;
    for (const auto& [n, a] : agg) {
      const auto next = agg.find(2 * n);
      if (next == agg.end()) continue;
      const double ratio = a / next->second;
      ratios.push_back(ratio);
      ok = ok && ratio >= tol.residual_ratio_low && ratio <= tol.residual_ratio_high;
      detail += std::to_string(n) + "->" + std::to_string(2 * n) + ": " + format_number(ratio) + "; ";
    }
    const double worst = ratios.empty() ? 0.0 : *std::max_element(ratios.begin(), ratios.end(), [](double a, double b) {
      return std::abs(a - 2.0) < std::abs(b - 2.0);
    });
    ReportItem item = make_item("(c) R_y aggregate ratio under N -> 2N", ok && !ratios.empty(), worst,
                                tol.residual_ratio_high, detail + "leakage " + format_number(leak_r));
    if (leak_r > tol.leakage) item.status = Status::inconclusive;
    report.items.push_back(item);
  }

  {
    note(log, "fock: number moments of U(t) Omega");
    std::vector<double> moments;
    double leak_m = 0.0;
    for (int n : f.moment_couplings) {
      const GeneratorSet g(space, v, n);
      const Propagation p = propagate(vacuum(space), g, Generator::full, traj, f.moment_time, dt);
      moments.push_back(number_functional(p.state, 1));
      leak_m = std::max(leak_m, p.max_leakage);
    }
    const double ratio = moments.empty() ? 1.0 : spread_ratio(moments);
    // Mass near the cutoff shifts <N> by at most about cutoff * leakage; the
    // verdict is inconclusive only when that shift could flip it.
    const double shift = f.cutoff * leak_m;
    const auto [lo, hi] = std::minmax_element(moments.begin(), moments.end());
    const bool robust = moments.empty() || leak_m <= tol.leakage ||
                        (*lo > shift && ((*hi + shift) / (*lo - shift) <= tol.moment_spread) ==
                                            ((*hi - shift) / (*lo + shift) <= tol.moment_spread));
    ReportItem item = make_item("<U Omega, N U Omega> max/min over N", ratio <= tol.moment_spread, ratio,
                                tol.moment_spread,
                                "moments " + join_numbers(moments) + "; leakage " + format_number(leak_m));
    if (!robust) item.status = Status::inconclusive;
    report.items.push_back(item);
  }

  {
    std::vector<double> couplings(f.moment_couplings.begin(), f.moment_couplings.end());
    const ProbeReport probe =
        generator_bound_probe(space, v, phi0, couplings, f.probe_power, f.probe_trials, config.seed);
    std::string detail;
    for (const ProbeRow& r : probe.rows) {
      detail += "N=" + format_number(r.coupling) + ": " + format_number(r.quadratic_ratio) + "/" +
                format_number(r.cubic_ratio) + "/" + format_number(r.quartic_ratio) + "; ";
    }
    report.items.push_back(make_item("generator bound ratios uniform in N", probe.bounded, 0.0, 0.0, detail));
  }

  for (ReportItem& item : combinatorics_items(config)) {
    item.name = "(e) " + item.name;
    report.items.push_back(std::move(item));
  }
  return report;
}

// ---- files ------------------------------------------------------------------

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
  if (!out) throw NumericalError("failed writing '" + path + "'");
}

std::string manifest_json(const ExperimentConfig& config, const std::string& command,
                          const std::vector<std::string>& failures, const std::string& extra_json) {
  json j;
  j["command"] = command;
  j["config"] = json::parse(config_to_json(config));
  j["config_hash"] = config_hash(config);
  j["code_version"] = code_version();
  j["floating_point"] = floating_point_environment();
  j["failures"] = failures;
  j["results"] = json::parse(extra_json);
  return j.dump(2) + "\n";
}

}  // namespace mfrate
