// mfrate: command-line driver for the convergence experiments.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfrate/bogoliubov.hpp"
#include "mfrate/combinatorics.hpp"
#include "mfrate/errors.hpp"
#include "mfrate/harness.hpp"
#include "mfrate/hartree.hpp"
#include "mfrate/nbody.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mfrate;

namespace {

// Amplitudes allowed per state in the second-grid rate sweep.
constexpr std::size_t kSecondGridBudget = std::size_t{1} << 24;

struct Common {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON configuration file");
  sub->add_option("--out", c.out_dir, "output directory (overrides output_dir)");
  sub->add_option("--seed", c.seed, "RNG seed (overrides seed)");
  sub->add_flag("--quiet", c.quiet, "suppress progress messages");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? default_config() : load_config(c.config_path);
  if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
  if (c.seed) cfg.seed = *c.seed;
  validate(cfg);
  fs::create_directories(cfg.output_dir);
  return cfg;
}

Logger make_logger(const Common& c) {
  if (c.quiet) return {};
  return [](const std::string& m) { std::cerr << "[mfrate] " << m << "\n"; };
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(cfg.output_dir) / name).string();
}

void finish(const ExperimentConfig& cfg, const std::string& command, const std::vector<std::string>& failures,
            const json& results, Status status, const Common& c) {
  json r = results;
  r["status"] = to_string(status);
  write_text_file(out_path(cfg, command + "_manifest.json"), manifest_json(cfg, command, failures, r.dump()));
  if (!c.quiet) std::cerr << "[mfrate] " << command << ": " << to_string(status) << "\n";
}

long gcd_stride(const ExperimentConfig& cfg) {
  long stride = 0;
  for (double t : cfg.sample_times) stride = std::gcd(stride, std::lround(t / cfg.dt));
  return stride;
}

int cmd_hartree(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const GridSpec grid = cfg.grid();
  const Wavefunction phi0 = make_initial_state(grid, cfg.initial);
  const HartreeTrajectory traj =
      evolve_hartree(phi0, cfg.potential, cfg.horizon, cfg.dt, static_cast<int>(gcd_stride(cfg)));
  const double e0 = hartree_energy(phi0, cfg.potential);
  std::string csv = "t,x,re,im,abs2\n";
  std::string diag = "t,mass,energy,h1_norm\n";
  double mass_drift = 0.0;
  for (const HartreeSample& s : traj.samples()) {
    for (int j = 0; j < grid.points(); ++j) {
      const cplx z = s.phi.amplitudes[j];
      csv += format_number(s.t) + "," + format_number(grid.position(j)) + "," + format_number(z.real()) + "," +
             format_number(z.imag()) + "," + format_number(std::norm(z)) + "\n";
    }
    const double mass = s.phi.norm() * s.phi.norm();
    mass_drift = std::max(mass_drift, std::abs(mass - 1.0));
    diag += format_number(s.t) + "," + format_number(mass) + "," + format_number(hartree_energy(s.phi, cfg.potential)) +
            "," + format_number(h1_norm(s.phi)) + "\n";
  }
  write_text_file(out_path(cfg, "hartree.csv"), csv);
  write_text_file(out_path(cfg, "hartree_diagnostics.csv"), diag);
  const double drift = std::abs(hartree_energy(traj.final_state(), cfg.potential) - e0);
  const Status st = mass_drift <= 1e-10 ? Status::pass : Status::fail;
  finish(cfg, "hartree", {}, {{"max_mass_drift", mass_drift}, {"energy_drift", drift}}, st, c);
  return exit_code(st);
}

json fit_json(const RateFit& f, bool valid) {
  if (!valid) return json{{"valid", false}};
  return json{{"valid", true}, {"slope", f.slope}, {"intercept", f.intercept}, {"r_squared", f.r_squared},
              {"points", f.points}};
}

Status record_status(const ConvergenceResult& r, const Tolerances& tol) {
  Status st = r.failures.empty() ? Status::pass : Status::fail;
  for (const RunRecord& rec : r.records) {
    if (std::isfinite(rec.boundary_mass) && rec.boundary_mass > tol.boundary_mass) {
      st = combine(st, Status::inconclusive);
    }
  }
  return st;
}

int cmd_nbody(const Common& c, int particles) {
  ExperimentConfig cfg = resolve(c);
  cfg.particles = {particles};
  validate(cfg);
  const ConvergenceResult r = run_convergence(cfg, make_logger(c));
  write_text_file(out_path(cfg, "nbody.csv"), records_csv(r.records));
  if (cfg.record_k2) write_text_file(out_path(cfg, "nbody_k2.csv"), records_k2_csv(r.records));
  const Status st = record_status(r, cfg.tolerances);
  finish(cfg, "nbody", r.failures, {{"particles", particles}}, st, c);
  return exit_code(st);
}

// Fit of trace_err at `t` restricted to the particle numbers in `ns`.
std::optional<RateFit> fit_at(const std::vector<RunRecord>& records, double t, const std::set<int>& ns) {
  std::vector<std::pair<double, double>> pts;
  for (const RunRecord& r : records) {
    if (ns.count(r.particles) && std::abs(r.time - t) < 1e-9 && r.trace_err > 0.0) pts.emplace_back(r.particles, r.trace_err);
  }
  if (pts.size() < 3) return std::nullopt;
  return fit_rate(pts);
}

json optional_fit_json(const std::optional<RateFit>& f) { return f ? fit_json(*f, true) : fit_json({}, false); }

int cmd_rate(const Common& c, int second_grid) {
  const ExperimentConfig cfg = resolve(c);
  const ConvergenceResult r = run_convergence(cfg, make_logger(c));
  write_text_file(out_path(cfg, "rate.csv"), records_csv(r.records));
  if (cfg.record_k2) write_text_file(out_path(cfg, "rate_k2.csv"), records_k2_csv(r.records));
  Status st = record_status(r, cfg.tolerances);
  const bool in_band = r.fit_valid && r.fit.slope >= -1.35 && r.fit.slope <= -0.75 && r.fit.r_squared >= 0.98;
  if (!in_band) st = combine(st, Status::fail);
  json results{{"fit", fit_json(r.fit, r.fit_valid)},
               {"secondary_fit", fit_json(r.secondary_fit, r.secondary_fit_valid)},
               {"hartree",
                {{"max_mass_drift", r.hartree.max_mass_drift},
                 {"energy_drift", r.hartree.energy_drift},
                 {"max_h1_norm", r.hartree.max_h1_norm}}}};

  // Same sweep on a second grid, over the particle numbers that fit its budget.
  // Reported only; the status depends on the primary grid.
  if (second_grid > 0) {
    ExperimentConfig other = cfg;
    other.grid_points = second_grid;
    other.particles.clear();
    for (int n : cfg.particles) {
      if (tensor_size(second_grid, n) <= kSecondGridBudget) other.particles.push_back(n);
    }
    if (other.particles.size() >= 3) {
      if (!c.quiet) std::cerr << "[mfrate] second grid: M = " << second_grid << "\n";
      const ConvergenceResult r2 = run_convergence(other, make_logger(c));
      write_text_file(out_path(cfg, "rate_grid2.csv"), records_csv(r2.records));
      const std::set<int> common(other.particles.begin(), other.particles.end());
      results["second_grid"] = {{"points", second_grid},
                                {"particles", other.particles},
                                {"fit", optional_fit_json(fit_at(r2.records, cfg.fit_time, common))},
                                {"primary_fit_same_n", optional_fit_json(fit_at(r.records, cfg.fit_time, common))},
                                {"failures", r2.failures}};
    } else {
      results["second_grid"] = {{"points", second_grid}, {"skipped", "fewer than 3 particle numbers fit the budget"}};
    }
  }
  finish(cfg, "rate", r.failures, results, st, c);
  if (!c.quiet && r.fit_valid) {
    std::cerr << "[mfrate] slope " << format_number(r.fit.slope) << ", R^2 " << format_number(r.fit.r_squared) << "\n";
  }
  return exit_code(st);
}

int cmd_bogoliubov(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const GridSpec grid = cfg.grid();
  const Wavefunction phi0 = make_initial_state(grid, cfg.initial);
  const HartreeTrajectory traj = evolve_hartree(phi0, cfg.potential, cfg.e2_time, cfg.dt, 1);

  // Growth of ||G2||^2 = <U2 Omega, N U2 Omega> with an exponential envelope C e^{Kt}.
  std::string growth = "t,g2_norm_sq,defect_hermitian,defect_symmetric\n";
  std::vector<double> ts, logs;
  const long stride = std::max(1L, std::lround(0.05 / cfg.dt));
  const BogoliubovPair pair = evolve_pair(traj, cfg.e2_time, cfg.dt, static_cast<int>(stride), [&](const BogoliubovPair& p) {
    const double g2 = g2_norm_check(p).value;
    growth += format_number(p.time) + "," + format_number(g2) + "," + format_number(symplectic_defect_hermitian(p)) +
              "," + format_number(symplectic_defect_symmetric(p)) + "\n";
    if (g2 > 0.0) {
      ts.push_back(p.time);
      logs.push_back(std::log(g2));
    }
  });
  write_text_file(out_path(cfg, "bogoliubov_growth.csv"), growth);
  json envelope{{"valid", false}};
  if (ts.size() >= 2) {
    // Smallest K with ln g2(t) <= ln C + K t over the samples, C fixed by the last sample.
    double k = 0.0;
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) k = std::max(k, (logs.back() - logs[i]) / (ts.back() - ts[i]));
    envelope = {{"valid", true}, {"rate_K", k}, {"log_C", logs.back() - k * ts.back()}};
  }

  const double dh = symplectic_defect_hermitian(pair);
  const double ds = symplectic_defect_symmetric(pair);
  const E2Scaling s = e2_scaling(cfg);
  std::string csv = "N,t,e2_norm,n_times_e2_norm\n";
  for (const auto& [n, v] : s.scaled) {
    csv += std::to_string(n) + "," + format_number(cfg.e2_time) + "," + format_number(v / n) + "," + format_number(v) +
           "\n";
  }
  write_text_file(out_path(cfg, "bogoliubov.csv"), csv);
  const double g2 = g2_norm_check(pair).value;
  const bool ok = std::isfinite(g2) && s.spread <= cfg.tolerances.e2_spread && dh <= 1e-6 && ds <= 1e-6;
  const Status st = ok ? Status::pass : Status::fail;
  finish(cfg, "bogoliubov", {},
         {{"e2_spread", s.spread},
          {"symplectic_defect_hermitian", dh},
          {"symplectic_defect_symmetric", ds},
          {"g2_norm", g2},
          {"g2_envelope", envelope}},
         st, c);
  return exit_code(st);
}

std::string items_csv(const std::vector<ReportItem>& items) {
  std::string csv = "item,status,measured,threshold,detail\n";
  for (const ReportItem& i : items) {
    std::string detail = i.detail;
    for (char& ch : detail) {
      if (ch == '"') ch = '\'';
    }
    csv += "\"" + i.name + "\"," + to_string(i.status) + "," + format_number(i.measured) + "," +
           format_number(i.threshold) + ",\"" + detail + "\"\n";
  }
  return csv;
}

json items_json(const std::vector<ReportItem>& items) {
  json a = json::array();
  for (const ReportItem& i : items) {
    a.push_back({{"item", i.name},
                 {"status", to_string(i.status)},
                 {"measured", i.measured},
                 {"threshold", i.threshold},
                 {"detail", i.detail}});
  }
  return a;
}

void print_items(const std::vector<ReportItem>& items, const Common& c) {
  if (c.quiet) return;
  for (const ReportItem& i : items) {
    std::cout << to_string(i.status) << "  " << i.name << "  measured " << format_number(i.measured) << " threshold "
              << format_number(i.threshold) << (i.detail.empty() ? "" : "  [" + i.detail + "]") << "\n";
  }
}

int cmd_fock_check(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const CrossReport r = cross_validate(cfg, make_logger(c));
  write_text_file(out_path(cfg, "fock_check.csv"), items_csv(r.items));
  print_items(r.items, c);
  finish(cfg, "fock-check", {}, {{"items", items_json(r.items)}}, r.overall(), c);
  return exit_code(r.overall());
}

int cmd_laguerre(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  std::set<int> ns(cfg.combinatorics.mass_couplings.begin(), cfg.combinatorics.mass_couplings.end());
  ns.insert(cfg.combinatorics.weighted_couplings.begin(), cfg.combinatorics.weighted_couplings.end());
  std::string csv = "N,m,log_abs_A,sign_A,A\n";
  std::string sums = "N,log_dN,sum_sq,weighted_sum,sqrtN_weighted_sum,tail_bound\n";
  for (int n : ns) {
    const CoefficientTable t = a_coeffs(n);
    for (int m = 0; m < n; ++m) {
      csv += std::to_string(n) + "," + std::to_string(m) + "," + format_number(t.log_abs[m]) + "," +
             std::to_string(t.sign[m]) + "," + format_number(t.value(m)) + "\n";
    }
    const WeightedSum w = weighted_sum(n);
    sums += std::to_string(n) + "," + format_number(log_dN(n)) + "," + format_number(t.total_mass()) + "," +
            format_number(w.value) + "," + format_number(w.scaled) + "," + format_number(w.tail_bound) + "\n";
  }
  write_text_file(out_path(cfg, "laguerre.csv"), csv);
  write_text_file(out_path(cfg, "laguerre_sums.csv"), sums);
  const std::vector<ReportItem> items = combinatorics_items(cfg);
  print_items(items, c);
  Status st = Status::pass;
  for (const ReportItem& i : items) st = combine(st, i.status);
  finish(cfg, "laguerre", {}, {{"items", items_json(items)}}, st, c);
  return exit_code(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field convergence rate experiments"};
  app.require_subcommand(1);
  Common common;
  int particles = 2;
  int second_grid = 20;

  CLI::App* hartree = app.add_subcommand("hartree", "evolve the Hartree equation and dump phi_t");
  CLI::App* nbody = app.add_subcommand("nbody", "single-N exact many-body run");
  CLI::App* rate = app.add_subcommand("rate", "full convergence sweep and rate fit");
  CLI::App* bog = app.add_subcommand("bogoliubov", "pair-kernel evolution and the E2 correction");
  CLI::App* fock = app.add_subcommand("fock-check", "Fock-space cross-validation report");
  CLI::App* lag = app.add_subcommand("laguerre", "Laguerre coefficient table and checks");
  for (CLI::App* s : {hartree, nbody, rate, bog, fock, lag}) add_common(s, common);
  nbody->add_option("--particles,-N", particles, "particle number")->check(CLI::PositiveNumber);
  rate->add_option("--second-grid", second_grid, "grid points of the resolution check (0: skip)")
      ->check(CLI::NonNegativeNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*hartree) return cmd_hartree(common);
    if (*nbody) return cmd_nbody(common, particles);
    if (*rate) return cmd_rate(common, second_grid);
    if (*bog) return cmd_bogoliubov(common);
    if (*fock) return cmd_fock_check(common);
    if (*lag) return cmd_laguerre(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
