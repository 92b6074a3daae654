#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mfrate/fock.hpp"
#include "mfrate/grid.hpp"
#include "mfrate/nbody.hpp"

namespace mfrate {

struct InitialStateSpec {
  enum class Kind { gaussian, sech };
  Kind kind = Kind::gaussian;
  double width = 1.0;
  double center = -1.0;  // negative: L / 2
  double momentum = 0.0;
};

Wavefunction make_initial_state(const GridSpec& grid, const InitialStateSpec& spec);

struct FockConfig {
  int modes = 4;
  double length = 4.0;
  int cutoff = 22;
  int cutoff_step = 2;  // the sweep compares cutoff and cutoff + cutoff_step
  double dt = 1e-3;
  InitialStateSpec initial;
  std::vector<int> moment_couplings{8, 16, 32, 64};
  std::vector<int> residual_couplings{8, 16, 32};
  double residual_time = 0.5;
  std::vector<double> check_times{0.25, 0.5, 1.0};
  double moment_time = 1.0;
  int probe_trials = 8;
  int probe_power = 1;
};

struct CombinatoricsConfig {
  std::vector<int> mass_couplings{2, 10, 100, 1000};
  std::vector<int> weighted_couplings{4, 16, 64, 256, 1024};
  std::vector<int> krasikov_couplings{10, 50, 200};
  int fock_check_n = 6;
  int fock_check_cutoff = 60;
};

struct Tolerances {
  double leakage = 1e-6;
  double cross_identity = 1e-4;    // |sum |G2|^2 - <N>| <= tol (1 + value)
  double kernel_agreement = 1e-4;  // sup |G2 kernel - G2 from the Fock engine|
  double cutoff_agreement = 1e-4;
  double parity = 1e-10;
  double residual_ratio_low = 1.6;
  double residual_ratio_high = 2.4;
  double moment_spread = 3.0;
  double e2_spread = 0.10;
  double boundary_mass = 1e-3;
  double a0_relative = 1e-12;
  double weighted_spread = 10.0;
  double fock_coefficients = 1e-8;
};

struct ExperimentConfig {
  int grid_points = 16;
  double length = 16.0;
  PotentialSpec potential = PotentialSpec::gaussian(1.0, 1.0);
  InitialStateSpec initial;
  std::vector<int> particles{2, 3, 4, 5, 6};
  double horizon = 1.0;
  double dt = 1e-3;
  std::vector<double> sample_times{0.25, 0.5, 0.75, 1.0};
  double fit_time = 1.0;
  double secondary_fit_time = 0.5;
  std::vector<int> e2_couplings{8, 16, 32, 64};
  double e2_time = 1.0;
  FockConfig fock;
  CombinatoricsConfig combinatorics;
  Tolerances tolerances;
  std::size_t amplitude_budget = kDefaultAmplitudeBudget;
  std::size_t fock_dimension_budget = kDefaultFockBudget;
  bool record_k2 = false;
  std::string output_dir = "out";
  std::uint64_t seed = 0;

  GridSpec grid() const { return GridSpec(grid_points, length); }
  GridSpec fock_lattice() const { return GridSpec(fock.modes, fock.length); }
};

ExperimentConfig default_config();

// Unknown keys and out-of-range values raise ConfigError; M^N above the
// amplitude budget raises CapacityError naming the offending N.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
void validate(const ExperimentConfig& config);

// Canonical JSON (sorted keys, every field present).
std::string config_to_json(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);  // FNV-1a 64 of the canonical JSON, hex

std::string code_version();
std::string floating_point_environment();

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct RunRecord {
  int particles = 0;
  double time = 0.0;
  double trace_err = kMissing;
  double hs_err = kMissing;
  double e2_norm = kMissing;
  double e_minus_e2_norm = kMissing;
  double energy_drift = kMissing;
  double sym_defect = kMissing;
  double boundary_mass = kMissing;
  double trace_err_k2 = kMissing;
  double hs_err_k2 = kMissing;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int points = 0;
};

// Least squares of ln(value) against ln(N).
RateFit fit_rate(const std::vector<std::pair<double, double>>& points);

struct HartreeDiagnostics {
  double max_mass_drift = 0.0;
  double energy_drift = 0.0;
  double max_h1_norm = 0.0;
};

using Logger = std::function<void(const std::string&)>;

struct ConvergenceResult {
  std::vector<RunRecord> records;   // ordered by N, then t
  std::vector<std::string> failures;
  HartreeDiagnostics hartree;
  RateFit fit;            // trace_err at fit_time
  RateFit secondary_fit;  // trace_err at secondary_fit_time
  bool fit_valid = false;
  bool secondary_fit_valid = false;
};

/// Hartree once, exact N-body per N, Bogoliubov once; one record per (N, t)
/// at every configured sample time. Per-N module failures leave NaN cells and
/// an entry in `failures`.
ConvergenceResult run_convergence(const ExperimentConfig& config, const Logger& log = {});

std::string format_number(double v);
std::string records_csv(const std::vector<RunRecord>& records);
std::string records_k2_csv(const std::vector<RunRecord>& records);

enum class Status { pass, fail, inconclusive };
std::string to_string(Status s);
int exit_code(Status s);
Status combine(Status a, Status b);

struct ReportItem {
  std::string name;
  Status status = Status::fail;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct CrossReport {
  std::vector<ReportItem> items;
  Status overall() const;
};

/// On the Fock lattice: (a) kernel vs Fock G2, (b) number-moment identity,
/// (c) R_y ratios under N -> 2N, (d) parity, (e) combinatorics, plus the
/// cutoff sweep and the number-moment uniformity over N.
CrossReport cross_validate(const ExperimentConfig& config, const Logger& log = {});

// Combinatorics items alone (no Fock propagation beyond the single-mode check).
std::vector<ReportItem> combinatorics_items(const ExperimentConfig& config);

struct E2Scaling {
  std::vector<std::pair<int, double>> scaled;  // (N, N * ||E2(t)||)
  double spread = 0.0;                          // max / min - 1
};

E2Scaling e2_scaling(const ExperimentConfig& config);

void write_text_file(const std::string& path, const std::string& text);
std::string manifest_json(const ExperimentConfig& config, const std::string& command,
                          const std::vector<std::string>& failures, const std::string& extra_json = "{}");

}  // namespace mfrate
