#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mfrate/errors.hpp"
#include "mfrate/harness.hpp"

using namespace mfrate;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c = default_config();
  c.grid_points = 8;
  c.length = 8.0;
  c.particles = {2, 3};
  c.horizon = 0.2;
  c.dt = 1e-2;
  c.sample_times = {0.1, 0.2};
  c.fit_time = 0.2;
  c.secondary_fit_time = 0.1;
  c.e2_time = 0.2;
  return c;
}

}  // namespace

TEST_CASE("rate fit") {
  std::vector<std::pair<double, double>> pts;
  for (double n : {2.0, 4.0, 8.0, 16.0}) pts.emplace_back(n, 3.0 / n);
  const RateFit f = fit_rate(pts);
  CHECK(f.slope == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(f.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.points == 4);

  pts = {{2.0, 1.0}, {4.0, 0.3}, {8.0, 0.2}};
  const RateFit noisy = fit_rate(pts);
  CHECK(noisy.r_squared < 1.0);
  CHECK(noisy.slope < 0.0);
  CHECK_THROWS_AS(fit_rate({{2.0, 1.0}}), ConfigError);
  CHECK_THROWS_AS(fit_rate({{2.0, 1.0}, {3.0, -1.0}, {4.0, 0.5}}), ConfigError);
}

TEST_CASE("configuration") {
  const ExperimentConfig d = default_config();
  CHECK_NOTHROW(validate(d));
  const ExperimentConfig parsed = parse_config(R"({"grid": {"points": 8, "length": 4.0}, "particles": [2, 3]})");
  CHECK(parsed.grid_points == 8);
  CHECK(parsed.length == 4.0);
  CHECK(parsed.particles == std::vector<int>{2, 3});
  CHECK(parsed.horizon == d.horizon);

  CHECK_THROWS_AS(parse_config(R"({"grid": {"pionts": 8}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"colour": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"grid": {"points": "eight"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"time": {"dt": 0.003, "horizon": 1.0}})"), ConfigError);

  try {
    parse_config(R"({"particles": [2, 8]})");
    FAIL("expected a capacity error");
  } catch (const CapacityError& e) {
    CHECK(std::string(e.what()).find("N = 8") != std::string::npos);
  }

  const std::string canon = config_to_json(d);
  const ExperimentConfig back = parse_config(canon);
  CHECK(config_to_json(back) == canon);
  CHECK(config_hash(back) == config_hash(d));
  ExperimentConfig other = d;
  other.seed = 7;
  CHECK(config_hash(other) != config_hash(d));
  CHECK(config_hash(d).size() == 16);
}

TEST_CASE("provenance strings") {
  CHECK_FALSE(code_version().empty());
  CHECK(floating_point_environment().find("FLT_EVAL_METHOD") != std::string::npos);
  const std::string m = manifest_json(default_config(), "rate", {"N = 9: boom"});
  CHECK(m.find("config_hash") != std::string::npos);
  CHECK(m.find("N = 9: boom") != std::string::npos);
}

TEST_CASE("initial states") {
  const GridSpec g(32, 16.0);
  InitialStateSpec s;
  const Wavefunction a = make_initial_state(g, s);
  CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(a.amplitudes[16]) >= std::abs(a.amplitudes[12]));
  s.kind = InitialStateSpec::Kind::sech;
  s.momentum = 1.0;
  CHECK(make_initial_state(g, s).norm() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("convergence driver without interaction") {
  ExperimentConfig c = small_config();
  c.potential = PotentialSpec::zero();
  const ConvergenceResult r = run_convergence(c);
  CHECK(r.failures.empty());
  CHECK(r.records.size() == 4);
  for (const RunRecord& rec : r.records) {
    CHECK(rec.trace_err <= 1e-9);
    CHECK(rec.e2_norm == 0.0);
    CHECK(rec.sym_defect <= 1e-12);
  }
  CHECK_FALSE(r.fit_valid);
}

TEST_CASE("convergence driver is bitwise reproducible") {
  const ExperimentConfig c = small_config();
  const ConvergenceResult a = run_convergence(c);
  const ConvergenceResult b = run_convergence(c);
  CHECK(records_csv(a.records) == records_csv(b.records));
  REQUIRE(a.records.size() == 4);
  CHECK(a.records[0].particles == 2);
  CHECK(a.records[0].time == doctest::Approx(0.1));
  for (const RunRecord& rec : a.records) CHECK(rec.trace_err > 0.0);
  CHECK(a.hartree.max_mass_drift <= 1e-10);
}

TEST_CASE("CSV output") {
  RunRecord r;
  r.particles = 3;
  r.time = 0.5;
  r.trace_err = 0.25;
  const std::string csv = records_csv({r});
  CHECK(csv.rfind("N,t,trace_err,hs_err,e2_norm,e_minus_e2_norm,energy_drift,sym_defect,boundary_mass\n", 0) == 0);
  CHECK(csv.find("3,0.5,0.25,nan") != std::string::npos);
  CHECK(records_k2_csv({r}).rfind("N,t,trace_err_k2,hs_err_k2\n", 0) == 0);
  CHECK(format_number(kMissing) == "nan");
  CHECK(format_number(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_number(0.1) == "0.1");
}

TEST_CASE("status algebra") {
  CHECK(exit_code(Status::pass) == 0);
  CHECK(exit_code(Status::fail) == 1);
  CHECK(exit_code(Status::inconclusive) == 2);
  CHECK(combine(Status::pass, Status::inconclusive) == Status::inconclusive);
  CHECK(combine(Status::inconclusive, Status::fail) == Status::fail);
  CHECK(to_string(Status::inconclusive) == "inconclusive");
  CrossReport rep;
  CHECK(rep.overall() == Status::pass);
}

TEST_CASE("cross validation on a small lattice") {
  ExperimentConfig c = default_config();
  c.fock.cutoff = 6;
  c.fock.check_times = {0.1};
  c.fock.residual_time = 0.1;
  c.fock.moment_time = 0.1;
  c.fock.dt = 1e-2;
  c.fock.moment_couplings = {8, 16};
  c.fock.residual_couplings = {8, 16};
  c.fock.probe_trials = 2;
  c.combinatorics.fock_check_cutoff = 40;

  SUBCASE("without interaction every item is clean") {
    c.potential = PotentialSpec::zero();
    const CrossReport r = cross_validate(c);
    for (const ReportItem& item : r.items) {
      if (item.name.find("(c)") != std::string::npos) continue;  // R_y vanishes identically
      CHECK_MESSAGE(item.status == Status::pass, item.name);
    }
  }
  SUBCASE("a cutoff that is too small is reported as inconclusive") {
    c.fock.cutoff = 3;
    c.fock.check_times = {1.0};
    c.fock.residual_time = 1.0;
    c.fock.moment_time = 1.0;
    c.potential = PotentialSpec::gaussian(10.0, 1.0);
    const CrossReport r = cross_validate(c);
    bool any = false;
    for (const ReportItem& item : r.items) any = any || item.status == Status::inconclusive;
    CHECK(any);
    CHECK(r.overall() != Status::pass);
  }
}

TEST_CASE("combinatorics items and E2 scaling") {
  const ExperimentConfig c = default_config();
  for (const ReportItem& item : combinatorics_items(c)) CHECK_MESSAGE(item.status == Status::pass, item.name);
  ExperimentConfig e = c;
  e.e2_time = 0.5;
  const E2Scaling s = e2_scaling(e);
  CHECK(s.scaled.size() == 4);
  CHECK(s.spread <= 0.1);
}
